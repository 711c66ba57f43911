"""
Run configuration models
Validated views of the flat `section.key = value` config
"""

from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_core import PydanticCustomError

from ..config import DEFAULT_SUBGRAPH_CAP
from ..errors import ConfigError

Assumption = Literal["cwa", "rs-powa"]
SamplerMode = Literal["standard", "repaint"]
TrainMode = Literal["support_query", "whole_graph"]
Resolution = Literal["threshold", "bernoulli"]
SnapshotFormat = Literal["tsv", "dot"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


def _existing_path(value: Path) -> Path:
    if not Path(value).is_file():
        raise ValueError("path does not exist")
    return Path(value)


def _snapshot_range_error(field: str, steps: List[int], total: int) -> Optional[PydanticCustomError]:
    bad = [k for k in steps if not 0 <= k <= total]
    if not bad:
        return None
    return PydanticCustomError(
        "snapshot_range",
        "snapshot steps {bad} outside [0, {total}]",
        {"field": field, "bad": ",".join(str(k) for k in bad), "total": total},
    )


def config_error(error: ValidationError) -> ConfigError:
    """First validation failure as a ConfigError naming the dotted field"""
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or first.get("ctx", {}).get("field", "config")
    return ConfigError(field, first["msg"])


class DataConfig(_Section):
    train: Path
    valid: Path
    test: Path

    @field_validator("train", "valid", "test")
    @classmethod
    def _paths_exist(cls, value: Path) -> Path:
        return _existing_path(value)


class ModelConfig(_Section):
    dim: int = Field(16, gt=0)
    blocks: int = Field(3, ge=1)
    rce_layers: int = Field(2, ge=0)

    @field_validator("dim")
    @classmethod
    def _even_dim(cls, value: int) -> int:
        if value % 2:
            raise ValueError("must be even")
        return value


class DiffusionConfig(_Section):
    steps: int = Field(20, ge=1)


class TrainSection(_Section):
    lr: float = Field(1e-3, gt=0)
    epochs: int = Field(50, ge=1)
    patience: int = Field(10, ge=1)
    rho: float = Field(0.8, gt=0, lt=1)
    n_s: int = Field(100, ge=1)
    cap: int = Field(DEFAULT_SUBGRAPH_CAP, ge=2)
    weighted_loss: bool = True
    exclude_known: bool = True
    balanced_split: bool = True
    mode: TrainMode = "support_query"
    resume: Optional[Path] = None

    @field_validator("resume", mode="before")
    @classmethod
    def _blank_is_none(cls, value):
        return value or None

    @field_validator("resume")
    @classmethod
    def _resume_exists(cls, value: Optional[Path]) -> Optional[Path]:
        return None if value is None else _existing_path(value)

    @model_validator(mode="after")
    def _patience_within_epochs(self) -> "TrainSection":
        if self.patience > self.epochs:
            raise ValueError("patience must not exceed epochs")
        return self


def _split_csv(value):
    if isinstance(value, str):
        return [int(part) for part in value.replace(" ", "").split(",") if part]
    return value


class SampleSection(_Section):
    gamma: float = Field(0.999, gt=0, lt=1)
    mode: SamplerMode = "standard"
    resolution: Resolution = "threshold"
    snapshot_steps: List[int] = Field(default_factory=list)
    snapshot_format: SnapshotFormat = "tsv"

    @field_validator("snapshot_steps", mode="before")
    @classmethod
    def _parse_steps(cls, value):
        return _split_csv(value)


class EvalSection(_Section):
    assumption: Assumption = "cwa"
    similarity: str = "default"
    theta: float = Field(0.5, ge=0, le=1)


class RunSection(_Section):
    seed: int = Field(0, ge=0)
    out: Path = Path("runs/default")


class TrainConfig(BaseModel):
    """Everything the training loop needs, flattened from the run config"""
    lr: float = Field(1e-3, gt=0)
    epochs: int = Field(50, ge=1)
    patience: int = Field(10, ge=1)
    rho: float = Field(0.8, gt=0, lt=1)
    n_s: int = Field(100, ge=1)
    cap: int = Field(DEFAULT_SUBGRAPH_CAP, ge=2)
    steps: int = Field(20, ge=1)
    gamma: float = Field(0.999, gt=0, lt=1)
    dim: int = Field(16, gt=0)
    blocks: int = Field(3, ge=1)
    rce_layers: int = Field(2, ge=0)
    seed: int = Field(0, ge=0)
    weighted_loss: bool = True
    exclude_known: bool = True
    balanced_split: bool = True
    mode: TrainMode = "support_query"

    @model_validator(mode="after")
    def _patience_within_epochs(self) -> "TrainConfig":
        if self.patience > self.epochs:
            raise ValueError("patience must not exceed epochs")
        return self


class SamplerConfig(BaseModel):
    steps: int = Field(20, ge=1)
    gamma: float = Field(0.999, gt=0, lt=1)
    mode: SamplerMode = "standard"
    resolution: Resolution = "threshold"
    snapshot_steps: List[int] = Field(default_factory=list)
    snapshot_format: SnapshotFormat = "tsv"

    @field_validator("snapshot_steps", mode="before")
    @classmethod
    def _parse_steps(cls, value):
        return _split_csv(value)

    @model_validator(mode="after")
    def _steps_in_range(self) -> "SamplerConfig":
        error = _snapshot_range_error("sample.snapshot_steps", self.snapshot_steps, self.steps)
        if error is not None:
            raise error
        return self


class RunConfig(_Section):
    data: DataConfig
    model: ModelConfig = Field(default_factory=ModelConfig)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    train: TrainSection = Field(default_factory=TrainSection)
    sample: SampleSection = Field(default_factory=SampleSection)
    eval: EvalSection = Field(default_factory=EvalSection)
    run: RunSection = Field(default_factory=RunSection)

    @model_validator(mode="after")
    def _snapshots_within_steps(self) -> "RunConfig":
        error = _snapshot_range_error("sample.snapshot_steps", self.sample.snapshot_steps, self.diffusion.steps)
        if error is not None:
            raise error
        return self

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            **self.train.model_dump(exclude={"resume"}),
            steps=self.diffusion.steps,
            gamma=self.sample.gamma,
            dim=self.model.dim,
            blocks=self.model.blocks,
            rce_layers=self.model.rce_layers,
            seed=self.run.seed,
        )

    def sampler_config(self, steps: Optional[int] = None) -> SamplerConfig:
        return SamplerConfig(steps=steps or self.diffusion.steps, **self.sample.model_dump())

    def render(self) -> List[str]:
        """Resolved flat record, one `section.key = value` line per effective setting"""
        lines = []
        for section, values in self.model_dump(mode="json").items():
            for key, value in values.items():
                if isinstance(value, list):
                    value = ",".join(str(v) for v in value)
                elif value is None:
                    value = ""
                elif isinstance(value, bool):
                    value = str(value).lower()
                lines.append(f"{section}.{key} = {value}")
        return lines

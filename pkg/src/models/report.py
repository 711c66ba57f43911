"""
Report and artifact header models
"""

from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field


class MetricsReport(BaseModel):
    """Triple counts and set-level scores under one world assumption"""
    t_pred: int
    t_wa: int
    t_wa_plus: int
    t_test: int
    jprecision: float = Field(ge=0.0, le=1.0)
    strecall: float = Field(ge=0.0, le=1.0)
    f_tsp: float = Field(ge=0.0, le=1.0)
    assumption: Literal["CWA", "RS-POWA"]
    unresolved: int = 0

    def to_record(self) -> List[str]:
        """Human-readable flat key-value lines"""
        return [f"{key} = {value}" for key, value in self.model_dump().items()]

    def to_json(self) -> str:
        return self.model_dump_json()


class ArraySpec(BaseModel):
    name: str
    shape: Tuple[int, ...]


class CheckpointHeader(BaseModel):
    version: int
    dim: int
    steps: int
    blocks: int
    rce_layers: int
    n_relations: int
    gamma: float
    rho: float
    n_s: int
    cap: int
    seed: int
    mode: Literal["support_query", "whole_graph"]
    fingerprint: str
    epoch: int = 0
    val_f_tsp: Optional[float] = None
    optimizer_step: int = 0

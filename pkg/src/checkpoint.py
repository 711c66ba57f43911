"""
Checkpoint persistence
Binary layout: magic, version, JSON header, fixed-width array table, float32 little-endian payload
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import ValidationError

from .config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from .denoiser import DenoiserParams, parameter_shapes
from .errors import CorruptCheckpoint, DatasetMismatch, IoError
from .kg.core import Vocab
from .models import ArraySpec, CheckpointHeader

logger = logging.getLogger(__name__)

_PREAMBLE = struct.Struct("<4sHI")  # magic, version, header length
_COUNT = struct.Struct("<I")
_NAME_LEN = struct.Struct("<H")
_NDIM = struct.Struct("<B")
_DIM = struct.Struct("<I")


@dataclass
class OptimizerState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class Checkpoint:
    header: CheckpointHeader
    params: DenoiserParams
    optimizer: OptimizerState = field(default_factory=OptimizerState)


def _array_table(params: DenoiserParams) -> List[ArraySpec]:
    return [ArraySpec(name=name, shape=tuple(params[name].shape)) for name in params]


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    header = ckpt.header.model_copy(update={"optimizer_step": ckpt.optimizer.step})
    header_bytes = header.model_dump_json().encode("utf-8")
    table = _array_table(ckpt.params)

    chunks = [_PREAMBLE.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)), header_bytes]
    chunks.append(_COUNT.pack(len(table)))
    for spec in table:
        name = spec.name.encode("utf-8")
        chunks.append(_NAME_LEN.pack(len(name)) + name + _NDIM.pack(len(spec.shape)))
        chunks.extend(_DIM.pack(d) for d in spec.shape)
    has_moments = bool(ckpt.optimizer.m)
    chunks.append(_NDIM.pack(int(has_moments)))
    groups = [ckpt.params.arrays] + ([ckpt.optimizer.m, ckpt.optimizer.v] if has_moments else [])
    for group in groups:
        for spec in table:
            chunks.append(np.ascontiguousarray(group[spec.name], dtype="<f4").tobytes())

    try:
        Path(path).write_bytes(b"".join(chunks))
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}") from e
    logger.info(f"✅ Saved checkpoint to {path} ({len(table)} arrays)")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CorruptCheckpoint(f"checkpoint truncated at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: struct.Struct) -> Tuple:
        return fmt.unpack(self.take(fmt.size))


def load_checkpoint(path, vocab: Optional[Vocab] = None) -> Checkpoint:
    """Read and verify a checkpoint; `vocab` enables the dataset fingerprint check"""
    try:
        reader = _Reader(Path(path).read_bytes())
    except OSError as e:
        raise IoError(f"cannot read checkpoint {path}: {e}") from e

    magic, version, header_len = reader.unpack(_PREAMBLE)
    if magic != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint(f"{path} is not a checkpoint file")
    if version != CHECKPOINT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint version {version}")
    try:
        header = CheckpointHeader.model_validate_json(reader.take(header_len))
    except ValidationError as e:
        raise CorruptCheckpoint(f"malformed checkpoint header: {e}") from e

    (count,) = reader.unpack(_COUNT)
    table: List[ArraySpec] = []
    for _ in range(count):
        (name_len,) = reader.unpack(_NAME_LEN)
        name = reader.take(name_len).decode("utf-8", errors="replace")
        (ndim,) = reader.unpack(_NDIM)
        shape = tuple(reader.unpack(_DIM)[0] for _ in range(ndim))
        table.append(ArraySpec(name=name, shape=shape))

    expected = parameter_shapes(header.dim, header.n_relations, header.blocks, header.rce_layers)
    if {spec.name: spec.shape for spec in table} != expected:
        raise CorruptCheckpoint("array table does not match the recorded hyperparameters")

    (has_moments,) = reader.unpack(_NDIM)

    def read_group() -> Dict[str, np.ndarray]:
        group = {}
        for spec in table:
            size = int(np.prod(spec.shape, dtype=np.int64)) * 4
            values = np.frombuffer(reader.take(size), dtype="<f4").reshape(spec.shape)
            group[spec.name] = values.astype(np.float64)
        return group

    arrays = read_group()
    optimizer = OptimizerState(step=header.optimizer_step)
    if has_moments:
        optimizer.m = read_group()
        optimizer.v = read_group()
    if reader.offset != len(reader.data):
        raise CorruptCheckpoint(f"{len(reader.data) - reader.offset} trailing bytes after payload")

    if vocab is not None and vocab.fingerprint() != header.fingerprint:
        raise DatasetMismatch("checkpoint was trained on a different vocabulary")

    params = DenoiserParams(header.dim, header.n_relations, header.blocks, header.rce_layers, arrays)
    if not params.is_finite():
        raise CorruptCheckpoint("checkpoint contains non-finite parameters")
    logger.info(f"Loaded checkpoint {path} (epoch {header.epoch}, mode {header.mode})")
    return Checkpoint(header=header, params=params, optimizer=optimizer)

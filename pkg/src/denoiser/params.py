"""
Learnable parameters of the structure-aware denoiser
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, Tuple

import numpy as np

Shape = Tuple[int, ...]


def parameter_shapes(dim: int, n_relations: int, n_blocks: int, n_rce_layers: int) -> Dict[str, Shape]:
    """Ordered name -> shape map; the order is the checkpoint order"""
    a, channels = dim, n_relations + 1
    shapes: Dict[str, Shape] = {"relation_embeddings": (2 * n_relations, a)}
    for layer in range(n_rce_layers):
        shapes[f"rce.{layer}.relation_weights"] = (2 * n_relations, a, a)
        shapes[f"rce.{layer}.self_weight"] = (a, a)
    shapes["fusion.edge_weight"] = (2 * channels, a)
    shapes["fusion.edge_bias"] = (a,)
    shapes["fusion.weight"] = (2 * a, a)
    shapes["fusion.bias"] = (a,)
    shapes["time.weight"] = (a, a)
    shapes["time.bias"] = (a,)
    for block in range(n_blocks):
        prefix = f"block.{block}"
        shapes[f"{prefix}.modulation.weight"] = (a, 6 * a)
        shapes[f"{prefix}.modulation.bias"] = (6 * a,)
        shapes[f"{prefix}.attn.query"] = (a, a)
        shapes[f"{prefix}.attn.key"] = (a, a)
        shapes[f"{prefix}.attn.value"] = (a, a)
        shapes[f"{prefix}.attn.out_weight"] = (a, a)
        shapes[f"{prefix}.attn.out_bias"] = (a,)
        shapes[f"{prefix}.attn.relation_bias"] = (channels,)
        shapes[f"{prefix}.mlp.w1"] = (a, 4 * a)
        shapes[f"{prefix}.mlp.b1"] = (4 * a,)
        shapes[f"{prefix}.mlp.w2"] = (4 * a, a)
        shapes[f"{prefix}.mlp.b2"] = (a,)
    shapes["decoder.w1"] = (2 * a, 4 * a)
    shapes["decoder.b1"] = (4 * a,)
    shapes["decoder.w2"] = (4 * a, channels)
    shapes["decoder.b2"] = (channels,)
    return shapes


@dataclass
class DenoiserParams:
    dim: int
    n_relations: int
    n_blocks: int
    n_rce_layers: int
    arrays: Dict[str, np.ndarray]
    grads: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def channels(self) -> int:
        return self.n_relations + 1

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.arrays)

    def shapes(self) -> Dict[str, Shape]:
        return parameter_shapes(self.dim, self.n_relations, self.n_blocks, self.n_rce_layers)

    def zero_grads(self) -> Dict[str, np.ndarray]:
        self.grads = {name: np.zeros_like(value) for name, value in self.arrays.items()}
        return self.grads

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(
            self.dim, self.n_relations, self.n_blocks, self.n_rce_layers,
            {name: value.copy() for name, value in self.arrays.items()},
        )

    def rounded_to_float32(self) -> "DenoiserParams":
        """Copy whose values are exactly what a checkpoint stores"""
        rounded = self.copy()
        for name, value in rounded.arrays.items():
            rounded.arrays[name] = value.astype("<f4").astype(np.float64)
        return rounded

    def is_finite(self) -> bool:
        return all(np.isfinite(value).all() for value in self.arrays.values())

    @classmethod
    def initialize(
        cls,
        dim: int,
        n_relations: int,
        n_blocks: int = 3,
        n_rce_layers: int = 2,
        seed: int = 0,
        zero_gates: bool = True,
    ) -> "DenoiserParams":
        """Uniform(-1/sqrt(a), 1/sqrt(a)) matrices, zero biases; adaLN gates start at 0"""
        rng = np.random.default_rng(seed)
        limit = 1.0 / math.sqrt(dim)
        arrays: Dict[str, np.ndarray] = {}
        for name, shape in parameter_shapes(dim, n_relations, n_blocks, n_rce_layers).items():
            if len(shape) >= 2:
                arrays[name] = rng.uniform(-limit, limit, shape)
            else:
                arrays[name] = np.zeros(shape)
        if zero_gates:
            for block in range(n_blocks):
                prefix = f"block.{block}.modulation"
                for gate in (2, 5):
                    arrays[f"{prefix}.weight"][:, gate * dim:(gate + 1) * dim] = 0.0
                    arrays[f"{prefix}.bias"][gate * dim:(gate + 1) * dim] = 0.0
        return cls(dim, n_relations, n_blocks, n_rce_layers, arrays)

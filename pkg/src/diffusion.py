"""
Absorbing-state discrete diffusion over relational edges
Noise schedule, transition matrices, forward corruption and the reverse per-cell posterior
"""

import logging
import zlib
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidProbability, InvalidStep, InvalidSteps
from .kg.core import AdjacencyState

logger = logging.getLogger(__name__)


class CellState(str, Enum):
    PRESENT = "present"
    MASKED = "masked"


@dataclass(frozen=True)
class NoiseSchedule:
    """Linear schedule alpha[t] = 1 - t/T, kept as exact fractions and float64"""
    total_steps: int
    exact_alpha: Tuple[Fraction, ...]

    @property
    def alpha(self) -> np.ndarray:
        return np.array([float(a) for a in self.exact_alpha], dtype=np.float64)

    def alpha_at(self, t: int) -> float:
        return float(self.exact_alpha[t])

    def step_survival(self, t: int) -> float:
        """alpha[t] / alpha[t-1], defined as 0 once alpha[t-1] reaches 0"""
        previous = self.exact_alpha[t - 1]
        if previous == 0:
            return 0.0
        return float(self.exact_alpha[t] / previous)

    def unmask_probability(self, t: int) -> float:
        """u(t) = (alpha[t-1] - alpha[t]) / (1 - alpha[t]); 1/t for the linear schedule"""
        if not 1 <= t <= self.total_steps:
            raise InvalidStep(f"t must lie in [1, {self.total_steps}], got {t}")
        a_prev, a_t = self.exact_alpha[t - 1], self.exact_alpha[t]
        return float((a_prev - a_t) / (1 - a_t))


def make_schedule(t_total: int) -> NoiseSchedule:
    if t_total < 1:
        raise InvalidSteps(f"total steps must be >= 1, got {t_total}")
    exact = tuple(1 - Fraction(t, t_total) for t in range(t_total + 1))
    return NoiseSchedule(total_steps=t_total, exact_alpha=exact)


@dataclass(frozen=True)
class TransitionMatrix:
    """2 x 2 row-stochastic matrix over (present, M); the M row is absorbing"""
    matrix: np.ndarray

    def __matmul__(self, other: "TransitionMatrix") -> "TransitionMatrix":
        return TransitionMatrix(self.matrix @ other.matrix)


def _keep_matrix(keep: float) -> TransitionMatrix:
    return TransitionMatrix(np.array([[keep, 1.0 - keep], [0.0, 1.0]], dtype=np.float64))


def transition_matrix(schedule: NoiseSchedule, t: int, cumulative: bool = False) -> TransitionMatrix:
    """Single-step Q_t (keep prob alpha[t]/alpha[t-1]) or cumulative Q-bar_t (keep prob alpha[t])"""
    low = 0 if cumulative else 1
    if not low <= t <= schedule.total_steps:
        raise InvalidStep(f"t must lie in [{low}, {schedule.total_steps}], got {t}")
    if cumulative:
        return _keep_matrix(schedule.alpha_at(t))
    return _keep_matrix(schedule.step_survival(t))


class CellRng:
    """Counter-addressed randomness: the draw for cell (i, j, k) at step t is a pure
    function of (seed, key, stream, t, i, j, k), whatever the iteration order."""

    def __init__(self, seed: int, *key: int):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)

    def _generator(self, stream: str, t: int) -> np.random.Generator:
        stream_id = zlib.crc32(stream.encode("utf-8"))
        return np.random.default_rng(np.random.SeedSequence([self.seed, *self.key, stream_id, int(t)]))

    def uniform(self, stream: str, t: int, shape: Sequence[int]) -> np.ndarray:
        return self._generator(stream, t).random(tuple(shape))

    def timestep(self, total_steps: int) -> int:
        """Uniform draw from {1..T}"""
        return int(self._generator("timestep", 0).integers(1, total_steps + 1))

    def child(self, *key: int) -> "CellRng":
        return CellRng(self.seed, *self.key, *key)


def forward_sample(adj: AdjacencyState, t: int, schedule: NoiseSchedule, rng: CellRng) -> AdjacencyState:
    """q(G_t | G_0): each present cell survives with probability alpha[t], else becomes M"""
    if not 0 <= t <= schedule.total_steps:
        raise InvalidStep(f"t must lie in [0, {schedule.total_steps}], got {t}")
    draws = rng.uniform("forward", t, adj.present.shape)
    survived = adj.present & (draws < schedule.alpha_at(t))
    return adj.with_present(survived)


def reverse_cell_distribution(e_t: CellState, p_exist: float, t: int, schedule: NoiseSchedule) -> np.ndarray:
    """Posterior over (present, M) for one cell at step t-1 given its state at t.

    A present cell stays present; a masked cell is unmasked with probability
    u(t) * p_exist.
    """
    if not 0.0 <= p_exist <= 1.0 or not np.isfinite(p_exist):
        raise InvalidProbability(f"p_exist must lie in [0, 1], got {p_exist}")
    u = schedule.unmask_probability(t)
    if CellState(e_t) is CellState.PRESENT:
        return np.array([1.0, 0.0])
    p_present = u * p_exist
    return np.array([p_present, 1.0 - p_present])

"""
Reverse-process sampling
Iterative unmasking of a query graph conditioned on a support graph, the repaint variant and snapshot export
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .config import KGDIFF_THREADS
from .denoiser import DenoiserParams, denoise
from .diffusion import CellRng, NoiseSchedule, forward_sample
from .errors import IoError, WrongCheckpointMode
from .kg.core import AdjacencyState, Graph, Triple, Vocab, empty_adjacency, to_adjacency
from .kg.data import Subgraph
from .models import SamplerConfig

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryFrame:
    step: int  # reverse steps taken so far
    t: int
    state: AdjacencyState


@dataclass
class SampleResult:
    triples: Set[Triple]
    trajectory: List[TrajectoryFrame] = field(default_factory=list)
    pending: int = 0  # masked cells whose last resolution draw did not fire


def _support_entities(support: Graph) -> Tuple[int, ...]:
    return tuple(sorted({t.head for t in support.triples} | {t.tail for t in support.triples}))


def _reverse_step(
    present: np.ndarray,
    candidates: np.ndarray,
    probs: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    cfg: SamplerConfig,
    rng: CellRng,
) -> Tuple[np.ndarray, int]:
    """One step t -> t-1: committed cells stay, masked candidates resolve with probability u(t)"""
    n_rel = present.shape[2]
    real = probs[:, :, :n_rel]
    no_edge_wins = probs.argmax(axis=2) == n_rel

    masked = candidates & ~present
    fires = rng.uniform("resolve", t, present.shape) < schedule.unmask_probability(t)
    if cfg.resolution == "bernoulli":
        accept = rng.uniform("bernoulli", t, present.shape) < real
    else:
        accept = real > cfg.gamma
    commit = masked & fires & accept & ~no_edge_wins[:, :, None]
    pending = int((masked & ~fires).sum())
    return present | commit, pending


def _record(trajectory: List[TrajectoryFrame], record: Set[int], step: int, t: int, state: AdjacencyState):
    if step in record:
        trajectory.append(TrajectoryFrame(step=step, t=t, state=state.copy()))


def sample(
    support: Graph,
    params: DenoiserParams,
    schedule: NoiseSchedule,
    cfg: SamplerConfig,
    rng: CellRng,
    entity_list: Optional[Sequence[int]] = None,
    record: Optional[Iterable[int]] = None,
) -> SampleResult:
    """Generate the query triples of one subgraph, starting from an edgeless query graph.

    `record` lists the reverse-step counts k (0..T) whose states are kept;
    frame k holds the query after k steps. Support triples are never emitted.
    """
    entity_list = tuple(entity_list) if entity_list is not None else _support_entities(support)
    record = set(cfg.snapshot_steps if record is None else record)
    support_adj = to_adjacency(support, entity_list, cap=len(entity_list))
    candidates = ~support_adj.present
    state = empty_adjacency(entity_list, params.n_relations)

    total = schedule.total_steps
    trajectory: List[TrajectoryFrame] = []
    pending = 0
    _record(trajectory, record, 0, total, state)
    for t in range(total, 0, -1):
        output = denoise(state, support_adj, t, params)
        present, pending = _reverse_step(state.present, candidates, output.probs, t, schedule, cfg, rng)
        state = state.with_present(present)
        _record(trajectory, record, total - t + 1, t - 1, state)
        logger.debug(f"t={t} committed={state.count()} pending={pending}")

    return SampleResult(triples=state.triples(), trajectory=trajectory, pending=pending)


def sample_repaint(
    known: Graph,
    params: DenoiserParams,
    schedule: NoiseSchedule,
    cfg: SamplerConfig,
    rng: CellRng,
    entity_list: Optional[Sequence[int]] = None,
    checkpoint_mode: str = "whole_graph",
    record: Optional[Iterable[int]] = None,
) -> SampleResult:
    """Reconstruct the whole graph unconditionally, re-imposing a noised copy of the known edges each step.

    Known cells at t-1 come from the forward process applied to the clean
    known graph; the remaining cells come from the reverse model. Known edges
    are excluded from the output.
    """
    if checkpoint_mode != "whole_graph":
        raise WrongCheckpointMode(f"repaint sampling needs a whole_graph checkpoint, got {checkpoint_mode}")
    entity_list = tuple(entity_list) if entity_list is not None else _support_entities(known)
    record = set(cfg.snapshot_steps if record is None else record)
    known_adj = to_adjacency(known, entity_list, cap=len(entity_list))
    mask = known_adj.present
    no_support = empty_adjacency(entity_list, params.n_relations)
    everywhere = np.ones_like(mask)
    known_rng = rng.child(1)

    total = schedule.total_steps
    state = forward_sample(known_adj, total, schedule, known_rng)
    trajectory: List[TrajectoryFrame] = []
    pending = 0
    _record(trajectory, record, 0, total, state)
    for t in range(total, 0, -1):
        output = denoise(state, no_support, t, params)
        unknown, pending = _reverse_step(state.present, everywhere, output.probs, t, schedule, cfg, rng)
        known_prev = forward_sample(known_adj, t - 1, schedule, known_rng).present
        state = state.with_present(np.where(mask, known_prev, unknown))
        _record(trajectory, record, total - t + 1, t - 1, state)

    predicted = state.with_present(state.present & ~mask)
    return SampleResult(triples=predicted.triples(), trajectory=trajectory, pending=pending)


@dataclass
class GraphPrediction:
    triples: Set[Triple]
    trajectories: List[Tuple[int, List[TrajectoryFrame]]]
    pending: int = 0


def predict_graph(
    subgraphs: Sequence[Subgraph],
    params: DenoiserParams,
    schedule: NoiseSchedule,
    cfg: SamplerConfig,
    seed: int,
    checkpoint_mode: str = "support_query",
    threads: int = KGDIFF_THREADS,
) -> GraphPrediction:
    """Sample every subgraph (its induced triples as support) and unite the predictions in subgraph order"""

    def run(subgraph: Subgraph) -> SampleResult:
        rng = CellRng(seed, subgraph.id)
        if cfg.mode == "repaint":
            return sample_repaint(subgraph.graph, params, schedule, cfg, rng, subgraph.entity_list, checkpoint_mode)
        return sample(subgraph.graph, params, schedule, cfg, rng, subgraph.entity_list)

    if cfg.mode == "repaint" and checkpoint_mode != "whole_graph":
        raise WrongCheckpointMode(f"repaint sampling needs a whole_graph checkpoint, got {checkpoint_mode}")

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, subgraphs))

    triples: Set[Triple] = set()
    trajectories = []
    pending = 0
    for subgraph, result in zip(subgraphs, results):
        triples |= result.triples
        pending += result.pending
        if result.trajectory:
            trajectories.append((subgraph.id, result.trajectory))
    logger.info(f"Predicted {len(triples)} triples over {len(subgraphs)} subgraphs")
    return GraphPrediction(triples=triples, trajectories=trajectories, pending=pending)


def _flag(triple: Triple, ground_truth: Optional[Graph]) -> str:
    if ground_truth is None:
        return "unknown"
    return "correct" if triple in ground_truth else "incorrect"


def _render_tsv(frame: TrajectoryFrame, vocab: Vocab, ground_truth: Optional[Graph]) -> str:
    lines = []
    for triple in sorted(frame.state.triples()):
        head, relation, tail = vocab.decode(triple)
        lines.append(f"{head}\t{relation}\t{tail}\t{_flag(triple, ground_truth)}")
    return "".join(line + "\n" for line in lines)


def _dot_id(name: str) -> str:
    return '"' + name.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _render_dot(frame: TrajectoryFrame, vocab: Vocab, ground_truth: Optional[Graph]) -> str:
    colors = {"correct": "green", "incorrect": "red", "unknown": "black"}
    lines = [f"digraph step_{frame.step} {{"]
    for entity in frame.state.entity_list:
        lines.append(f"  {_dot_id(vocab.entity_name(entity))};")
    for triple in sorted(frame.state.triples()):
        head, relation, tail = vocab.decode(triple)
        color = colors[_flag(triple, ground_truth)]
        lines.append(f"  {_dot_id(head)} -> {_dot_id(tail)} [label={_dot_id(relation)}, color={color}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_snapshots(
    trajectory: Sequence[TrajectoryFrame],
    vocab: Vocab,
    directory,
    ground_truth: Optional[Graph] = None,
    fmt: str = "tsv",
    prefix: str = "step",
) -> List[Path]:
    """Write one file per frame; edges are flagged correct/incorrect against `ground_truth`"""
    render = _render_dot if fmt == "dot" else _render_tsv
    directory = Path(directory)
    written: List[Path] = []
    try:
        if trajectory:
            directory.mkdir(parents=True, exist_ok=True)
        for frame in trajectory:
            path = directory / f"{prefix}_{frame.step:03d}.{fmt}"
            path.write_text(render(frame, vocab, ground_truth), encoding="utf-8")
            written.append(path)
    except OSError as e:
        raise IoError(f"cannot write snapshots to {directory}: {e}") from e
    return written

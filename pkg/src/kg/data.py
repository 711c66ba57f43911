"""
Dataset ingestion and meta-task generation
Loads TSV splits, partitions a graph into overlapping subgraphs and splits them into support/query tasks
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from ..errors import InvalidRho, IoError, KGDiffError, ParseError
from .core import Graph, RawTriple, Triple, Vocab, build_vocab

logger = logging.getLogger(__name__)

__all__ = [
    "DatasetBundle",
    "Subgraph",
    "Task",
    "load_tsv",
    "load_dataset",
    "partition_graph",
    "coverage_report",
    "relation_balanced_split",
    "random_split",
    "task_seed",
    "generate_tasks",
    "whole_graph_tasks",
]


@dataclass(frozen=True)
class DatasetBundle:
    vocab: Vocab
    train: Graph
    valid: Graph
    test: Graph


@dataclass(frozen=True)
class Subgraph:
    id: int
    entity_list: Tuple[int, ...]
    graph: Graph

    @property
    def triples(self):
        return self.graph.triples


@dataclass(frozen=True)
class Task:
    """One (support, query) split of a subgraph; both graphs share the entity list"""
    support: Graph
    query: Graph
    entity_list: Tuple[int, ...]
    subgraph_id: int
    seed: int


def load_tsv(path) -> List[RawTriple]:
    """Read head<TAB>relation<TAB>tail rows; blank lines skipped, LF or CRLF endings"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise IoError(f"cannot read triple file {path}: {e}") from e

    rows: List[RawTriple] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise ParseError(line_no, f"expected 3 TAB-separated fields, found {len(fields)}")
        if not all(fields):
            raise ParseError(line_no, "empty entity or relation name")
        rows.append((fields[0], fields[1], fields[2]))
    logger.debug(f"Loaded {len(rows)} rows from {path}")
    return rows


def load_dataset(train_path, valid_path, test_path) -> DatasetBundle:
    """Load the three splits over one vocabulary built from their union (train first)"""
    train_rows = load_tsv(train_path)
    valid_rows = load_tsv(valid_path)
    test_rows = load_tsv(test_path)
    vocab = build_vocab(train_rows + valid_rows + test_rows)

    train = Graph(vocab, (vocab.encode(r) for r in train_rows))
    valid = Graph(vocab, (vocab.encode(r) for r in valid_rows))
    test = Graph(vocab, (vocab.encode(r) for r in test_rows))

    overlap = len(train.triples & test.triples) + len(train.triples & valid.triples) + len(valid.triples & test.triples)
    if overlap:
        logger.warning(f"⚠️ Dataset splits share {overlap} triples; splits are used as given")

    logger.info(
        f"Dataset: {vocab.n_entities} entities, {vocab.n_relations} relations, "
        f"train={len(train)} valid={len(valid)} test={len(test)}"
    )
    return DatasetBundle(vocab=vocab, train=train, valid=valid, test=test)


def _induced(graph: Graph, members: Sequence[int]) -> Graph:
    keep = set(members)
    triples = [t for entity in members for t in graph.outgoing.get(entity, ()) if t.tail in keep]
    return Graph(graph.vocab, triples)


def partition_graph(graph: Graph, cap: int, seed: int, entities: Optional[Sequence[int]] = None) -> List[Subgraph]:
    """Cover all entities with BFS-grown, possibly overlapping subgraphs of at most `cap` entities.

    Seeds are the least-covered entities (ties broken by a seeded random rank);
    growth follows the undirected skeleton, preferring less-covered neighbors.
    """
    if cap < 2:
        raise KGDiffError(f"subgraph cap must be >= 2, got {cap}")
    universe = list(range(graph.vocab.n_entities)) if entities is None else sorted(set(entities))
    rng = np.random.default_rng(seed)
    rank = {entity: int(r) for entity, r in zip(universe, rng.permutation(len(universe)))}
    coverage: Dict[int, int] = {entity: 0 for entity in universe}
    neighbors = {entity: [v for v in graph.neighbors(entity) if v in coverage] for entity in universe}

    seed_order = sorted(universe, key=lambda e: rank[e])
    subgraphs: List[Subgraph] = []
    cursor = 0
    while cursor < len(seed_order):
        start = seed_order[cursor]
        if coverage[start] > 0:
            cursor += 1
            continue

        members = [start]
        seen = {start}
        frontier = deque([start])
        while frontier and len(members) < cap:
            current = frontier.popleft()
            for nxt in sorted(neighbors[current], key=lambda v: (coverage[v], rank[v])):
                if nxt in seen:
                    continue
                seen.add(nxt)
                members.append(nxt)
                frontier.append(nxt)
                if len(members) >= cap:
                    break

        for entity in members:
            coverage[entity] += 1
        subgraphs.append(Subgraph(id=len(subgraphs), entity_list=tuple(members), graph=_induced(graph, members)))

    logger.info(f"Partitioned {len(universe)} entities into {len(subgraphs)} subgraphs (cap={cap})")
    return subgraphs


def coverage_report(graph: Graph, subgraphs: Sequence[Subgraph]) -> Dict[str, float]:
    """Fraction of triples whose endpoints are co-resident in at least one subgraph"""
    membership: Dict[int, Set[int]] = {}
    for sub in subgraphs:
        for entity in sub.entity_list:
            membership.setdefault(entity, set()).add(sub.id)
    covered = sum(
        1 for t in graph.triples if membership.get(t.head, set()) & membership.get(t.tail, set())
    )
    total = len(graph)
    ratio = covered / total if total else 1.0
    return {
        "triples": total,
        "covered": covered,
        "coverage_ratio": ratio,
        "cross_subgraph_fraction": 1.0 - ratio if total else 0.0,
    }


def _round_half_up(rho: float, n: int) -> int:
    """floor(rho * n + 1/2) in exact arithmetic on the decimal value of rho"""
    return math.floor(Fraction(str(rho)) * n + Fraction(1, 2))


def _check_rho(rho: float) -> None:
    if not 0.0 < rho < 1.0:
        raise InvalidRho(f"rho must lie in (0, 1), got {rho}")


def relation_balanced_split(subgraph: Subgraph, rho: float, rng: np.random.Generator, seed: int = 0) -> Task:
    """Stratify by relation: round-half-up(rho * n_r) triples of each relation go to support.

    Relations with a single triple always go to support.
    """
    _check_rho(rho)
    support: List[Triple] = []
    query: List[Triple] = []
    graph = subgraph.graph
    for relation in sorted(graph.by_relation):
        stratum = graph.by_relation[relation]
        order = rng.permutation(len(stratum))
        n_support = len(stratum) if len(stratum) == 1 else _round_half_up(rho, len(stratum))
        support.extend(stratum[i] for i in order[:n_support])
        query.extend(stratum[i] for i in order[n_support:])
    return Task(
        support=Graph(graph.vocab, support),
        query=Graph(graph.vocab, query),
        entity_list=subgraph.entity_list,
        subgraph_id=subgraph.id,
        seed=seed,
    )


def random_split(subgraph: Subgraph, rho: float, rng: np.random.Generator, seed: int = 0) -> Task:
    """Unstratified split of the whole triple set (ablation of the relation-balanced split)"""
    _check_rho(rho)
    triples = sorted(subgraph.triples)
    order = rng.permutation(len(triples))
    n_support = _round_half_up(rho, len(triples))
    graph = subgraph.graph
    return Task(
        support=Graph(graph.vocab, (triples[i] for i in order[:n_support])),
        query=Graph(graph.vocab, (triples[i] for i in order[n_support:])),
        entity_list=subgraph.entity_list,
        subgraph_id=subgraph.id,
        seed=seed,
    )


def task_seed(seed: int, subgraph_id: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, subgraph_id, index]).generate_state(1)[0])


def generate_tasks(subgraph: Subgraph, rho: float, n_s: int, seed: int, balanced: bool = True) -> List[Task]:
    """N_s independent splits, each with its own derived seed"""
    if n_s < 1:
        raise KGDiffError(f"n_s must be >= 1, got {n_s}")
    split = relation_balanced_split if balanced else random_split
    tasks = []
    for index in range(n_s):
        derived = task_seed(seed, subgraph.id, index)
        tasks.append(split(subgraph, rho, np.random.default_rng(derived), seed=derived))
    return tasks


def whole_graph_tasks(subgraph: Subgraph, n_s: int, seed: int) -> List[Task]:
    """Tasks for unconditional whole-graph reconstruction: empty support, full query"""
    empty = Graph(subgraph.graph.vocab, ())
    return [
        Task(
            support=empty,
            query=subgraph.graph,
            entity_list=subgraph.entity_list,
            subgraph_id=subgraph.id,
            seed=task_seed(seed, subgraph.id, index),
        )
        for index in range(n_s)
    ]

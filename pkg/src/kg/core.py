"""
Core knowledge graph structures
Vocabularies, deduplicated triple stores and dense adjacency views of bounded subgraphs
"""

import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np

from ..config import DEFAULT_SUBGRAPH_CAP
from ..errors import EmptyDataset, InvalidId, InvalidSubset

logger = logging.getLogger(__name__)

RawTriple = Tuple[str, str, str]

__all__ = [
    "RawTriple",
    "Triple",
    "Vocab",
    "Graph",
    "AdjacencyState",
    "FreqTable",
    "build_vocab",
    "graph_from_triples",
    "to_adjacency",
    "empty_adjacency",
    "relation_frequencies",
]


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


@dataclass(frozen=True)
class Vocab:
    """Bidirectional entity/relation name <-> id maps, ids dense in first-occurrence order"""
    entities: Tuple[str, ...]
    relations: Tuple[str, ...]
    entity_counts: Tuple[int, ...] = ()
    relation_counts: Tuple[int, ...] = ()
    _entity_ids: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)
    _relation_ids: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_entity_ids", {name: i for i, name in enumerate(self.entities)})
        object.__setattr__(self, "_relation_ids", {name: i for i, name in enumerate(self.relations)})
        if len(self._entity_ids) != len(self.entities) or len(self._relation_ids) != len(self.relations):
            raise InvalidId("duplicate names in vocabulary")

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def entity_id(self, name: str) -> int:
        try:
            return self._entity_ids[name]
        except KeyError:
            raise InvalidId(f"unknown entity {name!r}") from None

    def relation_id(self, name: str) -> int:
        try:
            return self._relation_ids[name]
        except KeyError:
            raise InvalidId(f"unknown relation {name!r}") from None

    def has_entity(self, name: str) -> bool:
        return name in self._entity_ids

    def has_relation(self, name: str) -> bool:
        return name in self._relation_ids

    def entity_name(self, entity_id: int) -> str:
        return self.entities[entity_id]

    def relation_name(self, relation_id: int) -> str:
        return self.relations[relation_id]

    def encode(self, raw: RawTriple) -> Triple:
        head, relation, tail = raw
        return Triple(self.entity_id(head), self.relation_id(relation), self.entity_id(tail))

    def decode(self, triple: Triple) -> RawTriple:
        return (self.entities[triple.head], self.relations[triple.relation], self.entities[triple.tail])

    def fingerprint(self) -> str:
        """Content hash of the entity and relation lists (order-sensitive)"""
        digest = hashlib.sha256()
        for name in self.entities:
            digest.update(name.encode("utf-8") + b"\x00")
        digest.update(b"\x01")
        for name in self.relations:
            digest.update(name.encode("utf-8") + b"\x00")
        return digest.hexdigest()


def build_vocab(raw_triples: Sequence[RawTriple]) -> Vocab:
    """Assign dense ids in first-occurrence order over (head, relation, tail) rows"""
    if not raw_triples:
        raise EmptyDataset("cannot build a vocabulary from zero triples")
    entity_counts: Dict[str, int] = {}
    relation_counts: Dict[str, int] = {}
    for head, relation, tail in raw_triples:
        entity_counts[head] = entity_counts.get(head, 0) + 1
        relation_counts[relation] = relation_counts.get(relation, 0) + 1
        entity_counts[tail] = entity_counts.get(tail, 0) + 1
    return Vocab(
        entities=tuple(entity_counts),
        relations=tuple(relation_counts),
        entity_counts=tuple(entity_counts.values()),
        relation_counts=tuple(relation_counts.values()),
    )


class Graph:
    """Immutable deduplicated triple set over a vocabulary, with relation and entity indices"""

    def __init__(self, vocab: Vocab, triples: Iterable[Triple]):
        self.vocab = vocab
        unique: Set[Triple] = set()
        for triple in triples:
            triple = Triple(*triple)
            if not (0 <= triple.head < vocab.n_entities and 0 <= triple.tail < vocab.n_entities):
                raise InvalidId(f"entity id out of range in {triple}")
            if not 0 <= triple.relation < vocab.n_relations:
                raise InvalidId(f"relation id out of range in {triple}")
            unique.add(triple)
        self.triples: FrozenSet[Triple] = frozenset(unique)

        by_relation: Dict[int, List[Triple]] = defaultdict(list)
        outgoing: Dict[int, List[Triple]] = defaultdict(list)
        incoming: Dict[int, List[Triple]] = defaultdict(list)
        for triple in sorted(self.triples):
            by_relation[triple.relation].append(triple)
            outgoing[triple.head].append(triple)
            incoming[triple.tail].append(triple)
        self.by_relation: Dict[int, List[Triple]] = dict(by_relation)
        self.outgoing: Dict[int, List[Triple]] = dict(outgoing)
        self.incoming: Dict[int, List[Triple]] = dict(incoming)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.vocab.entities == other.vocab.entities and self.triples == other.triples

    def __hash__(self) -> int:
        return hash(self.triples)

    def __len__(self) -> int:
        return len(self.triples)

    def __contains__(self, triple: Triple) -> bool:
        return triple in self.triples

    def __iter__(self):
        return iter(sorted(self.triples))

    def neighbors(self, entity: int) -> Set[int]:
        """Neighbors over the undirected skeleton"""
        found = {t.tail for t in self.outgoing.get(entity, ())}
        found.update(t.head for t in self.incoming.get(entity, ()))
        return found

    def induced(self, entities: Iterable[int]) -> "Graph":
        """Subgraph with every triple whose endpoints both lie in `entities`"""
        keep = set(entities)
        return Graph(self.vocab, (t for t in self.triples if t.head in keep and t.tail in keep))

    def union(self, other: "Graph") -> "Graph":
        return Graph(self.vocab, self.triples | other.triples)


def graph_from_triples(vocab: Vocab, triples: Iterable[Triple]) -> Graph:
    return Graph(vocab, triples)


@dataclass
class AdjacencyState:
    """Dense n x n x b edge-state tensor for one subgraph.

    `present[i, j, k]` is True when relation k holds from entity_list[i] to
    entity_list[j]; False encodes the absent/masked state M. The no-edge
    channel (index b-1) is never stored, it is derived from the real channels.
    """
    entity_list: Tuple[int, ...]
    present: np.ndarray

    @property
    def n(self) -> int:
        return len(self.entity_list)

    @property
    def n_relations(self) -> int:
        return self.present.shape[2]

    @property
    def channels(self) -> int:
        return self.n_relations + 1

    def no_edge(self) -> np.ndarray:
        return ~self.present.any(axis=2)

    def multi_hot(self) -> np.ndarray:
        """n x n x b float tensor: real channels then the derived no-edge channel"""
        return np.concatenate(
            [self.present.astype(np.float64), self.no_edge()[:, :, None].astype(np.float64)], axis=2
        )

    def copy(self) -> "AdjacencyState":
        return AdjacencyState(self.entity_list, self.present.copy())

    def with_present(self, present: np.ndarray) -> "AdjacencyState":
        return AdjacencyState(self.entity_list, present)

    def count(self) -> int:
        return int(self.present.sum())

    def triples(self) -> Set[Triple]:
        """Extract the present cells as triples over global entity ids"""
        heads, tails, rels = np.nonzero(self.present)
        ids = self.entity_list
        return {Triple(ids[i], int(k), ids[j]) for i, j, k in zip(heads.tolist(), tails.tolist(), rels.tolist())}


def empty_adjacency(entity_list: Sequence[int], n_relations: int) -> AdjacencyState:
    n = len(entity_list)
    return AdjacencyState(tuple(entity_list), np.zeros((n, n, n_relations), dtype=bool))


def to_adjacency(graph: Graph, entity_list: Sequence[int], cap: Optional[int] = None) -> AdjacencyState:
    """Project a graph onto an ordered entity subset; out-of-subset edges are ignored"""
    cap = DEFAULT_SUBGRAPH_CAP if cap is None else cap
    entity_list = tuple(int(e) for e in entity_list)
    index = {entity: i for i, entity in enumerate(entity_list)}
    if len(index) != len(entity_list):
        raise InvalidSubset("entity_list contains duplicates")
    if len(entity_list) > cap:
        raise InvalidSubset(f"{len(entity_list)} entities exceed the subgraph cap {cap}")

    state = empty_adjacency(entity_list, graph.vocab.n_relations)
    for entity, i in index.items():
        for triple in graph.outgoing.get(entity, ()):
            j = index.get(triple.tail)
            if j is not None:
                state.present[i, j, triple.relation] = True
    return state


@dataclass(frozen=True)
class FreqTable:
    """Per-relation triple counts plus the absent-pair count for the no-edge channel"""
    counts: Tuple[int, ...]
    absent_pairs: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts)

    def probability(self, relation: int) -> float:
        return self.counts[relation] / self.total if self.total else 0.0

    def as_dict(self, vocab: Vocab) -> Dict[str, int]:
        return {vocab.relations[r]: c for r, c in enumerate(self.counts)}


def relation_frequencies(graph: Graph, absent_pairs: int = 0) -> FreqTable:
    counts = [0] * graph.vocab.n_relations
    for relation, triples in graph.by_relation.items():
        counts[relation] = len(triples)
    return FreqTable(tuple(counts), absent_pairs)

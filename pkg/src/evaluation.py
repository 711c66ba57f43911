"""
Triple set prediction metrics
JPrecision / STRecall / F_TSP under the closed-world and relation-similarity partial-open-world assumptions
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Optional, Set, Tuple

import numpy as np

from .errors import EmptyTestSet, InvalidSimilarity, IoError, ParseError
from .kg.core import Graph, Triple, Vocab
from .models import MetricsReport

logger = logging.getLogger(__name__)

SIMILARITY_TOLERANCE = 1e-6


def metrics_from_counts(t_pred: int, t_wa: int, t_wa_plus: int, t_test: int, assumption: str = "CWA",
                        unresolved: int = 0) -> MetricsReport:
    """Scores from raw counts; any empty denominator gives 0 instead of NaN"""
    if t_test <= 0:
        raise EmptyTestSet("test set is empty")
    if t_pred and t_wa:
        jprecision = 0.5 * (t_wa_plus / t_wa + t_wa_plus / t_pred)
    else:
        jprecision = 0.0
    strecall = math.sqrt(t_wa_plus / t_test)
    if jprecision > 0 and strecall > 0:
        f_tsp = 2 * jprecision * strecall / (jprecision + strecall)
    else:
        f_tsp = 0.0
    return MetricsReport(
        t_pred=t_pred,
        t_wa=t_wa,
        t_wa_plus=t_wa_plus,
        t_test=t_test,
        jprecision=jprecision,
        strecall=strecall,
        f_tsp=f_tsp,
        assumption=assumption,
        unresolved=unresolved,
    )


def _as_set(triples) -> Set[Triple]:
    if isinstance(triples, Graph):
        return set(triples.triples)
    return {Triple(*t) for t in triples}


def cwa_metrics(pred: Iterable[Triple], test: Iterable[Triple], unresolved: int = 0) -> MetricsReport:
    """Every prediction outside the test set is wrong; unresolved predictions only add to |pred|"""
    pred_set, test_set = _as_set(pred), _as_set(test)
    if not test_set:
        raise EmptyTestSet("test set is empty")
    t_pred = len(pred_set) + unresolved
    plus = len(pred_set & test_set)
    return metrics_from_counts(t_pred, t_pred, plus, len(test_set), "CWA", unresolved)


@dataclass(frozen=True)
class SimMatrix:
    """Symmetric relation similarity in [0, 1]; sim(r, r') < theta marks r' as contradicting r"""
    matrix: np.ndarray
    theta: float = 0.5

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidSimilarity(f"similarity matrix must be square, got shape {m.shape}")
        if not np.isfinite(m).all() or (m < 0).any() or (m > 1).any():
            raise InvalidSimilarity("similarity values must lie in [0, 1]")
        if np.abs(m - m.T).max(initial=0.0) > SIMILARITY_TOLERANCE:
            raise InvalidSimilarity("similarity matrix is not symmetric")
        if np.abs(np.diag(m) - 1.0).max(initial=0.0) > SIMILARITY_TOLERANCE:
            raise InvalidSimilarity("similarity diagonal must be 1")

    def dissimilar(self, relation: int, other: int) -> bool:
        return self.matrix[relation, other] < self.theta


def default_similarity(train: Graph, theta: float = 0.5) -> SimMatrix:
    """Cosine similarity of per-relation head/tail entity histograms.

    Relations without training triples have no profile and are treated as
    similar to everything, so they never make a prediction confidently false.
    """
    n_rel, n_ent = train.vocab.n_relations, train.vocab.n_entities
    profiles = np.zeros((n_rel, 2 * n_ent))
    for triple in train.triples:
        profiles[triple.relation, triple.head] += 1.0
        profiles[triple.relation, n_ent + triple.tail] += 1.0
    norms = np.linalg.norm(profiles, axis=1)
    seen = norms > 0
    sim = np.ones((n_rel, n_rel))
    unit = profiles[seen] / norms[seen, None]
    sim[np.ix_(seen, seen)] = unit @ unit.T
    sim = np.clip((sim + sim.T) / 2.0, 0.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return SimMatrix(sim, theta)


def load_similarity(path, vocab: Vocab, theta: float = 0.5) -> SimMatrix:
    """Read a TAB-separated matrix whose first line names the relations; realigned to vocab order"""
    try:
        lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    except (OSError, UnicodeDecodeError) as e:
        raise IoError(f"cannot read similarity file {path}: {e}") from e
    if not lines:
        raise InvalidSimilarity(f"similarity file {path} is empty")

    names = lines[0].split("\t")
    if len(set(names)) != len(names):
        raise InvalidSimilarity("duplicate relation names in similarity header")
    unknown = [name for name in names if not vocab.has_relation(name)]
    if unknown:
        raise InvalidSimilarity(f"unknown relations in similarity file: {', '.join(unknown)}")
    if len(lines) - 1 != len(names):
        raise InvalidSimilarity(f"expected {len(names)} rows, found {len(lines) - 1}")

    rows = []
    for line_no, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(names):
            raise ParseError(line_no, f"expected {len(names)} values, found {len(fields)}")
        try:
            rows.append([float(value) for value in fields])
        except ValueError as e:
            raise ParseError(line_no, str(e)) from e
    given = np.array(rows)
    SimMatrix(given, theta)

    ids = [vocab.relation_id(name) for name in names]
    full = np.ones((vocab.n_relations, vocab.n_relations))
    full[np.ix_(ids, ids)] = given
    missing = vocab.n_relations - len(ids)
    if missing:
        logger.warning(f"⚠️ Similarity file omits {missing} relations; treating them as similar to all")
    return SimMatrix(full, theta)


def _pair_index(graphs: Iterable[Graph]) -> Dict[Tuple[int, int], Set[int]]:
    index: Dict[Tuple[int, int], Set[int]] = defaultdict(set)
    for graph in graphs:
        for triple in graph.triples:
            index[(triple.head, triple.tail)].add(triple.relation)
    return index


def rs_powa_metrics(pred: Iterable[Triple], test: Graph, train: Graph, sim: SimMatrix,
                    unresolved: int = 0) -> MetricsReport:
    """A wrong prediction counts as confidently false only when a known triple over the same
    ordered pair carries a relation dissimilar to the predicted one"""
    pred_set, test_set = _as_set(pred), _as_set(test)
    if not test_set:
        raise EmptyTestSet("test set is empty")
    known = _pair_index([train, test])
    plus = pred_set & test_set
    minus = {
        p for p in pred_set - test_set
        if any(sim.dissimilar(p.relation, other) for other in known.get((p.head, p.tail), ()))
    }
    return metrics_from_counts(
        len(pred_set) + unresolved, len(plus) + len(minus), len(plus), len(test_set), "RS-POWA", unresolved
    )


def inverse_consistency_rate(pred: Iterable[Triple], relation: int, inverse: int,
                             context: Optional[Iterable[Triple]] = None) -> float:
    """Share of predicted r/s triples whose inverse counterpart is also predicted (or already known)"""
    pred_set = _as_set(pred)
    pool = pred_set | (_as_set(context) if context is not None else set())
    considered = matched = 0
    for triple in pred_set:
        if triple.relation == relation:
            counterpart = Triple(triple.tail, inverse, triple.head)
        elif triple.relation == inverse:
            counterpart = Triple(triple.tail, relation, triple.head)
        else:
            continue
        considered += 1
        matched += counterpart in pool
    return matched / considered if considered else 0.0


def frequency_matched_baseline(pred: Iterable[Triple], entities: Iterable[int],
                               rng: np.random.Generator) -> Set[Triple]:
    """Random triple set with the same per-relation counts over the same entity pool"""
    pred_set = _as_set(pred)
    pool = np.array(sorted(set(entities)))
    counts: Dict[int, int] = defaultdict(int)
    for triple in pred_set:
        counts[triple.relation] += 1
    n_pairs = len(pool) ** 2
    baseline: Set[Triple] = set()
    for relation in sorted(counts):
        chosen = rng.choice(n_pairs, size=min(counts[relation], n_pairs), replace=False)
        baseline.update(
            Triple(int(pool[c // len(pool)]), relation, int(pool[c % len(pool)])) for c in chosen
        )
    return baseline

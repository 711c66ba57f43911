import json
import math

import numpy as np
import pytest

from src.errors import EmptyTestSet, InvalidSimilarity, ParseError
from src.evaluation import (
    SimMatrix,
    cwa_metrics,
    default_similarity,
    frequency_matched_baseline,
    inverse_consistency_rate,
    load_similarity,
    metrics_from_counts,
    rs_powa_metrics,
)
from src.kg.core import Graph, Triple, build_vocab
from src.models import MetricsReport

from .conftest import random_graph


@pytest.mark.parametrize(
    "counts, assumption, expected",
    [
        ((2453, 2453, 1657, 4598), "CWA", (0.675, 0.600, 0.635)),
        ((7472, 4355, 3472, 15843), "RS-POWA", (0.630, 0.468, 0.537)),
        ((10162, 6804, 4543, 28727), "RS-POWA", (0.557, 0.397, 0.464)),
    ],
)
def test_reported_scores_from_counts(counts, assumption, expected):
    report = metrics_from_counts(*counts, assumption=assumption)
    assert report.jprecision == pytest.approx(expected[0], abs=1e-3)
    assert report.strecall == pytest.approx(expected[1], abs=1e-3)
    assert report.f_tsp == pytest.approx(expected[2], abs=1e-3)


def test_perfect_prediction_scores_one():
    test = {Triple(0, 0, i) for i in range(1, 6)}
    report = cwa_metrics(test, test)
    assert (report.jprecision, report.strecall, report.f_tsp) == (1.0, 1.0, 1.0)


def test_metrics_report_json_keeps_every_field():
    report = MetricsReport(t_pred=5, t_wa=4, t_wa_plus=2, t_test=3, jprecision=0.5, strecall=0.25,
                           f_tsp=1 / 3, assumption="RS-POWA", unresolved=1)
    assert json.loads(report.to_json()) == report.model_dump()
    assert MetricsReport.model_validate_json(report.to_json()) == report


def test_disjoint_and_empty_predictions_score_zero():
    test = {Triple(0, 0, 1)}
    assert cwa_metrics({Triple(1, 0, 0)}, test).f_tsp == 0.0
    empty = cwa_metrics(set(), test)
    assert (empty.jprecision, empty.strecall, empty.f_tsp) == (0.0, 0.0, 0.0)


def test_empty_test_set_raises():
    with pytest.raises(EmptyTestSet):
        cwa_metrics({Triple(0, 0, 1)}, set())
    with pytest.raises(EmptyTestSet):
        metrics_from_counts(1, 1, 0, 0)


def test_unresolved_predictions_only_grow_the_prediction_count():
    test = {Triple(0, 0, 1), Triple(1, 0, 2)}
    report = cwa_metrics({Triple(0, 0, 1)}, test, unresolved=3)
    assert report.t_pred == 4
    assert report.t_wa_plus == 1
    assert report.unresolved == 3


def test_harmonic_mean_is_below_the_components():
    rng = np.random.default_rng(0)
    for _ in range(200):
        t_test = int(rng.integers(1, 200))
        plus = int(rng.integers(1, t_test + 1))
        wa = int(rng.integers(plus, plus + 100))
        pred = int(rng.integers(wa, wa + 100))
        report = metrics_from_counts(pred, wa, plus, t_test)
        jp, sr = report.jprecision, report.strecall
        assert report.f_tsp <= math.sqrt(jp * sr) + 1e-12 <= (jp + sr) / 2 + 2e-12


def test_strecall_grows_with_true_positives():
    previous = -1.0
    for plus in range(0, 11):
        strecall = metrics_from_counts(20, 20, plus, 10).strecall
        assert strecall > previous
        previous = strecall


# ----------------------------
# RS-POWA
# ----------------------------

def _brute_force_minus(pred, test, train, sim):
    known = set(test) | set(train)
    minus = set()
    for p in set(pred) - set(test):
        for k in known:
            if (k.head, k.tail) == (p.head, p.tail) and sim.matrix[p.relation, k.relation] < sim.theta:
                minus.add(p)
    return minus


@pytest.mark.parametrize("seed", range(3))
def test_rs_powa_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    train = random_graph(rng, n_entities=8, n_relations=4, n_triples=40)
    test = Graph(train.vocab, random_graph(rng, n_entities=8, n_relations=4, n_triples=15).triples)
    pred = random_graph(rng, n_entities=8, n_relations=4, n_triples=50).triples
    raw = rng.random((4, 4))
    matrix = (raw + raw.T) / 2
    np.fill_diagonal(matrix, 1.0)
    sim = SimMatrix(matrix, theta=0.5)

    report = rs_powa_metrics(pred, test, train, sim)
    plus = set(pred) & set(test.triples)
    assert report.t_wa_plus == len(plus)
    assert report.t_wa == len(plus) + len(_brute_force_minus(pred, test.triples, train.triples, sim))
    assert report.assumption == "RS-POWA"


def test_rs_powa_with_uniform_similarity_only_counts_true_positives():
    rng = np.random.default_rng(4)
    train = random_graph(rng, n_entities=8, n_relations=3, n_triples=30)
    test = Graph(train.vocab, random_graph(rng, n_entities=8, n_relations=3, n_triples=10).triples)
    pred = random_graph(rng, n_entities=8, n_relations=3, n_triples=30).triples
    report = rs_powa_metrics(pred, test, train, SimMatrix(np.ones((3, 3))))
    assert report.t_wa == report.t_wa_plus


def test_rs_powa_never_scores_below_cwa_precision_denominator():
    vocab = build_vocab([("a", "r", "b"), ("b", "s", "c")])
    train = Graph(vocab, [Triple(0, 0, 1)])
    test = Graph(vocab, [Triple(1, 1, 2)])
    pred = {Triple(1, 1, 2), Triple(0, 1, 1), Triple(2, 0, 0)}
    sim = SimMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]))
    powa = rs_powa_metrics(pred, test, train, sim)
    cwa = cwa_metrics(pred, test)
    assert powa.t_wa == 2
    assert powa.jprecision >= cwa.jprecision


# ----------------------------
# similarity
# ----------------------------

def test_default_similarity_properties():
    rows = [("a", "r", "b"), ("c", "s", "d"), ("a", "u", "b")]
    vocab = build_vocab(rows + [("x", "never", "y")])
    train = Graph(vocab, (vocab.encode(row) for row in rows))
    sim = default_similarity(train)
    r, s, u, never = (vocab.relation_id(name) for name in ("r", "s", "u", "never"))
    assert sim.matrix[r, u] == pytest.approx(1.0)
    assert sim.matrix[r, s] == 0.0
    assert sim.matrix[never, r] == 1.0
    assert np.array_equal(sim.matrix, sim.matrix.T)
    assert sim.dissimilar(r, s) and not sim.dissimilar(r, u)


def _write_similarity(path, names, rows):
    lines = ["\t".join(names)] + ["\t".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _two_relation_vocab():
    return build_vocab([("a", "r", "b"), ("b", "s", "c")])


def test_load_similarity_realigns_to_vocab_order(tmp_path):
    vocab = _two_relation_vocab()
    path = _write_similarity(tmp_path / "sim.tsv", ["s", "r"], [[1.0, 0.2], [0.2, 1.0]])
    sim = load_similarity(path, vocab)
    assert sim.matrix[vocab.relation_id("r"), vocab.relation_id("s")] == 0.2
    assert np.allclose(np.diag(sim.matrix), 1.0)


def test_load_similarity_fills_missing_relations(tmp_path):
    vocab = build_vocab([("a", "r", "b"), ("b", "s", "c"), ("c", "u", "a")])
    path = _write_similarity(tmp_path / "sim.tsv", ["r", "s"], [[1.0, 0.1], [0.1, 1.0]])
    sim = load_similarity(path, vocab)
    assert sim.matrix[vocab.relation_id("u"), vocab.relation_id("r")] == 1.0


@pytest.mark.parametrize(
    "names, rows",
    [
        (["r", "s"], [[1.0, 1.2], [1.2, 1.0]]),
        (["r", "s"], [[1.0, 0.3], [0.4, 1.0]]),
        (["r", "s"], [[0.9, 0.3], [0.3, 1.0]]),
        (["r", "zzz"], [[1.0, 0.3], [0.3, 1.0]]),
        (["r", "r"], [[1.0, 0.3], [0.3, 1.0]]),
        (["r", "s"], [[1.0, 0.3]]),
    ],
)
def test_load_similarity_rejects_invalid_matrices(tmp_path, names, rows):
    path = _write_similarity(tmp_path / "sim.tsv", names, rows)
    with pytest.raises(InvalidSimilarity):
        load_similarity(path, _two_relation_vocab())


def test_load_similarity_reports_bad_line(tmp_path):
    path = _write_similarity(tmp_path / "sim.tsv", ["r", "s"], [[1.0, 0.3], ["0.3", "high"]])
    with pytest.raises(ParseError) as info:
        load_similarity(path, _two_relation_vocab())
    assert info.value.line == 3


# ----------------------------
# diagnostics
# ----------------------------

def test_inverse_consistency_rate():
    pred = {Triple(0, 0, 1), Triple(1, 1, 0), Triple(2, 0, 3), Triple(4, 2, 5)}
    assert inverse_consistency_rate(pred, 0, 1) == pytest.approx(2 / 3)
    assert inverse_consistency_rate(pred, 0, 1, context=[Triple(3, 1, 2)]) == 1.0
    assert inverse_consistency_rate(set(), 0, 1) == 0.0


def test_frequency_matched_baseline_keeps_relation_counts():
    pred = {Triple(0, 0, 1), Triple(1, 0, 2), Triple(2, 1, 0)}
    baseline = frequency_matched_baseline(pred, range(5), np.random.default_rng(0))
    counts = {relation: sum(t.relation == relation for t in baseline) for relation in (0, 1)}
    assert counts == {0: 2, 1: 1}
    assert all(0 <= t.head < 5 and 0 <= t.tail < 5 for t in baseline)

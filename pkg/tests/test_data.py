import numpy as np
import pytest

from src.errors import InvalidRho, IoError, KGDiffError, ParseError
from src.kg.core import Graph, Triple, build_vocab
from src.kg.data import (
    Subgraph,
    coverage_report,
    generate_tasks,
    load_dataset,
    load_tsv,
    partition_graph,
    random_split,
    relation_balanced_split,
    whole_graph_tasks,
)

from .conftest import random_graph, write_tsv


def test_load_tsv_single_row(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("a\tr\tb\n", encoding="utf-8")
    assert load_tsv(path) == [("a", "r", "b")]


def test_load_tsv_accepts_crlf_and_blank_lines(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_bytes(b"a\tr\tb\r\n\r\nb\tr\tc\r\n")
    assert load_tsv(path) == [("a", "r", "b"), ("b", "r", "c")]


def test_load_tsv_reports_malformed_line(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_text("a\tr\n", encoding="utf-8")
    with pytest.raises(ParseError) as info:
        load_tsv(path)
    assert info.value.line == 1


def test_load_tsv_missing_file(tmp_path):
    with pytest.raises(IoError):
        load_tsv(tmp_path / "absent.tsv")


def test_load_dataset_shares_vocab(tmp_path):
    train = write_tsv(tmp_path / "train.tsv", [("a", "r", "b")])
    valid = write_tsv(tmp_path / "valid.tsv", [("b", "s", "c")])
    test = write_tsv(tmp_path / "test.tsv", [("c", "r", "d")])
    bundle = load_dataset(train, valid, test)
    assert bundle.vocab.entities == ("a", "b", "c", "d")
    assert bundle.vocab.relations == ("r", "s")
    assert len(bundle.train) == len(bundle.valid) == len(bundle.test) == 1


def _chain_graph(n: int) -> Graph:
    rows = [(f"e{i}", "r", f"e{i + 1}") for i in range(n - 1)]
    vocab = build_vocab(rows)
    return Graph(vocab, (vocab.encode(row) for row in rows))


def test_partition_single_subgraph_when_cap_covers_graph():
    graph = _chain_graph(10)
    subgraphs = partition_graph(graph, cap=10, seed=0)
    assert len(subgraphs) == 1
    assert set(subgraphs[0].entity_list) == set(range(10))
    assert subgraphs[0].triples == graph.triples


def test_partition_separates_components():
    rows = [(f"a{i}", "r", f"a{i + 1}") for i in range(4)] + [(f"b{i}", "r", f"b{i + 1}") for i in range(4)]
    vocab = build_vocab(rows)
    graph = Graph(vocab, (vocab.encode(row) for row in rows))
    subgraphs = partition_graph(graph, cap=5, seed=1)
    assert len(subgraphs) >= 2
    covered = set().union(*(sub.entity_list for sub in subgraphs))
    assert covered == set(range(vocab.n_entities))
    for sub in subgraphs:
        names = {vocab.entity_name(e)[0] for e in sub.entity_list}
        assert len(names) == 1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_partition_covers_all_entities_and_respects_cap(seed):
    graph = random_graph(np.random.default_rng(seed), n_entities=40, n_relations=3, n_triples=90)
    subgraphs = partition_graph(graph, cap=8, seed=seed)
    assert set().union(*(sub.entity_list for sub in subgraphs)) == set(range(40))
    for sub in subgraphs:
        assert len(sub.entity_list) <= 8
        assert len(set(sub.entity_list)) == len(sub.entity_list)
        members = set(sub.entity_list)
        assert all(t.head in members and t.tail in members for t in sub.triples)


def test_partition_is_deterministic():
    graph = random_graph(np.random.default_rng(7), n_entities=40, n_relations=3, n_triples=90)
    first = [sub.entity_list for sub in partition_graph(graph, cap=8, seed=3)]
    second = [sub.entity_list for sub in partition_graph(graph, cap=8, seed=3)]
    assert first == second


def test_partition_rejects_tiny_cap():
    with pytest.raises(KGDiffError):
        partition_graph(_chain_graph(3), cap=1, seed=0)


def test_coverage_report_counts_cross_subgraph_triples():
    graph = _chain_graph(4)
    subgraphs = [
        Subgraph(0, (0, 1), graph.induced([0, 1])),
        Subgraph(1, (2, 3), graph.induced([2, 3])),
    ]
    report = coverage_report(graph, subgraphs)
    assert report["triples"] == 3
    assert report["covered"] == 2
    assert report["cross_subgraph_fraction"] == pytest.approx(1 / 3)


def _relation_subgraph(counts):
    """Subgraph whose relation k has counts[k] triples over distinct pairs"""
    rows = []
    for k, count in enumerate(counts):
        rows.extend((f"h{k}_{i}", f"r{k}", f"t{k}_{i}") for i in range(count))
    vocab = build_vocab(rows)
    graph = Graph(vocab, (vocab.encode(row) for row in rows))
    return Subgraph(0, tuple(range(vocab.n_entities)), graph)


def test_balanced_split_ten_triples():
    task = relation_balanced_split(_relation_subgraph([10]), 0.8, np.random.default_rng(0))
    assert len(task.support) == 8
    assert len(task.query) == 2


def test_balanced_split_singleton_goes_to_support():
    task = relation_balanced_split(_relation_subgraph([1]), 0.8, np.random.default_rng(0))
    assert len(task.support) == 1
    assert len(task.query) == 0


@pytest.mark.parametrize("count, rho, expected", [(90, 0.35, 32), (50, 0.29, 15), (50, 0.57, 29), (10, 0.25, 3)])
def test_split_rounds_decimal_ties_up(count, rho, expected):
    subgraph = _relation_subgraph([count])
    assert len(relation_balanced_split(subgraph, rho, np.random.default_rng(0)).support) == expected
    assert len(random_split(subgraph, rho, np.random.default_rng(0)).support) == expected


@pytest.mark.parametrize("rho", [0.0, 1.0, -0.2, 1.5])
def test_split_rejects_bad_rho(rho):
    with pytest.raises(InvalidRho):
        relation_balanced_split(_relation_subgraph([3]), rho, np.random.default_rng(0))
    with pytest.raises(InvalidRho):
        random_split(_relation_subgraph([3]), rho, np.random.default_rng(0))


def test_balanced_split_keeps_relation_proportions():
    counts = [400, 300, 150, 100, 50]
    subgraph = _relation_subgraph(counts)
    task = relation_balanced_split(subgraph, 0.8, np.random.default_rng(5))
    total, n_support = sum(counts), len(task.support)
    for k, n_r in enumerate(counts):
        in_support = len(task.support.by_relation.get(k, ()))
        assert abs(in_support / n_support - n_r / total) <= 1 / n_support + 1 / total


@pytest.mark.parametrize("balanced", [True, False])
def test_tasks_partition_the_subgraph(balanced):
    subgraph = _relation_subgraph([7, 4, 1, 2])
    for task in generate_tasks(subgraph, 0.8, n_s=5, seed=11, balanced=balanced):
        assert not (task.support.triples & task.query.triples)
        assert task.support.triples | task.query.triples == subgraph.triples
        assert task.entity_list == subgraph.entity_list


def test_generate_tasks_counts_and_determinism():
    subgraph = _relation_subgraph([10, 5])
    assert len(generate_tasks(subgraph, 0.8, n_s=1, seed=0)) == 1
    first = generate_tasks(subgraph, 0.8, n_s=100, seed=4)
    second = generate_tasks(subgraph, 0.8, n_s=100, seed=4)
    assert len(first) == 100
    assert first == second
    assert len({task.seed for task in first}) == 100


def test_generate_tasks_rejects_zero_n_s():
    with pytest.raises(KGDiffError):
        generate_tasks(_relation_subgraph([3]), 0.8, n_s=0, seed=0)


def test_whole_graph_tasks_have_empty_support():
    subgraph = _relation_subgraph([3, 2])
    tasks = whole_graph_tasks(subgraph, n_s=2, seed=0)
    assert len(tasks) == 2
    assert all(len(task.support) == 0 and task.query == subgraph.graph for task in tasks)


def test_self_loop_is_a_regular_triple():
    vocab = build_vocab([("a", "r", "a")])
    graph = Graph(vocab, [Triple(0, 0, 0)])
    assert len(graph) == 1

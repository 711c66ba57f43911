"""
Shared fixtures for the kgdiff test suite
"""

from pathlib import Path
from typing import List, Sequence, Tuple

import numpy as np
import pytest

from src.denoiser import DenoiserParams
from src.kg.core import Graph, Triple, build_vocab


def write_tsv(path: Path, rows: Sequence[Tuple[str, str, str]]) -> Path:
    path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")
    return path


def ring_triples(n_entities: int = 30) -> List[Tuple[str, str, str]]:
    """Deterministic synthetic KG: a successor ring, its exact inverse, and a skip relation"""
    rows = []
    for i in range(n_entities):
        rows.append((f"e{i}", "next", f"e{(i + 1) % n_entities}"))
        rows.append((f"e{(i + 1) % n_entities}", "prev", f"e{i}"))
        if i % 2 == 0:
            rows.append((f"e{i}", "skip", f"e{(i + 7) % n_entities}"))
    return rows


def random_graph(rng: np.random.Generator, n_entities: int, n_relations: int, n_triples: int) -> Graph:
    names = [f"e{i}" for i in range(n_entities)]
    relations = [f"r{k}" for k in range(n_relations)]
    seed_rows = [(names[i], relations[i % n_relations], names[(i + 1) % n_entities]) for i in range(max(n_entities, n_relations))]
    vocab = build_vocab(seed_rows)
    triples = [
        Triple(int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities)))
        for _ in range(n_triples)
    ]
    return Graph(vocab, triples)


@pytest.fixture
def small_graph() -> Graph:
    rows = [("a", "r", "b"), ("b", "r", "a"), ("a", "s", "b"), ("b", "s", "c"), ("c", "r", "c")]
    vocab = build_vocab(rows)
    return Graph(vocab, (vocab.encode(row) for row in rows))


@pytest.fixture
def tiny_params() -> DenoiserParams:
    return DenoiserParams.initialize(dim=8, n_relations=3, n_blocks=2, n_rce_layers=2, seed=3, zero_gates=False)


@pytest.fixture
def ring_dataset(tmp_path) -> Tuple[Path, Path, Path]:
    """Train/valid/test TSV files over the synthetic ring KG"""
    rows = ring_triples(12)
    test_rows = rows[3::9]
    valid_rows = rows[7::9]
    held_out = set(test_rows) | set(valid_rows)
    train_rows = [row for row in rows if row not in held_out]
    return (
        write_tsv(tmp_path / "train.tsv", train_rows),
        write_tsv(tmp_path / "valid.tsv", valid_rows),
        write_tsv(tmp_path / "test.tsv", test_rows),
    )


@pytest.fixture
def ring_config(tmp_path, ring_dataset) -> Path:
    """Small but complete run config over the ring dataset"""
    train, valid, test = ring_dataset
    lines = [
        f"data.train = {train}",
        f"data.valid = {valid}",
        f"data.test = {test}",
        "model.dim = 4",
        "model.blocks = 1",
        "model.rce_layers = 1",
        "diffusion.steps = 3",
        "train.epochs = 2",
        "train.patience = 1",
        "train.n_s = 1",
        "train.cap = 6",
        "sample.gamma = 0.5",
        f"run.out = {tmp_path / 'run'}",
    ]
    path = tmp_path / "run.conf"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path

"""
End-to-end learning checks on the synthetic ring KG; deselected by default (`pytest -m slow` runs them)
"""

from typing import List, Set, Tuple

import numpy as np
import pytest

from src.denoiser import DenoiserParams
from src.diffusion import CellRng, make_schedule
from src.evaluation import cwa_metrics, frequency_matched_baseline, inverse_consistency_rate
from src.kg.core import Graph, Triple, build_vocab, relation_frequencies
from src.kg.data import Subgraph, Task, generate_tasks
from src.models import SamplerConfig
from src.sampling import sample
from src.training import AdamOptimizer, LossConfig, absent_pair_count, loss_weights, train_step

from .conftest import ring_triples

pytestmark = pytest.mark.slow

STEPS = 20
TRAIN_STEPS = 600
SCORED_TASKS = 5


def _ring_subgraph() -> Subgraph:
    rows = ring_triples(30)
    vocab = build_vocab(rows)
    graph = Graph(vocab, (vocab.encode(row) for row in rows))
    return Subgraph(0, tuple(range(vocab.n_entities)), graph)


def _fit(subgraph: Subgraph, seed: int, weighted: bool) -> Tuple[DenoiserParams, List[Task]]:
    tasks = generate_tasks(subgraph, 0.8, n_s=20, seed=seed)
    params = DenoiserParams.initialize(16, subgraph.graph.vocab.n_relations, n_blocks=3, n_rce_layers=2, seed=seed)
    optimizer = AdamOptimizer(params, lr=3e-3)
    if weighted:
        loss_cfg = LossConfig(loss_weights(relation_frequencies(subgraph.graph), absent_pair_count([subgraph])))
    else:
        loss_cfg = LossConfig.uniform(params.channels)
    schedule = make_schedule(STEPS)
    for step in range(TRAIN_STEPS):
        train_step(tasks[step % len(tasks)], params, optimizer, schedule, loss_cfg, CellRng(seed, step))
    return params, tasks


def _predict(params: DenoiserParams, task: Task, seed: int) -> Set[Triple]:
    cfg = SamplerConfig(steps=STEPS, gamma=0.5)
    return sample(task.support, params, make_schedule(STEPS), cfg, CellRng(seed, task.seed), task.entity_list).triples


def _held_in_score(params: DenoiserParams, tasks: List[Task], seed: int) -> float:
    scores = [cwa_metrics(_predict(params, task, seed), task.query).f_tsp for task in tasks[:SCORED_TASKS]]
    return float(np.mean(scores))


def test_overfit_recovers_held_in_query_edges():
    params, tasks = _fit(_ring_subgraph(), seed=0, weighted=True)
    assert _held_in_score(params, tasks, seed=0) >= 0.9


@pytest.mark.parametrize("seed", range(3))
def test_unweighted_loss_scores_lower(seed):
    subgraph = _ring_subgraph()
    weighted = _held_in_score(*_fit(subgraph, seed, weighted=True), seed=seed)
    unweighted = _held_in_score(*_fit(subgraph, seed, weighted=False), seed=seed)
    assert weighted > unweighted


@pytest.mark.parametrize("seed", range(3))
def test_inverse_pairs_beat_frequency_matched_baseline(seed):
    subgraph = _ring_subgraph()
    vocab = subgraph.graph.vocab
    relation, inverse = vocab.relation_id("next"), vocab.relation_id("prev")
    params, tasks = _fit(subgraph, seed, weighted=True)
    rng = np.random.default_rng(seed)
    model_rates, baseline_rates = [], []
    for task in tasks[:SCORED_TASKS]:
        predicted = _predict(params, task, seed)
        support = task.support.triples
        model_rates.append(inverse_consistency_rate(predicted, relation, inverse, context=support))
        baseline = frequency_matched_baseline(predicted, task.entity_list, rng)
        baseline_rates.append(inverse_consistency_rate(baseline, relation, inverse, context=support))
    assert np.mean(model_rates) > np.mean(baseline_rates)

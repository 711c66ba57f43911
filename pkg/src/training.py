"""
Training loop for the denoiser
Inverse-frequency weighted BCE with known-edge exclusion, Adam updates and validation-driven early stopping
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .checkpoint import Checkpoint, OptimizerState
from .config import CHECKPOINT_VERSION
from .denoiser import DenoiserOutput, DenoiserParams, backward, denoise_with_cache
from .denoiser.network import sigmoid
from .diffusion import CellRng, NoiseSchedule, forward_sample, make_schedule
from .errors import ConfigError, DegenerateDataset, EmptyDataset, EmptyLossSupport
from .evaluation import cwa_metrics
from .kg.core import AdjacencyState, FreqTable, Graph, relation_frequencies, to_adjacency
from .kg.data import DatasetBundle, Subgraph, Task, coverage_report, generate_tasks, partition_graph, whole_graph_tasks
from .models import CheckpointHeader, SamplerConfig, TrainConfig
from .sampling import predict_graph

logger = logging.getLogger(__name__)
epoch_logger = logging.getLogger(f"{__name__}.epochs")

WEIGHT_MIN = 0.1
WEIGHT_MAX = 100.0


def loss_weights(freq: FreqTable, n_pairs_absent: Optional[int] = None) -> np.ndarray:
    """Inverse-frequency channel weights, mean-normalised over observed channels and clipped.

    With `n_pairs_absent` the no-edge channel is appended as the last channel.
    """
    if freq.total == 0:
        raise DegenerateDataset("every relation count is zero")
    counts = np.array(list(freq.counts) + ([n_pairs_absent] if n_pairs_absent is not None else []), dtype=np.float64)
    observed = counts > 0
    weights = np.full(len(counts), WEIGHT_MAX)
    raw = counts[observed].sum() / counts[observed]
    weights[observed] = raw / raw.mean()
    return np.clip(weights, WEIGHT_MIN, WEIGHT_MAX)


@dataclass
class LossConfig:
    weights: np.ndarray
    exclude_known: bool = True

    @classmethod
    def uniform(cls, channels: int, exclude_known: bool = True) -> "LossConfig":
        return cls(np.ones(channels), exclude_known)


def _as_adjacency(graph: Union[Graph, AdjacencyState], entity_list) -> AdjacencyState:
    if isinstance(graph, AdjacencyState):
        return graph
    return to_adjacency(graph, entity_list, cap=len(entity_list))


def masked_weighted_bce(
    output: DenoiserOutput,
    target: AdjacencyState,
    support: Union[Graph, AdjacencyState],
    noisy: AdjacencyState,
    weights: np.ndarray,
    exclude_known: bool = True,
):
    """Weighted BCE averaged over included cells; returns (loss, d loss / d logits).

    Real-relation cells already present in the support or the noisy query are
    excluded, and so is the no-edge cell of any pair the noisy query already
    connects.
    """
    logits = output.logits
    targets = target.multi_hot()
    support_adj = _as_adjacency(support, target.entity_list)

    include = np.ones(logits.shape, dtype=bool)
    if exclude_known:
        include[:, :, :-1] = ~(support_adj.present | noisy.present)
        include[:, :, -1] = ~noisy.present.any(axis=2)
    n_included = int(include.sum())
    if n_included == 0:
        raise EmptyLossSupport("no cell is left for the loss after excluding known edges")

    scale = np.asarray(weights, dtype=np.float64)[None, None, :] * include / n_included
    bce = np.logaddexp(0.0, logits) - targets * logits
    loss = float((scale * bce).sum())
    dlogits = scale * (sigmoid(logits) - targets)
    return loss, dlogits


class AdamOptimizer:
    """Adam over every array of a DenoiserParams (beta1=0.9, beta2=0.999, eps=1e-8)"""

    def __init__(self, params: DenoiserParams, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {name: np.zeros_like(value) for name, value in params.arrays.items()}
        self.v = {name: np.zeros_like(value) for name, value in params.arrays.items()}

    def step(self, params: DenoiserParams) -> None:
        self.t += 1
        correction1 = 1 - self.beta1 ** self.t
        correction2 = 1 - self.beta2 ** self.t
        for name, grad in params.grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * grad ** 2
            m_hat = self.m[name] / correction1
            v_hat = self.v[name] / correction2
            params.arrays[name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state(self) -> OptimizerState:
        return OptimizerState(
            step=self.t,
            m={name: value.copy() for name, value in self.m.items()},
            v={name: value.copy() for name, value in self.v.items()},
        )

    def load_state(self, state: OptimizerState) -> None:
        self.t = state.step
        self.m = {name: value.copy() for name, value in state.m.items()}
        self.v = {name: value.copy() for name, value in state.v.items()}

    def round_to_float32(self) -> None:
        """Snap the moments to the values a checkpoint stores"""
        for moments in (self.m, self.v):
            for name, value in moments.items():
                moments[name] = value.astype("<f4").astype(np.float64)


def train_step(
    task: Task,
    params: DenoiserParams,
    optimizer: AdamOptimizer,
    schedule: NoiseSchedule,
    loss_cfg: LossConfig,
    rng: CellRng,
) -> float:
    """One Adam update on one task: draw t, noise the query, denoise against the support"""
    t = rng.timestep(schedule.total_steps)
    clean = to_adjacency(task.query, task.entity_list, cap=len(task.entity_list))
    noisy = forward_sample(clean, t, schedule, rng)
    support = to_adjacency(task.support, task.entity_list, cap=len(task.entity_list))

    output, cache = denoise_with_cache(noisy, support, t, params)
    loss, dlogits = masked_weighted_bce(output, clean, support, noisy, loss_cfg.weights, loss_cfg.exclude_known)
    backward(params, cache, dlogits)
    optimizer.step(params)
    return loss


def absent_pair_count(subgraphs: Sequence[Subgraph]) -> int:
    """Ordered entity pairs with no edge, summed over subgraphs"""
    total = 0
    for subgraph in subgraphs:
        linked = {(t.head, t.tail) for t in subgraph.triples}
        total += len(subgraph.entity_list) ** 2 - len(linked)
    return total


def build_tasks(subgraphs: Sequence[Subgraph], cfg: TrainConfig) -> List[Task]:
    tasks: List[Task] = []
    for subgraph in subgraphs:
        if not subgraph.triples:
            continue
        if cfg.mode == "whole_graph":
            tasks.extend(whole_graph_tasks(subgraph, cfg.n_s, cfg.seed))
        else:
            tasks.extend(generate_tasks(subgraph, cfg.rho, cfg.n_s, cfg.seed, balanced=cfg.balanced_split))
    return tasks


def loss_config_for(train: Graph, subgraphs: Sequence[Subgraph], cfg: TrainConfig) -> LossConfig:
    channels = train.vocab.n_relations + 1
    if not cfg.weighted_loss:
        return LossConfig.uniform(channels, cfg.exclude_known)
    weights = loss_weights(relation_frequencies(train), absent_pair_count(subgraphs))
    return LossConfig(weights, cfg.exclude_known)


def validation_score(
    bundle: DatasetBundle,
    subgraphs: Sequence[Subgraph],
    params: DenoiserParams,
    schedule: NoiseSchedule,
    cfg: TrainConfig,
) -> float:
    """CWA F_TSP of a full sampling pass with the training graph as support against the validation split"""
    sampler_cfg = SamplerConfig(
        steps=cfg.steps,
        gamma=cfg.gamma,
        mode="repaint" if cfg.mode == "whole_graph" else "standard",
    )
    prediction = predict_graph(subgraphs, params, schedule, sampler_cfg, cfg.seed, checkpoint_mode=cfg.mode)
    return cwa_metrics(prediction.triples, bundle.valid).f_tsp


RESUME_FIELDS = ("dim", "steps", "blocks", "rce_layers", "rho", "n_s", "cap", "seed", "mode")


def check_resumable(resume: Checkpoint, cfg: TrainConfig, n_relations: int) -> None:
    """Raise ConfigError unless `resume` was written by a run with the same shape, tasks and seed"""
    header = resume.header
    if header.n_relations != n_relations:
        raise ConfigError("train.resume", f"checkpoint has {header.n_relations} relations, dataset has {n_relations}")
    for name in RESUME_FIELDS:
        if getattr(header, name) != getattr(cfg, name):
            raise ConfigError(
                "train.resume",
                f"checkpoint {name}={getattr(header, name)} differs from configured {getattr(cfg, name)}",
            )
    if not resume.optimizer.m:
        raise ConfigError("train.resume", "checkpoint carries no optimizer moments")


def train(bundle: DatasetBundle, cfg: TrainConfig, resume: Optional[Checkpoint] = None) -> Checkpoint:
    """Epoch loop over all tasks in a seeded order; keeps the best-validation parameters

    With `resume`, training continues after the checkpoint's epoch from its parameters and Adam state.
    Parameters and moments are snapped to float32 at every epoch end, so a resumed run matches an
    uninterrupted one whose best epoch was the resume point.
    """
    vocab = bundle.vocab
    subgraphs = partition_graph(bundle.train, cfg.cap, cfg.seed, entities=range(vocab.n_entities))
    for name, graph in (("train", bundle.train), ("test", bundle.test)):
        audit = coverage_report(graph, subgraphs)
        logger.info(
            f"Coverage {name}: {audit['covered']}/{audit['triples']} triples co-resident "
            f"(cross-subgraph fraction {audit['cross_subgraph_fraction']:.4f})"
        )

    tasks = build_tasks(subgraphs, cfg)
    if not tasks:
        raise EmptyDataset("training graph produced no tasks")
    loss_cfg = loss_config_for(bundle.train, subgraphs, cfg)
    logger.info(f"Training on {len(tasks)} tasks, channel weights {np.round(loss_cfg.weights, 4).tolist()}")

    schedule = make_schedule(cfg.steps)
    params = DenoiserParams.initialize(cfg.dim, vocab.n_relations, cfg.blocks, cfg.rce_layers, seed=cfg.seed)
    optimizer = AdamOptimizer(params, lr=cfg.lr)
    root_rng = CellRng(cfg.seed)
    validate = len(bundle.valid) > 0
    if not validate:
        logger.warning("⚠️ Validation split is empty; keeping the parameters of the last epoch")

    best: Optional[Dict] = None
    stale = 0
    first_epoch = 1
    if resume is not None:
        check_resumable(resume, cfg, vocab.n_relations)
        params = resume.params.copy()
        optimizer.load_state(resume.optimizer)
        best = {
            "params": params.copy(),
            "optimizer": optimizer.state(),
            "epoch": resume.header.epoch,
            "val_f_tsp": resume.header.val_f_tsp,
        }
        first_epoch = resume.header.epoch + 1
        logger.info(f"Resuming after epoch {resume.header.epoch} (optimizer step {resume.optimizer.step})")
        if first_epoch > cfg.epochs:
            logger.warning(f"⚠️ Checkpoint already reached epoch {resume.header.epoch}; nothing left to train")

    for epoch in range(first_epoch, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(tasks))
        losses = [
            train_step(tasks[i], params, optimizer, schedule, loss_cfg, root_rng.child(epoch, int(i)))
            for i in order
        ]
        mean_loss = float(np.mean(losses))
        params = params.rounded_to_float32()
        optimizer.round_to_float32()
        val_f_tsp = validation_score(bundle, subgraphs, params, schedule, cfg) if validate else None
        shown = f"{val_f_tsp:.4f}" if val_f_tsp is not None else "n/a"
        epoch_logger.info(f"epoch={epoch} loss={mean_loss:.4f} val_f_tsp={shown}")

        if best is None or not validate or val_f_tsp > best["val_f_tsp"]:
            best = {"params": params.copy(), "optimizer": optimizer.state(), "epoch": epoch, "val_f_tsp": val_f_tsp}
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info(f"Early stopping after epoch {epoch}: no improvement for {stale} epochs")
                break

    header = CheckpointHeader(
        version=CHECKPOINT_VERSION,
        dim=cfg.dim,
        steps=cfg.steps,
        blocks=cfg.blocks,
        rce_layers=cfg.rce_layers,
        n_relations=vocab.n_relations,
        gamma=cfg.gamma,
        rho=cfg.rho,
        n_s=cfg.n_s,
        cap=cfg.cap,
        seed=cfg.seed,
        mode=cfg.mode,
        fingerprint=vocab.fingerprint(),
        epoch=best["epoch"],
        val_f_tsp=best["val_f_tsp"],
        optimizer_step=best["optimizer"].step,
    )
    logger.info(f"✅ Best epoch {best['epoch']} (val_f_tsp={best['val_f_tsp']})")
    return Checkpoint(header=header, params=best["params"], optimizer=best["optimizer"])

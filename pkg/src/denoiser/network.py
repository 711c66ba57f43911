"""
Structure-aware denoising network with analytic gradients

Pipeline: fuse support and noisy query -> relational context encoder (RCE)
-> fusion projection with node-level edge features -> RelDiT blocks
(relation-biased attention + MLP, both under time-conditioned adaLN)
-> pairwise decoder producing b logits per ordered entity pair.

Row-vector convention throughout: features are (n, a) and weights act on the
right, `H @ W`. Every forward helper returns (output, cache) and has a
matching backward helper that accumulates into a gradient dict.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from ..errors import IncompatibleGraphs, InvalidDim, InvalidStep
from ..kg.core import AdjacencyState, Graph, to_adjacency
from .params import DenoiserParams

logger = logging.getLogger(__name__)

LAYER_NORM_EPS = 1e-5
Grads = Dict[str, np.ndarray]


# ----------------------------
# Elementwise helpers
# ----------------------------

def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


# ----------------------------
# Inputs
# ----------------------------

def fuse_graphs(support: Union[Graph, AdjacencyState], noisy_query: AdjacencyState) -> AdjacencyState:
    """Union of the support edges and the noisy query edges over the query's entity list"""
    if isinstance(support, Graph):
        members = set(noisy_query.entity_list)
        if any(t.head not in members or t.tail not in members for t in support.triples):
            raise IncompatibleGraphs("support graph has entities outside the query's entity list")
        support = to_adjacency(support, noisy_query.entity_list, cap=noisy_query.n)
    if support.entity_list != noisy_query.entity_list:
        raise IncompatibleGraphs("support and query adjacency use different entity lists")
    if support.present.shape != noisy_query.present.shape:
        raise IncompatibleGraphs("support and query adjacency have different relation counts")
    return noisy_query.with_present(support.present | noisy_query.present)


def time_embedding(t: int, dim: int) -> np.ndarray:
    """Sinusoidal embedding: tau[2m] = sin(t / 10000^(2m/a)), tau[2m+1] = cos(...)"""
    if dim % 2:
        raise InvalidDim(f"time embedding dimension must be even, got {dim}")
    m = np.arange(dim // 2, dtype=np.float64)
    angles = t / np.power(10000.0, 2.0 * m / dim)
    tau = np.empty(dim, dtype=np.float64)
    tau[0::2] = np.sin(angles)
    tau[1::2] = np.cos(angles)
    return tau


def relation_operators(present: np.ndarray) -> np.ndarray:
    """(2R, n, n) mean-aggregation operators: forward relations then inverse relations"""
    adj = present.astype(np.float64)
    ops = np.concatenate([adj.transpose(2, 0, 1), adj.transpose(2, 1, 0)], axis=0)
    counts = ops.sum(axis=2, keepdims=True)
    return np.divide(ops, counts, out=np.zeros_like(ops), where=counts > 0)


def degree_profile(present: np.ndarray) -> np.ndarray:
    """(n, 2R) share of each (relation, direction) among an entity's incident edges"""
    adj = present.astype(np.float64)
    incident = np.concatenate([adj.sum(axis=1), adj.sum(axis=0)], axis=1)
    degree = incident.sum(axis=1, keepdims=True)
    return np.divide(incident, degree, out=np.zeros_like(incident), where=degree > 0)


# ----------------------------
# Relational context encoder
# ----------------------------

def rce_init(fused: AdjacencyState, params: DenoiserParams) -> np.ndarray:
    """h_i = mean of the embeddings of i's incident relations (inverse for incoming); 0 if isolated"""
    return degree_profile(fused.present) @ params["relation_embeddings"]


def _rce_layer_forward(H: np.ndarray, ops: np.ndarray, params: DenoiserParams, layer: int):
    W = params[f"rce.{layer}.relation_weights"]
    W0 = params[f"rce.{layer}.self_weight"]
    gathered = np.matmul(ops, H)
    Z = np.matmul(gathered, W).sum(axis=0) + H @ W0
    return np.maximum(Z, 0.0), (H, gathered, Z)


def _rce_layer_backward(dout: np.ndarray, ops: np.ndarray, cache, params: DenoiserParams, layer: int, grads: Grads):
    H, gathered, Z = cache
    W = params[f"rce.{layer}.relation_weights"]
    W0 = params[f"rce.{layer}.self_weight"]
    dZ = dout * (Z > 0)
    grads[f"rce.{layer}.relation_weights"] += np.matmul(gathered.transpose(0, 2, 1), dZ)
    grads[f"rce.{layer}.self_weight"] += H.T @ dZ
    per_relation = np.matmul(dZ, W.transpose(0, 2, 1))
    return dZ @ W0.T + np.matmul(ops.transpose(0, 2, 1), per_relation).sum(axis=0)


def rce_layer(H: np.ndarray, fused: AdjacencyState, params: DenoiserParams, layer: int) -> np.ndarray:
    """ReLU(sum_r mean_{j in N_i^r} h_j W_r + h_i W_0); inverse neighbors use the inverse weights"""
    out, _ = _rce_layer_forward(H, relation_operators(fused.present), params, layer)
    return out


# ----------------------------
# RelDiT block
# ----------------------------

def _layer_norm_forward(x: np.ndarray):
    mu = x.mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(x.var(axis=1, keepdims=True) + LAYER_NORM_EPS)
    xhat = (x - mu) * inv
    return xhat, (xhat, inv)


def _layer_norm_backward(dxhat: np.ndarray, cache) -> np.ndarray:
    xhat, inv = cache
    return inv * (
        dxhat - dxhat.mean(axis=1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )


def _attention_forward(H: np.ndarray, edge_probs: np.ndarray, params: DenoiserParams, block: int):
    p = f"block.{block}.attn"
    scale = 1.0 / math.sqrt(H.shape[1])
    Q, K, V = H @ params[f"{p}.query"], H @ params[f"{p}.key"], H @ params[f"{p}.value"]
    scores = (Q @ K.T) * scale + edge_probs @ params[f"{p}.relation_bias"]
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.exp(scores)
    weights /= weights.sum(axis=1, keepdims=True)
    mixed = weights @ V
    out = mixed @ params[f"{p}.out_weight"] + params[f"{p}.out_bias"]
    return out, (H, Q, K, V, weights, mixed, edge_probs, scale)


def _attention_backward(dout: np.ndarray, cache, params: DenoiserParams, block: int, grads: Grads) -> np.ndarray:
    p = f"block.{block}.attn"
    H, Q, K, V, weights, mixed, edge_probs, scale = cache
    grads[f"{p}.out_weight"] += mixed.T @ dout
    grads[f"{p}.out_bias"] += dout.sum(axis=0)
    dmixed = dout @ params[f"{p}.out_weight"].T
    dweights = dmixed @ V.T
    dV = weights.T @ dmixed
    dscores = weights * (dweights - (dweights * weights).sum(axis=1, keepdims=True))
    grads[f"{p}.relation_bias"] += np.einsum("ijk,ij->k", edge_probs, dscores)
    dQ = dscores @ K * scale
    dK = dscores.T @ Q * scale
    grads[f"{p}.query"] += H.T @ dQ
    grads[f"{p}.key"] += H.T @ dK
    grads[f"{p}.value"] += H.T @ dV
    return dQ @ params[f"{p}.query"].T + dK @ params[f"{p}.key"].T + dV @ params[f"{p}.value"].T


def rel_attention(
    H: np.ndarray, edge_probs: np.ndarray, params: DenoiserParams, block: int, return_weights: bool = False
):
    """Single-head attention with scalar bias B_ij = sum_k P_t(i, j, k) r_k"""
    out, cache = _attention_forward(H, edge_probs, params, block)
    if return_weights:
        return out, cache[4]
    return out


def _mlp_forward(H: np.ndarray, params: DenoiserParams, block: int):
    p = f"block.{block}.mlp"
    pre = H @ params[f"{p}.w1"] + params[f"{p}.b1"]
    act = silu(pre)
    return act @ params[f"{p}.w2"] + params[f"{p}.b2"], (H, pre, act)


def _mlp_backward(dout: np.ndarray, cache, params: DenoiserParams, block: int, grads: Grads) -> np.ndarray:
    p = f"block.{block}.mlp"
    H, pre, act = cache
    grads[f"{p}.w2"] += act.T @ dout
    grads[f"{p}.b2"] += dout.sum(axis=0)
    dpre = (dout @ params[f"{p}.w2"].T) * silu_grad(pre)
    grads[f"{p}.w1"] += H.T @ dpre
    grads[f"{p}.b1"] += dpre.sum(axis=0)
    return dpre @ params[f"{p}.w1"].T


def _time_condition(tau: np.ndarray, params: DenoiserParams):
    pre = tau @ params["time.weight"] + params["time.bias"]
    return silu(pre), pre


def _block_forward(H: np.ndarray, cond: np.ndarray, edge_probs: np.ndarray, params: DenoiserParams, block: int):
    p = f"block.{block}.modulation"
    modulation = cond @ params[f"{p}.weight"] + params[f"{p}.bias"]
    shift1, scale1, gate1, shift2, scale2, gate2 = np.split(modulation, 6)

    attn, attn_cache = _attention_forward(H, edge_probs, params, block)
    norm1, norm1_cache = _layer_norm_forward(attn)
    y1 = norm1 * (1.0 + scale1) + shift1
    H1 = H + gate1 * y1

    mlp, mlp_cache = _mlp_forward(H1, params, block)
    norm2, norm2_cache = _layer_norm_forward(mlp)
    y2 = norm2 * (1.0 + scale2) + shift2
    H2 = H1 + gate2 * y2

    cache = {
        "cond": cond, "modulation": modulation,
        "attn": attn_cache, "norm1": norm1_cache, "y1": y1,
        "mlp": mlp_cache, "norm2": norm2_cache, "y2": y2,
    }
    return H2, cache


def _block_backward(dH2: np.ndarray, cache, params: DenoiserParams, block: int, grads: Grads):
    p = f"block.{block}.modulation"
    _, scale1, gate1, _, scale2, gate2 = np.split(cache["modulation"], 6)
    norm1, norm2 = cache["norm1"][0], cache["norm2"][0]

    dgate2 = (dH2 * cache["y2"]).sum(axis=0)
    dy2 = dH2 * gate2
    dscale2 = (dy2 * norm2).sum(axis=0)
    dshift2 = dy2.sum(axis=0)
    dmlp = _layer_norm_backward(dy2 * (1.0 + scale2), cache["norm2"])
    dH1 = dH2 + _mlp_backward(dmlp, cache["mlp"], params, block, grads)

    dgate1 = (dH1 * cache["y1"]).sum(axis=0)
    dy1 = dH1 * gate1
    dscale1 = (dy1 * norm1).sum(axis=0)
    dshift1 = dy1.sum(axis=0)
    dattn = _layer_norm_backward(dy1 * (1.0 + scale1), cache["norm1"])
    dH = dH1 + _attention_backward(dattn, cache["attn"], params, block, grads)

    dmodulation = np.concatenate([dshift1, dscale1, dgate1, dshift2, dscale2, dgate2])
    grads[f"{p}.weight"] += np.outer(cache["cond"], dmodulation)
    grads[f"{p}.bias"] += dmodulation
    dcond = params[f"{p}.weight"] @ dmodulation
    return dH, dcond


def reldit_block(
    H: np.ndarray, tau: np.ndarray, params: DenoiserParams, block: int, edge_probs: np.ndarray
) -> np.ndarray:
    """H' = H1 + g2 * adaLN(MLP(H1)), H1 = H + g1 * adaLN(RelAttn(H)); scale/shift/gates from tau"""
    cond, _ = _time_condition(tau, params)
    out, _ = _block_forward(H, cond, edge_probs, params, block)
    return out


# ----------------------------
# Decoder
# ----------------------------

def _decoder_forward(H: np.ndarray, params: DenoiserParams):
    a = H.shape[1]
    W1 = params["decoder.w1"]
    left, right = H @ W1[:a], H @ W1[a:]
    pre = left[:, None, :] + right[None, :, :] + params["decoder.b1"]
    act = silu(pre)
    logits = act @ params["decoder.w2"] + params["decoder.b2"]
    return logits, (H, pre, act)


def _decoder_backward(dlogits: np.ndarray, cache, params: DenoiserParams, grads: Grads) -> np.ndarray:
    H, pre, act = cache
    a, hidden = H.shape[1], act.shape[2]
    W1 = params["decoder.w1"]
    grads["decoder.w2"] += act.reshape(-1, hidden).T @ dlogits.reshape(-1, dlogits.shape[2])
    grads["decoder.b2"] += dlogits.sum(axis=(0, 1))
    dpre = (dlogits @ params["decoder.w2"].T) * silu_grad(pre)
    grads["decoder.b1"] += dpre.sum(axis=(0, 1))
    dleft, dright = dpre.sum(axis=1), dpre.sum(axis=0)
    grads["decoder.w1"][:a] += H.T @ dleft
    grads["decoder.w1"][a:] += H.T @ dright
    return dleft @ W1[:a].T + dright @ W1[a:].T


# ----------------------------
# Full pass
# ----------------------------

@dataclass
class DenoiserOutput:
    entity_list: Tuple[int, ...]
    probs: np.ndarray
    logits: np.ndarray


@dataclass
class ForwardCache:
    t: int
    tau: np.ndarray
    edge_probs: np.ndarray
    operators: np.ndarray
    profile: np.ndarray
    node_edge_features: np.ndarray
    fusion_input: np.ndarray
    time_pre: np.ndarray
    rce: List[tuple] = field(default_factory=list)
    blocks: List[dict] = field(default_factory=list)
    decoder: Optional[tuple] = None


def denoise_with_cache(
    noisy_query: AdjacencyState, support: Union[Graph, AdjacencyState], t: int, params: DenoiserParams
) -> Tuple[DenoiserOutput, ForwardCache]:
    if t < 1:
        raise InvalidStep(f"denoiser timestep must be >= 1, got {t}")
    fused = fuse_graphs(support, noisy_query)
    edge_probs = fused.multi_hot()
    ops = relation_operators(fused.present)
    profile = degree_profile(fused.present)

    H = profile @ params["relation_embeddings"]
    rce_caches = []
    for layer in range(params.n_rce_layers):
        H, layer_cache = _rce_layer_forward(H, ops, params, layer)
        rce_caches.append(layer_cache)

    node_edge = np.concatenate([edge_probs.mean(axis=1), edge_probs.mean(axis=0)], axis=1)
    h_edge = node_edge @ params["fusion.edge_weight"] + params["fusion.edge_bias"]
    fusion_input = np.concatenate([H, h_edge], axis=1)
    X = fusion_input @ params["fusion.weight"] + params["fusion.bias"]

    tau = time_embedding(t, params.dim)
    cond, time_pre = _time_condition(tau, params)
    block_caches = []
    for block in range(params.n_blocks):
        X, block_cache = _block_forward(X, cond, edge_probs, params, block)
        block_caches.append(block_cache)

    logits, decoder_cache = _decoder_forward(X, params)
    cache = ForwardCache(
        t=t, tau=tau, edge_probs=edge_probs, operators=ops, profile=profile,
        node_edge_features=node_edge, fusion_input=fusion_input, time_pre=time_pre,
        rce=rce_caches, blocks=block_caches, decoder=decoder_cache,
    )
    return DenoiserOutput(noisy_query.entity_list, sigmoid(logits), logits), cache


def denoise(
    noisy_query: AdjacencyState, support: Union[Graph, AdjacencyState], t: int, params: DenoiserParams
) -> DenoiserOutput:
    """f_theta(G_t^q, G^s, t): per-channel existence probabilities for every ordered pair"""
    output, _ = denoise_with_cache(noisy_query, support, t, params)
    return output


def backward(params: DenoiserParams, cache: ForwardCache, dlogits: np.ndarray) -> Grads:
    """Exact gradients of a scalar loss w.r.t. every parameter, given d(loss)/d(logits)"""
    grads = params.zero_grads()
    a = params.dim

    dX = _decoder_backward(dlogits, cache.decoder, params, grads)
    dcond = np.zeros(a)
    for block in reversed(range(params.n_blocks)):
        dX, dc = _block_backward(dX, cache.blocks[block], params, block, grads)
        dcond += dc

    dtime_pre = dcond * silu_grad(cache.time_pre)
    grads["time.weight"] += np.outer(cache.tau, dtime_pre)
    grads["time.bias"] += dtime_pre

    grads["fusion.weight"] += cache.fusion_input.T @ dX
    grads["fusion.bias"] += dX.sum(axis=0)
    dfusion = dX @ params["fusion.weight"].T
    dH, dh_edge = dfusion[:, :a], dfusion[:, a:]
    grads["fusion.edge_weight"] += cache.node_edge_features.T @ dh_edge
    grads["fusion.edge_bias"] += dh_edge.sum(axis=0)

    for layer in reversed(range(params.n_rce_layers)):
        dH = _rce_layer_backward(dH, cache.operators, cache.rce[layer], params, layer, grads)
    grads["relation_embeddings"] += cache.profile.T @ dH
    return grads

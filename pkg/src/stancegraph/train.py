"""Pairwise ranking training loop.

One positive triple is sampled per observed edge per epoch, negatives by
rejection sampling. The loss is pairwise logistic (BPR) with L2 on the
initial embeddings; because the model is linear in those embeddings, the
gradient is the propagation operator applied to the per-triple cotangents.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigError, NumericsError
from .graphs import BipartiteGraph
from .metrics import ranking_metrics
from .model import (
    ChannelSet,
    EmbeddingState,
    ModelConfig,
    PropagationOutput,
    build_operators,
    forward,
    init_embeddings,
    layer_averaged_propagate,
)

LOGGER = logging.getLogger(__name__)

EVAL_K = 20


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    lambda_reg: float = 1e-4
    batch_size: int = 1024
    max_epochs: int = 1000
    patience: int = 50
    eval_every: int = 1
    # How many batches may reuse one forward pass; 1 means exact.
    refresh_every: int = 1

    def __post_init__(self):
        # learning_rate 0 is allowed: it freezes the parameters, which is
        # useful for no-op checks.
        if self.learning_rate < 0 or self.lambda_reg < 0:
            raise ConfigError("learning_rate and lambda_reg must be nonnegative")
        if self.batch_size < 1 or self.eval_every < 1 or self.refresh_every < 1:
            raise ConfigError("batch_size, eval_every, refresh_every must be positive")
        if self.max_epochs < 0:
            raise ConfigError("max_epochs must be nonnegative")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def for_shape(shape) -> "AdamState":
        return AdamState(m=np.zeros(shape), v=np.zeros(shape))


def adam_step(adam: AdamState, params: np.ndarray, grad: np.ndarray, lr: float) -> None:
    """One bias-corrected Adam update, applied to params in place."""
    if not np.isfinite(grad).all():
        raise NumericsError("non-finite gradient")
    adam.t += 1
    adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad
    adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad * grad
    m_hat = adam.m / (1.0 - adam.beta1 ** adam.t)
    v_hat = adam.v / (1.0 - adam.beta2 ** adam.t)
    params -= lr * m_hat / (np.sqrt(v_hat) + adam.eps)


def _edge_keys(graph: BipartiteGraph) -> np.ndarray:
    # Row-major flat keys; sorted because csr indices are sorted per row.
    R = graph.R
    rows = np.repeat(np.arange(graph.n_users, dtype=np.int64), np.diff(R.indptr))
    return rows * graph.n_hashtags + R.indices.astype(np.int64)


def _is_member(sorted_keys: np.ndarray, queries: np.ndarray) -> np.ndarray:
    if len(sorted_keys) == 0:
        return np.zeros(len(queries), dtype=bool)
    pos = np.searchsorted(sorted_keys, queries)
    pos = np.minimum(pos, len(sorted_keys) - 1)
    return sorted_keys[pos] == queries


def sample_epoch(graph: BipartiteGraph, rng: np.random.Generator) -> np.ndarray:
    """One (user, positive, negative) triple per edge, shuffled.

    Negatives are drawn uniformly and redrawn while they collide with the
    user's observed hashtags. Users connected to every hashtag cannot be
    sampled and are skipped.
    """
    pairs, _ = graph.edges()
    if pairs.shape[0] == 0:
        raise ConfigError("graph has no edges to sample from")
    m = graph.n_hashtags
    if m < 2:
        raise ConfigError("negative sampling needs at least two hashtags")
    degree = np.diff(graph.R.indptr)
    saturated = degree >= m
    if saturated.any():
        LOGGER.warning(
            "%d users interact with every hashtag; skipping their triples",
            int(saturated.sum()),
        )
        pairs = pairs[~saturated[pairs[:, 0]]]
        if pairs.shape[0] == 0:
            raise ConfigError("no sampleable edges remain")
    pairs = pairs[rng.permutation(pairs.shape[0])]
    users = pairs[:, 0]
    positives = pairs[:, 1]
    keys = _edge_keys(graph)
    negatives = rng.integers(0, m, size=len(users), dtype=np.int64)
    bad = _is_member(keys, users * m + negatives)
    while bad.any():
        redraw = rng.integers(0, m, size=int(bad.sum()), dtype=np.int64)
        negatives[bad] = redraw
        still = _is_member(keys, users[bad] * m + redraw)
        next_bad = np.zeros_like(bad)
        next_bad[bad] = still
        bad = next_bad
    return np.column_stack([users, positives, negatives])


def _pair_scores(triples: np.ndarray, out: PropagationOutput) -> np.ndarray:
    u, i, j = triples[:, 0], triples[:, 1], triples[:, 2]
    diff = out.final_hashtags[i] - out.final_hashtags[j]
    return np.einsum("nd,nd->n", out.final_users[u], diff)


def bpr_loss(
    triples: np.ndarray,
    out: PropagationOutput,
    e0_stacked: np.ndarray,
    lambda_reg: float,
) -> float:
    """Sum of -log sigmoid(positive - negative) plus L2 on E0."""
    reg = lambda_reg * float(np.sum(e0_stacked * e0_stacked))
    if triples.shape[0] == 0:
        return reg
    x = _pair_scores(triples, out)
    return float(np.logaddexp(0.0, -x).sum() + reg)


def grad_e0(
    triples: np.ndarray,
    out: PropagationOutput,
    ops,
    cfg: ModelConfig,
    e0_stacked: np.ndarray,
    lambda_reg: float,
) -> np.ndarray:
    """Exact loss gradient with respect to the initial embeddings.

    The final embeddings are a fixed linear operator applied to E0, and the
    operator is symmetric, so the pull-back is the same layer-averaged
    propagation applied to the cotangent matrix.
    """
    n = ops.n_users
    n_items = e0_stacked.shape[0] - n
    g_users = np.zeros((n, e0_stacked.shape[1]))
    g_items = np.zeros((n_items, e0_stacked.shape[1]))
    if triples.shape[0] > 0:
        u, i, j = triples[:, 0], triples[:, 1], triples[:, 2]
        eu = out.final_users[u]
        diff = out.final_hashtags[i] - out.final_hashtags[j]
        s = expit(-np.einsum("nd,nd->n", eu, diff))[:, None]
        np.add.at(g_users, u, -s * diff)
        np.add.at(g_items, i, -s * eu)
        np.add.at(g_items, j, s * eu)
    n_channels = 1 + len(ops.user_channels())
    g_users /= n_channels
    grad = layer_averaged_propagate(
        ops.bipartite, np.concatenate([g_users, g_items], axis=0),
        cfg.n_layers, cfg.include_layer0,
    )
    for op in ops.user_channels():
        grad[:n] += layer_averaged_propagate(op, g_users, cfg.n_layers, cfg.include_layer0)
    grad += 2.0 * lambda_reg * e0_stacked
    return grad


def evaluate_loss(
    e0_stacked: np.ndarray,
    triples: np.ndarray,
    ops,
    cfg: ModelConfig,
    lambda_reg: float,
) -> float:
    """Full forward pass plus loss; the function finite differences probe."""
    out = forward(e0_stacked, ops, cfg)
    return bpr_loss(triples, out, e0_stacked, lambda_reg)


@dataclass
class HistoryRow:
    epoch: int
    loss: float
    recall: float
    ndcg: float
    elapsed_ms: float


def save_history(rows: list[HistoryRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "recall@20", "ndcg@20", "elapsed_ms"])
        for row in rows:
            writer.writerow([
                row.epoch,
                f"{row.loss:.10g}",
                f"{row.recall:.6f}",
                f"{row.ndcg:.6f}",
                f"{row.elapsed_ms:.1f}",
            ])


def train(
    graph: BipartiteGraph,
    channels: ChannelSet | None,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    val_edges: np.ndarray,
    seed: int = 0,
) -> tuple[EmbeddingState, list[HistoryRow]]:
    """Fit embeddings on the graph, early-stopping on validation recall.

    val_edges is an array of (user, hashtag) pairs hidden from the graph.
    Returns the best checkpoint by validation recall@20 and the per-epoch
    history.
    """
    val_edges = np.asarray(val_edges, dtype=np.int64).reshape(-1, 2)
    if val_edges.shape[0] == 0 and train_cfg.max_epochs > 0:
        raise ConfigError("training needs validation edges for early stopping")
    ops = build_operators(graph, channels, model_cfg)
    n, m = graph.n_users, graph.n_hashtags
    pretrained = channels.pretrained if channels is not None else None
    state = init_embeddings(n, m, model_cfg, seed, pretrained)
    params = state.stacked()
    adam = AdamState.for_shape(params.shape)
    rng = np.random.default_rng(seed)

    relevant: dict[int, set[int]] = {}
    for u, j in val_edges:
        relevant.setdefault(int(u), set()).add(int(j))
    exclude = lambda u: graph.neighbors(u)  # noqa: E731

    best_params = params.copy()
    best_recall = -np.inf
    best_epoch = 0
    evals_since_best = 0
    history: list[HistoryRow] = []

    for epoch in range(1, train_cfg.max_epochs + 1):
        t0 = time.perf_counter()
        triples = sample_epoch(graph, rng)
        bpr_sum = 0.0
        batch_index = 0
        out = None
        for start in range(0, triples.shape[0], train_cfg.batch_size):
            batch = triples[start:start + train_cfg.batch_size]
            if out is None or batch_index % train_cfg.refresh_every == 0:
                out = forward(params, ops, model_cfg)
            bpr_sum += bpr_loss(batch, out, params, 0.0)
            grad = grad_e0(batch, out, ops, model_cfg, params, train_cfg.lambda_reg)
            adam_step(adam, params, grad, train_cfg.learning_rate)
            batch_index += 1
        reg = train_cfg.lambda_reg * float(np.sum(params * params))
        epoch_loss = bpr_sum / triples.shape[0] + reg

        recall = ndcg = float("nan")
        if epoch % train_cfg.eval_every == 0:
            out = forward(params, ops, model_cfg)
            recall, ndcg, _ = ranking_metrics(
                out.final_users, out.final_hashtags, exclude, relevant, k=EVAL_K
            )
            if recall > best_recall:
                best_recall = recall
                best_params = params.copy()
                best_epoch = epoch
                evals_since_best = 0
            else:
                evals_since_best += 1
        elapsed_ms = (time.perf_counter() - t0) * 1000.0
        history.append(HistoryRow(epoch, epoch_loss, recall, ndcg, elapsed_ms))
        LOGGER.debug(
            "epoch %d loss %.6f recall %.4f ndcg %.4f", epoch, epoch_loss, recall, ndcg
        )
        if evals_since_best >= train_cfg.patience:
            LOGGER.info(
                "early stop at epoch %d; best recall %.4f from epoch %d",
                epoch, best_recall, best_epoch,
            )
            break

    best = EmbeddingState.from_stacked(best_params, n, seed)
    return best, history

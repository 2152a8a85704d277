"""Mini-batch Adam training with early stopping on validation edge loss."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..catalog import DEFAULT_CATALOG, Catalog, feature_bounds
from .model import (
    EdgeFlowModel,
    ModelConfig,
    backward,
    compute_loss,
    forward,
    lowest_score,
    recover_scores,
    sign_accuracy,
    total_loss_and_grad,
)

log = logging.getLogger(__name__)


@dataclass
class EpochStats:
    epoch: int
    train_edge: float
    val_edge: float
    cycle: float
    sign_acc: float


@dataclass
class TrainReport:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = -1
    best_val_edge: float = math.inf
    stopped: str = ""
    wall_time: float = 0.0

    @property
    def best(self) -> EpochStats | None:
        for e in self.epochs:
            if e.epoch == self.best_epoch:
                return e
        return None


@dataclass
class EdgeBatch:
    """Subgraphs of one size stacked into arrays (raw units)."""

    features: np.ndarray  # (B, n, 7)
    contexts: np.ndarray  # (B, 17)
    targets: np.ndarray  # (B, n, n)


def stack_records(records, catalog: Catalog = DEFAULT_CATALOG) -> EdgeBatch:
    """Stack valid dataset records with finite objectives; all must have the same size."""
    feats_all = catalog.feature_matrix()
    keep = [r for r in records if r.valid and np.all(np.isfinite(r.f_values))]
    if not keep:
        raise ValueError("no valid records to train on")
    sizes = {len(r.node_ids) for r in keep}
    if len(sizes) != 1:
        raise ValueError(f"records must share one subgraph size, got {sorted(sizes)}")
    return EdgeBatch(
        np.stack([feats_all[r.node_ids - 1] for r in keep]),
        np.stack([r.context for r in keep]),
        np.stack([r.edge_diffs for r in keep]),
    )


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for k, g in grads.items():
            g = g.astype(params[k].dtype, copy=False)
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= (self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)).astype(params[k].dtype)


def evaluate(model: EdgeFlowModel, data: EdgeBatch, chunk: int = 16) -> tuple[float, float, float]:
    """(edge loss, cycle loss, sign accuracy) in normalized target units, dropout off."""
    preds = []
    X, c = model.inputs(data.features, data.contexts)
    for s in range(0, len(X), chunk):
        preds.append(forward(model.params, X[s : s + chunk], c[s : s + chunk], model.config).astype(float))
    pred = np.concatenate(preds)
    truth = data.targets / model.target_scale
    _, e, cyc = compute_loss(pred, truth, 0.0, model.config.huber_delta)
    return e, cyc, sign_accuracy(pred, truth)


def target_scale_of(data: EdgeBatch) -> float:
    """Spread of objective values within subgraphs, used to normalize edge targets."""
    f = data.targets[:, :, 0]  # f_i - f_0 per subgraph
    s = float(np.std(f - f.mean(axis=1, keepdims=True)))
    return s if s > 0 and math.isfinite(s) else 1.0


def train(
    train_data: EdgeBatch,
    val_data: EdgeBatch,
    config: ModelConfig | None = None,
    catalog: Catalog = DEFAULT_CATALOG,
    time_limit: float | None = None,
    meta: dict | None = None,
    progress=None,
) -> tuple[EdgeFlowModel, TrainReport]:
    """Fit an edge-flow model; returns the checkpoint with the lowest validation edge loss."""
    config = config or ModelConfig()
    if len(train_data.features) == 0 or len(val_data.features) == 0:
        raise ValueError("train and validation partitions must be non-empty")
    model = EdgeFlowModel.create(
        config, feature_bounds(catalog), (catalog.lower, catalog.upper), target_scale_of(train_data)
    )
    model.meta.update(meta or {})
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.params, config.learning_rate)
    X_all, c_all = model.inputs(train_data.features, train_data.contexts)
    T_all = (train_data.targets / model.target_scale).astype(X_all.dtype)
    best = {k: v.copy() for k, v in model.params.items()}
    report = TrainReport()
    start = time.perf_counter()
    since_best = 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(X_all))
        tot_e, n_b = 0.0, 0
        diverged = False
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            D, cache = forward(model.params, X_all[idx], c_all[idx], config, rng=rng, keep_cache=True)
            loss, e, _, dD = total_loss_and_grad(D, T_all[idx], config.lambda_cycle, config.huber_delta)
            if not math.isfinite(loss):
                diverged = True
                break
            opt.step(model.params, backward(model.params, cache, dD, config))
            tot_e += e
            n_b += 1
        if diverged or not all(np.all(np.isfinite(v)) for v in model.params.values()):
            report.stopped = f"non-finite loss at epoch {epoch}"
            log.warning("training diverged at epoch %d; keeping last finite checkpoint", epoch)
            break
        val_e, val_c, acc = evaluate(model, val_data)
        stats = EpochStats(epoch, tot_e / max(n_b, 1), val_e, val_c, acc)
        report.epochs.append(stats)
        if progress is not None:
            progress(stats)
        if val_e < report.best_val_edge:
            report.best_val_edge, report.best_epoch = val_e, epoch
            best = {k: v.copy() for k, v in model.params.items()}
            since_best = 0
        else:
            since_best += 1
        if since_best >= config.patience:
            report.stopped = f"no validation improvement for {config.patience} epochs"
            break
        if time_limit is not None and time.perf_counter() - start > time_limit:
            report.stopped = "time limit"
            break
    else:
        report.stopped = "max epochs"
    model.params = best
    report.wall_time = time.perf_counter() - start
    return model, report


class ModelRecommender:
    """Greedy node choice from predicted edge differences."""

    def __init__(self, model: EdgeFlowModel, catalog: Catalog = DEFAULT_CATALOG):
        self.model = model
        self.features = catalog.feature_matrix()

    def recommend(self, node_ids, context) -> int:
        return self.recommend_batch([node_ids], [context])[0]

    def recommend_batch(self, id_sets, contexts) -> list[int]:
        out = [None] * len(id_sets)
        groups: dict[int, list[int]] = {}
        for q, ids in enumerate(id_sets):
            groups.setdefault(len(ids), []).append(q)
        for n, qs in groups.items():
            if n == 1:
                for q in qs:
                    out[q] = int(np.asarray(id_sets[q])[0])
                continue
            feats = np.stack([self.features[np.asarray(id_sets[q]) - 1] for q in qs])
            ctx = np.stack([np.asarray(contexts[q], dtype=float) for q in qs])
            D = self.model.predict(feats, ctx)
            for q, d in zip(qs, D):
                out[q] = lowest_score(id_sets[q], recover_scores(d))
        return out


class OracleRecommender:
    """Exact argmin over the subgraph, using a vectorized objective ``f(node_ids, context)``."""

    def __init__(self, score_fn):
        self.score_fn = score_fn

    def recommend(self, node_ids, context) -> int:
        return lowest_score(node_ids, np.asarray(self.score_fn(np.asarray(node_ids), np.asarray(context))))

    def recommend_batch(self, id_sets, contexts) -> list[int]:
        return [self.recommend(i, c) for i, c in zip(id_sets, contexts)]


def recommend(model: EdgeFlowModel, node_ids, context, catalog: Catalog = DEFAULT_CATALOG) -> int:
    """Node of the subgraph with the lowest recovered score."""
    return ModelRecommender(model, catalog).recommend(node_ids, context)


def with_lambda(config: ModelConfig, lam: float) -> ModelConfig:
    return replace(config, lambda_cycle=lam)

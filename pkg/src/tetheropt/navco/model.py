"""Context-conditioned edge-flow network with hand-written reverse-mode gradients.

Encoder: ``L`` rounds of mean-aggregation message passing over the complete
subgraph, then a linear projection to node embeddings ``z``. Decoder: a pair
MLP ``g(z_i, z_j, ctx)`` with residual blocks. The output edge matrix is
``D = G - G^T``, antisymmetric with a zero diagonal by construction.

All array functions work on batches of equally sized subgraphs:
node inputs ``X`` (B, n, d_in) and contexts ``ctx`` (B, d_ctx).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit

CHECKPOINT_FORMAT = "tetheropt-edgeflow"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    encoder_layers: int = 3
    hidden_dim: int = 128
    embed_dim: int = 64
    decoder_layers: int = 5
    dropout: float = 0.30
    lambda_cycle: float = 0.003
    huber_delta: float = 1.0
    learning_rate: float = 1e-3
    batch_size: int = 8
    max_epochs: int = 1000
    patience: int = 100
    seed: int = 0

    def __post_init__(self):
        if min(self.encoder_layers, self.hidden_dim, self.embed_dim, self.decoder_layers) <= 0:
            raise ValueError("layer counts and widths must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.huber_delta <= 0 or self.learning_rate <= 0 or self.batch_size <= 0:
            raise ValueError("huber_delta, learning_rate and batch_size must be positive")


def silu(x):
    return x * expit(x)


def silu_grad(x):
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def _glorot(rng, fan_in, fan_out, dtype):
    lim = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out)).astype(dtype)


def init_params(config: ModelConfig, d_in: int, d_ctx: int, rng: np.random.Generator, dtype=np.float32) -> dict:
    """Named parameter arrays. Residual branches start small so the decoder begins near identity."""
    H, E = config.hidden_dim, config.embed_dim
    p = {}
    width = d_in
    for l in range(config.encoder_layers):
        p[f"enc{l}.w_self"] = _glorot(rng, width, H, dtype)
        p[f"enc{l}.w_nbr"] = _glorot(rng, width, H, dtype)
        p[f"enc{l}.b"] = np.zeros(H, dtype)
        width = H
    p["proj.w"] = _glorot(rng, H, E, dtype)
    p["proj.b"] = np.zeros(E, dtype)
    p["dec_in.w_src"] = _glorot(rng, E, H, dtype)
    p["dec_in.w_dst"] = _glorot(rng, E, H, dtype)
    p["dec_in.w_ctx"] = _glorot(rng, d_ctx, H, dtype)
    p["dec_in.b"] = np.zeros(H, dtype)
    for k in range(config.decoder_layers):
        p[f"dec{k}.w"] = (0.5 * _glorot(rng, H, H, dtype)).astype(dtype)
        p[f"dec{k}.b"] = np.zeros(H, dtype)
    p["out.w"] = _glorot(rng, H, 1, dtype)[:, 0]
    return p


def _dropout_mask(rng, shape, rate, dtype):
    if rng is None or rate <= 0.0:
        return None
    keep = 1.0 - rate
    return ((rng.random(shape) < keep) / keep).astype(dtype)


def forward(params: dict, X, ctx, config: ModelConfig, rng: np.random.Generator | None = None, keep_cache=False):
    """Edge matrices (B, n, n). Dropout is applied only when ``rng`` is given."""
    X = np.asarray(X)
    ctx = np.asarray(ctx)
    if X.ndim != 3 or ctx.ndim != 2 or ctx.shape[0] != X.shape[0]:
        raise ValueError(f"expected X (B, n, d) and ctx (B, d_ctx); got {X.shape} and {ctx.shape}")
    if X.shape[2] != params["enc0.w_self"].shape[0] or ctx.shape[1] != params["dec_in.w_ctx"].shape[0]:
        raise ValueError(
            f"input widths {X.shape[2]}/{ctx.shape[1]} do not match the model "
            f"({params['enc0.w_self'].shape[0]}/{params['dec_in.w_ctx'].shape[0]})"
        )
    dtype = params["proj.w"].dtype
    n = X.shape[1]
    rate = config.dropout
    cache = {"enc": [], "dec": []}
    H = X.astype(dtype, copy=False)
    for l in range(config.encoder_layers):
        M = (H.sum(axis=1, keepdims=True) - H) / (n - 1) if n > 1 else np.zeros_like(H)
        P = H @ params[f"enc{l}.w_self"] + M @ params[f"enc{l}.w_nbr"] + params[f"enc{l}.b"]
        out = silu(P)
        mask = _dropout_mask(rng, out.shape, rate, dtype)
        if mask is not None:
            out = out * mask
        cache["enc"].append((H, M, P, mask))
        H = out
    Z = H @ params["proj.w"] + params["proj.b"]
    cache["H_last"] = H
    cache["Z"] = Z
    A = Z @ params["dec_in.w_src"]
    Bm = Z @ params["dec_in.w_dst"]
    C = ctx.astype(dtype, copy=False) @ params["dec_in.w_ctx"] + params["dec_in.b"]
    P0 = A[:, :, None, :] + Bm[:, None, :, :] + C[:, None, None, :]
    R = silu(P0)
    cache["ctx"] = ctx.astype(dtype, copy=False)
    cache["P0"] = P0
    for k in range(config.decoder_layers):
        Q = R @ params[f"dec{k}.w"] + params[f"dec{k}.b"]
        T = silu(Q)
        mask = _dropout_mask(rng, T.shape, rate, dtype)
        if mask is not None:
            T = T * mask
        cache["dec"].append((R, Q, mask))
        R = R + T
    cache["R_last"] = R
    G = R @ params["out.w"]
    D = G - np.swapaxes(G, 1, 2)
    return (D, cache) if keep_cache else D


def backward(params: dict, cache: dict, dD, config: ModelConfig) -> dict:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/dD."""
    grads = {}
    dG = dD - np.swapaxes(dD, 1, 2)
    R = cache["R_last"]
    grads["out.w"] = np.einsum("bijh,bij->h", R, dG)
    dR = dG[..., None] * params["out.w"]
    hid = R.shape[-1]
    for k in reversed(range(config.decoder_layers)):
        R_in, Q, mask = cache["dec"][k]
        dT = dR if mask is None else dR * mask
        dQ = dT * silu_grad(Q)
        flatQ = dQ.reshape(-1, hid)
        grads[f"dec{k}.w"] = R_in.reshape(-1, hid).T @ flatQ
        grads[f"dec{k}.b"] = flatQ.sum(axis=0)
        dR = dR + dQ @ params[f"dec{k}.w"].T
    dP0 = dR * silu_grad(cache["P0"])
    dA = dP0.sum(axis=2)
    dB = dP0.sum(axis=1)
    dC = dP0.sum(axis=(1, 2))
    Z = cache["Z"]
    E = Z.shape[-1]
    grads["dec_in.w_ctx"] = cache["ctx"].T @ dC
    grads["dec_in.b"] = dC.sum(axis=0)
    grads["dec_in.w_src"] = Z.reshape(-1, E).T @ dA.reshape(-1, hid)
    grads["dec_in.w_dst"] = Z.reshape(-1, E).T @ dB.reshape(-1, hid)
    dZ = dA @ params["dec_in.w_src"].T + dB @ params["dec_in.w_dst"].T
    H = cache["H_last"]
    grads["proj.w"] = H.reshape(-1, H.shape[-1]).T @ dZ.reshape(-1, E)
    grads["proj.b"] = dZ.reshape(-1, E).sum(axis=0)
    dH = dZ @ params["proj.w"].T
    for l in reversed(range(config.encoder_layers)):
        H_in, M, P, mask = cache["enc"][l]
        n = H_in.shape[1]
        dOut = dH if mask is None else dH * mask
        dP = dOut * silu_grad(P)
        w = H_in.shape[-1]
        flatP = dP.reshape(-1, dP.shape[-1])
        grads[f"enc{l}.w_self"] = H_in.reshape(-1, w).T @ flatP
        grads[f"enc{l}.w_nbr"] = M.reshape(-1, w).T @ flatP
        grads[f"enc{l}.b"] = flatP.sum(axis=0)
        if l == 0:
            break
        dM = dP @ params[f"enc{l}.w_nbr"].T
        dH = dP @ params[f"enc{l}.w_self"].T
        if n > 1:
            dH = dH + (dM.sum(axis=1, keepdims=True) - dM) / (n - 1)
    return grads


# ---------------------------------------------------------------- losses


def huber(r, delta):
    a = np.abs(r)
    return np.where(a <= delta, 0.5 * r * r, delta * (a - 0.5 * delta))


def edge_loss(pred, truth, delta: float = 1.0):
    """Mean Huber residual over ordered off-diagonal edges; returns (loss, dLoss/dpred)."""
    pred = np.asarray(pred)
    B, n, _ = pred.shape
    if n < 2:
        return 0.0, np.zeros_like(pred)
    r = pred - np.asarray(truth, dtype=pred.dtype)
    off = ~np.eye(n, dtype=bool)
    count = B * n * (n - 1)
    loss = float(huber(r, delta)[:, off].sum() / count)
    grad = np.clip(r, -delta, delta) * off / count
    return loss, grad.astype(pred.dtype)


def n_triangles(n: int) -> int:
    return n * (n - 1) * (n - 2) // 6


def cycle_loss(pred):
    """Mean squared circulation over all triangles of each subgraph, averaged over the batch.

    For antisymmetric ``D`` the sum of squared circulations over all ordered
    index triples equals ``3 n |D|^2 + 6 sum(D @ D)``; each unordered triangle
    appears six times with the same square.
    """
    pred = np.asarray(pred)
    B, n, _ = pred.shape
    tri = n_triangles(n)
    if tri == 0:
        return 0.0, np.zeros_like(pred)
    rows = pred.sum(axis=2)  # (B, n)
    cols = pred.sum(axis=1)
    sq = (pred * pred).sum(axis=(1, 2))
    dd = (rows * cols).sum(axis=1)  # sum of D @ D
    denom = 6.0 * tri
    loss = float(((3 * n * sq + 6 * dd) / denom).mean())
    grad = (6 * n * pred + 6 * (cols[:, :, None] + rows[:, None, :])) / (denom * B)
    return loss, grad.astype(pred.dtype)


def circulation(pred, i, j, k):
    return pred[..., i, j] + pred[..., j, k] + pred[..., k, i]


def compute_loss(pred, truth, lambda_cycle: float = 0.003, delta: float = 1.0):
    """(total, edge, cycle) for a batch of (or a single) edge matrices."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    e, _ = edge_loss(pred, truth, delta)
    c, _ = cycle_loss(pred)
    return e + lambda_cycle * c, e, c


def total_loss_and_grad(pred, truth, lambda_cycle, delta):
    e, ge = edge_loss(pred, truth, delta)
    c, gc = cycle_loss(pred)
    return e + lambda_cycle * c, e, c, ge + lambda_cycle * gc


def sign_accuracy(pred, truth, zero_tol: float = 1e-9) -> float:
    """Fraction of unordered edges whose predicted direction matches the truth."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.ndim == 2:
        pred, truth = pred[None], truth[None]
    n = pred.shape[-1]
    iu = np.triu_indices(n, k=1)
    p = pred[:, iu[0], iu[1]]
    t = truth[:, iu[0], iu[1]]
    if p.size == 0:
        return 1.0
    correct = np.where(t == 0, np.abs(p) < zero_tol, np.sign(p) == np.sign(t))
    return float(correct.mean())


def recover_scores(edges) -> np.ndarray:
    """Row mean of an antisymmetric edge matrix: a least-squares node potential."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim < 2 or edges.shape[-1] != edges.shape[-2]:
        raise ValueError("edge matrix must be square")
    return edges.mean(axis=-1)


def lowest_score(node_ids, scores) -> int:
    """Node with the smallest score; ties go to the lowest id."""
    node_ids = np.asarray(node_ids)
    scores = np.asarray(scores)
    best = scores.min()
    return int(node_ids[scores == best].min())


# ---------------------------------------------------------------- model container


@dataclass
class EdgeFlowModel:
    config: ModelConfig
    params: dict
    feature_lo: np.ndarray
    feature_hi: np.ndarray
    context_lo: np.ndarray
    context_hi: np.ndarray
    target_scale: float = 1.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def create(cls, config: ModelConfig, feature_bounds, context_bounds, target_scale=1.0, dtype=np.float32):
        flo, fhi = (np.asarray(b, dtype=float) for b in feature_bounds)
        clo, chi = (np.asarray(b, dtype=float) for b in context_bounds)
        rng = np.random.default_rng(config.seed)
        params = init_params(config, len(flo) + len(clo), len(clo), rng, dtype)
        return cls(config, params, flo, fhi, clo, chi, float(target_scale))

    @property
    def d_features(self) -> int:
        return len(self.feature_lo)

    def _norm(self, x, lo, hi):
        return (np.asarray(x, dtype=float) - lo) / np.where(hi > lo, hi - lo, 1.0)

    def inputs(self, features, contexts):
        """Normalized node inputs (B, n, d_feat + d_ctx) and contexts (B, d_ctx)."""
        f = self._norm(features, self.feature_lo, self.feature_hi)
        c = self._norm(contexts, self.context_lo, self.context_hi)
        if f.ndim == 2:
            f, c = f[None], np.atleast_2d(c)
        n = f.shape[1]
        X = np.concatenate([f, np.broadcast_to(c[:, None, :], (f.shape[0], n, c.shape[-1]))], axis=-1)
        dtype = self.params["proj.w"].dtype
        return X.astype(dtype), c.astype(dtype)

    def predict(self, features, contexts) -> np.ndarray:
        """Edge differences in objective units; (n, n) for one subgraph or (B, n, n)."""
        single = np.asarray(features).ndim == 2
        X, c = self.inputs(features, contexts)
        D = forward(self.params, X, c, self.config).astype(float) * self.target_scale
        return D[0] if single else D

    def to_dtype(self, dtype) -> "EdgeFlowModel":
        params = {k: v.astype(dtype) for k, v in self.params.items()}
        return EdgeFlowModel(
            self.config, params, self.feature_lo, self.feature_hi, self.context_lo, self.context_hi,
            self.target_scale, dict(self.meta),
        )

    def save(self, path) -> None:
        meta = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "target_scale": self.target_scale,
            "meta": self.meta,
            "param_names": sorted(self.params),
        }
        arrays = {f"param/{k}": v for k, v in self.params.items()}
        arrays.update(
            {
                "norm/feature_lo": self.feature_lo,
                "norm/feature_hi": self.feature_hi,
                "norm/context_lo": self.context_lo,
                "norm/context_hi": self.context_hi,
            }
        )
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path, expect: dict | None = None) -> "EdgeFlowModel":
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format") != CHECKPOINT_FORMAT or meta.get("version") != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint {meta.get('format')} v{meta.get('version')}")
            for key, value in (expect or {}).items():
                found = meta["meta"].get(key)
                if found != value:
                    raise ValueError(f"{path}: {key} mismatch (checkpoint {found!r}, expected {value!r})")
            params = {k: data[f"param/{k}"].copy() for k in meta["param_names"]}
            return cls(
                ModelConfig(**meta["config"]),
                params,
                data["norm/feature_lo"].copy(),
                data["norm/feature_hi"].copy(),
                data["norm/context_lo"].copy(),
                data["norm/context_hi"].copy(),
                float(meta["target_scale"]),
                meta["meta"],
            )

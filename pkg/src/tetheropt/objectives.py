"""Objective evaluators: the capture simulator and cheap synthetic stand-ins.

Every evaluator maps a :class:`DesignPoint` to an :class:`Evaluation`. They
are plain dataclasses so they pickle cleanly into worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .catalog import DEFAULT_CATALOG, Catalog, DesignPoint, normalize, normalize_features
from .metrics import ObjectiveConfig, failure_penalty, is_success

log = logging.getLogger(__name__)


@dataclass
class Evaluation:
    f: float
    violation: float = 0.0
    success: bool = True
    outcome: dict | None = None  # raw simulator outcome, when there is one
    error: str | None = None

    @property
    def feasible(self) -> bool:
        return self.success and self.error is None

    def rescored(self, config: ObjectiveConfig) -> "Evaluation":
        """Same raw outcome under a different penalty offset."""
        if self.outcome is None or self.error is not None:
            return self
        o = self.outcome
        ok = is_success(o["cqi_final"], o["n_locked"], o["tension_failed"], config)
        viol = 0.0 if ok else failure_penalty(o["cqi_final"], o["n_locked"], config)
        f = o["m_prop"] if ok else viol + config.beta
        return Evaluation(float(f), float(viol), ok, dict(o))


def failed_evaluation(message: str) -> Evaluation:
    return Evaluation(math.inf, math.inf, False, None, message)


@dataclass
class SimulationObjective:
    """Runs one capture and scores it with the penalized objective."""

    sim_config: object = None  # SimConfig; kept untyped to avoid a hard import cycle
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)

    def __call__(self, design: DesignPoint) -> Evaluation:
        from .netsim import SimConfig, run_capture

        outcome = run_capture(design, self.sim_config or SimConfig())
        raw = {
            "cqi_final": outcome.cqi_final,
            "n_locked": outcome.n_locked,
            "m_prop": outcome.m_prop,
            "tension_failed": outcome.tension_failed,
        }
        return Evaluation(0.0, 0.0, False, raw).rescored(self.objective)


@dataclass
class SeparableBenchmark:
    """Node term plus a shifted quadratic bowl in the normalized continuous box.

    The node term is a random smooth function of the normalized node
    features scaled to [0, node_scale], so it is learnable from features but
    unrelated to the ordering of node ids.
    """

    seed: int = 0
    catalog: Catalog = DEFAULT_CATALOG
    node_scale: float = 1.0
    bowl_scale: float = 1.0
    frequency: float = 1.0  # of the sinusoidal part of the node term
    _node_values: np.ndarray = field(init=False, repr=False)
    _centre: np.ndarray = field(init=False, repr=False)
    _weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        feats = normalize_features(self.catalog.feature_matrix(), self.catalog)
        w = rng.normal(size=feats.shape[1])
        a = rng.normal(size=feats.shape[1])
        raw = feats @ w + 0.5 * np.sin(self.frequency * feats @ a)
        self._node_values = self.node_scale * (raw - raw.min()) / (raw.max() - raw.min())
        self._centre = rng.integers(2, 9, size=len(self.catalog.bounds)) / 10.0  # on a 0.1 grid
        self._weights = rng.uniform(0.5, 2.0, size=len(self.catalog.bounds))

    def node_term(self, index: int) -> float:
        return float(self._node_values[index - 1])

    def continuous_term(self, u: np.ndarray) -> float:
        return float(self.bowl_scale * np.sum(self._weights * (u - self._centre) ** 2))

    @property
    def optimum(self) -> float:
        return float(self._node_values.min())

    @property
    def optimal_node(self) -> int:
        return int(np.argmin(self._node_values)) + 1

    @property
    def optimal_continuous(self) -> np.ndarray:
        return self._centre.copy()

    def value(self, index: int, u: np.ndarray) -> float:
        return self.node_term(index) + self.continuous_term(u)

    def __call__(self, design: DesignPoint) -> Evaluation:
        _, u = normalize(design, self.catalog)
        return Evaluation(self.value(design.comb.index, u))


@dataclass
class MultimodalBenchmark:
    """Smooth multimodal function coupling normalized node features and context."""

    seed: int = 0
    catalog: Catalog = DEFAULT_CATALOG
    n_terms: int = 6
    _P: np.ndarray = field(init=False, repr=False)
    _Q: np.ndarray = field(init=False, repr=False)
    _amp: np.ndarray = field(init=False, repr=False)
    _phase: np.ndarray = field(init=False, repr=False)
    _lin: np.ndarray = field(init=False, repr=False)
    _C: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        n_f = 7
        n_c = len(self.catalog.bounds)
        self._P = rng.normal(size=(self.n_terms, n_f)) * 1.5
        self._Q = rng.normal(size=(self.n_terms, n_c)) * 0.5
        self._amp = rng.uniform(0.3, 1.0, size=self.n_terms)
        self._phase = rng.uniform(0, 2 * np.pi, size=self.n_terms)
        self._lin = rng.normal(size=n_f)
        self._C = rng.normal(size=(n_f, n_c)) * 0.5

    def value(self, u_feat: np.ndarray, u_cont: np.ndarray) -> np.ndarray:
        """Vectorized over leading axes of ``u_feat`` (..., 7)."""
        z = np.asarray(u_feat, dtype=float)
        x = np.asarray(u_cont, dtype=float)
        waves = np.sin(z @ self._P.T + (self._Q @ x) + self._phase) @ self._amp
        return waves + z @ self._lin + z @ (self._C @ (x - 0.5))

    def __call__(self, design: DesignPoint) -> Evaluation:
        u_feat, u_cont = normalize(design, self.catalog)
        return Evaluation(float(self.value(u_feat, u_cont)))


def _safe_call(evaluator, design):
    try:
        return evaluator(design)
    except Exception as exc:  # noqa: BLE001 - any failure is scored, not raised
        log.warning("evaluation of node %d failed: %s", design.comb.index, exc)
        return failed_evaluation(str(exc))


def evaluate_many(evaluator, designs, jobs: int = 1) -> list[Evaluation]:
    """Evaluate ``designs`` in order; failures come back as infinite scores."""
    designs = list(designs)
    if jobs <= 1 or len(designs) <= 1:
        return [_safe_call(evaluator, d) for d in designs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_safe_call, [evaluator] * len(designs), designs, chunksize=max(1, len(designs) // (4 * jobs))))

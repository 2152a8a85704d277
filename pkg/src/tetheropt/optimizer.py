"""Mixed-discrete particle swarm: recommender-aided and integer-encoded modes.

Both modes search the normalized continuous box [0, 1]^17 with the same
inertia-weight PSO and the same initial population. They differ only in how
the combinatorial node of each particle is chosen:

* recommender-aided: a subgraph anchored at the particle's cached node is
  ranked by the recommender and the top node is evaluated;
* integer-encoded: an extra PSO coordinate is rounded to a node id.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import DEFAULT_CATALOG, Catalog, ContinuousVector, DesignPoint, denormalize_continuous, normalize_continuous
from .graphspace import FullGraph, sample_subgraph
from .objectives import Evaluation, evaluate_many

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SwarmConfig:
    population: int = 100
    max_iterations: int = 200
    stagnation_window: int = 15
    tolerance: float = 1e-5
    inertia: float = 0.729
    cognitive: float = 1.49445
    social: float = 1.49445
    velocity_clamp: float = 0.5  # fraction of the (unit) range
    n_sn: int = 30
    discrete_stagnation: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be > 1")
        if self.max_iterations < 1 or self.stagnation_window < 1:
            raise ValueError("max_iterations and stagnation_window must be positive")


@dataclass
class IterationRecord:
    iteration: int
    evaluations: int
    best_f: float
    feasible: bool
    best_violation: float
    best_node: int
    best_x: np.ndarray


@dataclass
class ConvergenceHistory:
    records: list[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def best_f(self) -> np.ndarray:
        return np.array([r.best_f for r in self.records])

    @property
    def evaluations(self) -> np.ndarray:
        return np.array([r.evaluations for r in self.records])

    def evaluations_to_reach(self, target: float, tol: float = 1e-3) -> int | None:
        """Cumulative evaluations at the first iteration whose best is within ``tol`` of ``target``."""
        for r in self.records:
            if r.best_f <= target + tol:
                return r.evaluations
        return None


@dataclass
class Particle:
    x: np.ndarray  # normalized continuous position
    velocity: np.ndarray
    node: int  # cached node (aided) / rounded integer coordinate (baseline)
    x_int: float = 1.0  # continuous integer coordinate, baseline only
    v_int: float = 0.0
    best_x: np.ndarray | None = None
    best_node: int = 0
    best_f: float = math.inf
    best_violation: float = math.inf
    best_feasible: bool = False
    best_x_int: float = 1.0
    stagnant: int = 0


def to_continuous(u: np.ndarray, catalog: Catalog = DEFAULT_CATALOG) -> ContinuousVector:
    """Denormalize and clamp exactly onto the bounds (guards against rounding at the edges)."""
    return ContinuousVector.from_array(np.clip(denormalize_continuous(u, catalog), catalog.lower, catalog.upper))


def _better(f_a, viol_a, feas_a, f_b, viol_b, feas_b) -> bool:
    """Feasibility-first comparison: feasible beats infeasible, then lower f / violation."""
    if feas_a != feas_b:
        return feas_a
    if feas_a:
        return f_a < f_b
    if viol_a != viol_b:
        return viol_a < viol_b
    return f_a < f_b


def initial_population(config: SwarmConfig, n_tot: int, dim: int = 17):
    """Shared initializer: identical positions, velocities and nodes for both modes.

    Also returns separate generators for the continuous PSO update and for the
    discrete side (subgraph sampling or integer moves), so both modes draw the
    same continuous random coefficients.
    """
    ss = np.random.SeedSequence(config.seed)
    pos_ss, vel_ss, node_ss, cont_ss, disc_ss = ss.spawn(5)
    X = np.random.default_rng(pos_ss).random((config.population, dim))
    V = (np.random.default_rng(vel_ss).random((config.population, dim)) - 0.5) * config.velocity_clamp
    nodes = np.random.default_rng(node_ss).integers(1, n_tot + 1, size=config.population)
    return X, V, nodes, np.random.default_rng(cont_ss), np.random.default_rng(disc_ss)


class _Swarm:
    def __init__(self, evaluator, config: SwarmConfig, catalog: Catalog, jobs: int):
        self.evaluator = evaluator
        self.config = config
        self.catalog = catalog
        self.graph = FullGraph(catalog)
        self.jobs = jobs
        X, V, nodes, self.rng, self.disc_rng = initial_population(config, self.graph.n_tot, len(catalog.bounds))
        self.particles = [Particle(X[p].copy(), V[p].copy(), int(nodes[p]), float(nodes[p])) for p in range(len(X))]
        self.history = ConvergenceHistory()
        self.n_evals = 0
        self.g_best = (math.inf, math.inf, False, None, 0)  # f, violation, feasible, x, node

    def design(self, node: int, x: np.ndarray) -> DesignPoint:
        return DesignPoint(self.graph.node(node), to_continuous(x, self.catalog))

    def evaluate(self, nodes, xs) -> list[Evaluation]:
        evals = evaluate_many(self.evaluator, [self.design(n, x) for n, x in zip(nodes, xs)], self.jobs)
        self.n_evals += len(evals)
        return evals

    def update_bests(self, evals, nodes):
        for p, e, node in zip(self.particles, evals, nodes):
            f = e.f if math.isfinite(e.f) else math.inf
            viol = e.violation if e.error is None else math.inf
            if _better(f, viol, e.feasible, p.best_f, p.best_violation, p.best_feasible) or p.best_x is None:
                p.best_x, p.best_node, p.best_f = p.x.copy(), int(node), f
                p.best_violation, p.best_feasible, p.best_x_int = viol, e.feasible, p.x_int
                p.stagnant = 0
            else:
                p.stagnant += 1
            gf, gv, gfeas, _, _ = self.g_best
            if _better(f, viol, e.feasible, gf, gv, gfeas):
                self.g_best = (f, viol, e.feasible, p.x.copy(), int(node))

    def record(self, it):
        f, viol, feas, x, node = self.g_best
        self.history.records.append(
            IterationRecord(it, self.n_evals, f, feas, viol, node, None if x is None else x.copy())
        )

    def move_continuous(self):
        c = self.config
        g_x = self.g_best[3]
        for p in self.particles:
            r1 = self.rng.random(p.x.shape)
            r2 = self.rng.random(p.x.shape)
            v = c.inertia * p.velocity + c.cognitive * r1 * (p.best_x - p.x) + c.social * r2 * (g_x - p.x)
            p.velocity = np.clip(v, -c.velocity_clamp, c.velocity_clamp)
            p.x = np.clip(p.x + p.velocity, 0.0, 1.0)

    def stop_reason(self) -> str | None:
        w, tol = self.config.stagnation_window, self.config.tolerance
        recs = self.history.records
        if len(recs) <= w:
            return None
        window = recs[-(w + 1) :]
        if not window[-1].feasible:
            if all(not r.feasible for r in window) and window[0].best_violation - window[-1].best_violation <= tol:
                return "constraint violation stagnated"
        elif all(r.feasible for r in window) and window[0].best_f - window[-1].best_f <= tol:
            return "objective stagnated"
        return None

    def run(self, choose_nodes, move_discrete=None):
        c = self.config
        nodes = [p.node for p in self.particles]
        evals = self.evaluate(nodes, [p.x for p in self.particles])
        self.update_bests(evals, nodes)
        self.record(0)
        for it in range(1, c.max_iterations + 1):
            self.move_continuous()
            if move_discrete is not None:
                move_discrete()
            nodes = choose_nodes()
            evals = self.evaluate(nodes, [p.x for p in self.particles])
            self.update_bests(evals, nodes)
            self.record(it)
            reason = self.stop_reason()
            if reason:
                self.history.stop_reason = reason
                break
        else:
            self.history.stop_reason = "max iterations"
        f, _, _, x, node = self.g_best
        best = self.design(node, x) if x is not None else None
        return best, self.history


def gnn_aided_optimize(recommender, evaluator, config: SwarmConfig | None = None, catalog: Catalog = DEFAULT_CATALOG, jobs: int = 1):
    """PSO on the continuous variables; each particle's node comes from the recommender."""
    config = config or SwarmConfig()
    swarm = _Swarm(evaluator, config, catalog, jobs)
    n_sn = min(config.n_sn, swarm.graph.n_tot)

    def choose():
        id_sets = [sample_subgraph(swarm.graph, n_sn, swarm.disc_rng, anchor=p.node) for p in swarm.particles]
        contexts = [denormalize_continuous(p.x, catalog) for p in swarm.particles]
        picks = recommender.recommend_batch(id_sets, contexts)
        for p, node in zip(swarm.particles, picks):
            p.node = int(node)
        return [p.node for p in swarm.particles]

    return swarm.run(choose)


def baseline_optimize(evaluator, config: SwarmConfig | None = None, catalog: Catalog = DEFAULT_CATALOG, jobs: int = 1):
    """PSO over 17 continuous coordinates plus one rounded node-id coordinate."""
    config = config or SwarmConfig()
    swarm = _Swarm(evaluator, config, catalog, jobs)
    n_tot = swarm.graph.n_tot
    v_max = config.velocity_clamp * (n_tot - 1)

    def move_discrete():
        c = config
        g_int = float(swarm.g_best[4])
        for p in swarm.particles:
            if p.stagnant >= c.discrete_stagnation:
                p.x_int = float(swarm.disc_rng.integers(1, n_tot + 1))
                p.v_int = 0.0
                p.stagnant = 0
                continue
            r1, r2 = swarm.disc_rng.random(2)
            v = c.inertia * p.v_int + c.cognitive * r1 * (p.best_x_int - p.x_int) + c.social * r2 * (g_int - p.x_int)
            p.v_int = float(np.clip(v, -v_max, v_max))
            p.x_int = float(np.clip(p.x_int + p.v_int, 1.0, n_tot))

    def choose():
        for p in swarm.particles:
            p.node = int(np.clip(np.rint(p.x_int), 1, n_tot))
        return [p.node for p in swarm.particles]

    return swarm.run(choose, move_discrete)


def detect_convergence(values) -> int:
    """First index whose value lies within the lowest 0.5% of the history's range."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty history")
    lo, hi = float(v.min()), float(v.max())
    band = lo + 0.005 * (hi - lo)
    return int(np.argmax(v <= band))


def polish_continuous(design: DesignPoint, evaluator, budget: int = 200, initial_step: float = 0.05, min_step: float = 0.001, catalog: Catalog = DEFAULT_CATALOG):
    """Compass search on the continuous variables with the node held fixed.

    Steps are fractions of each variable's range. Returns
    ``(design, evaluation, evaluations_used)``; the input design comes back
    unchanged when nothing better is found.
    """
    x = normalize_continuous(design.cont.as_array(), catalog)
    node = design.comb

    def score(u):
        return evaluator(DesignPoint(node, to_continuous(u, catalog)))

    best_eval = score(x)
    used = 1
    step = initial_step
    dim = len(x)
    while step >= min_step and used < budget:
        improved = False
        for k in range(dim):
            for sgn in (1.0, -1.0):
                moved = False
                while used < budget:
                    cand = x.copy()
                    cand[k] = np.clip(cand[k] + sgn * step, 0.0, 1.0)
                    if cand[k] == x[k]:
                        break
                    e = score(cand)
                    used += 1
                    if not _better(e.f, e.violation, e.feasible, best_eval.f, best_eval.violation, best_eval.feasible):
                        break
                    x, best_eval, moved = cand, e, True
                if moved:
                    improved = True
                    break  # no need to probe the opposite direction
        if not improved:
            step *= 0.5
    if np.array_equal(x, normalize_continuous(design.cont.as_array(), catalog)):
        return design, best_eval, used
    return DesignPoint(node, to_continuous(x, catalog)), best_eval, used

import math

import numpy as np
import pytest

from tetheropt.catalog import DesignPoint, baseline_design, enumerate_combinations, normalize_continuous
from tetheropt.navco import OracleRecommender
from tetheropt.objectives import Evaluation, SeparableBenchmark
from tetheropt.optimizer import (
    SwarmConfig,
    baseline_optimize,
    detect_convergence,
    gnn_aided_optimize,
    polish_continuous,
    to_continuous,
)

BENCH = SeparableBenchmark(seed=0, bowl_scale=0.002)
ORACLE = OracleRecommender(lambda ids, ctx: np.array([BENCH.node_term(int(i)) for i in ids]))


class Recording:
    """Wraps an evaluator and keeps every design it sees."""

    def __init__(self, inner):
        self.inner = inner
        self.seen = []

    def __call__(self, design):
        self.seen.append(design)
        return self.inner(design)


def _run(mode, cfg, evaluator=BENCH):
    if mode == "gnn":
        return gnn_aided_optimize(ORACLE, evaluator, cfg)
    return baseline_optimize(evaluator, cfg)


@pytest.mark.parametrize("mode", ["gnn", "plain"])
def test_history_is_monotone_and_counts_evaluations(mode):
    cfg = SwarmConfig(population=12, max_iterations=25, seed=3)
    rec = Recording(BENCH)
    best, hist = _run(mode, cfg, rec)
    f = hist.best_f
    assert np.all(np.diff(f) <= 0)
    assert np.array_equal(hist.evaluations, 12 * np.arange(1, len(f) + 1))
    assert len(rec.seen) == hist.evaluations[-1]
    for d in rec.seen:
        assert 1 <= d.comb.index <= 180
        u = normalize_continuous(d.cont.as_array())
        assert np.all((u >= -1e-12) & (u <= 1 + 1e-12))
    assert BENCH(best).f == pytest.approx(f[-1])


@pytest.mark.parametrize("mode", ["gnn", "plain"])
def test_same_seed_same_history(mode):
    cfg = SwarmConfig(population=10, max_iterations=15, seed=11)
    _, a = _run(mode, cfg)
    _, b = _run(mode, cfg)
    assert np.array_equal(a.best_f, b.best_f)
    assert [r.best_node for r in a.records] == [r.best_node for r in b.records]


def test_modes_share_the_initial_population():
    cfg = SwarmConfig(population=15, max_iterations=3, seed=5)
    ra, rb = Recording(BENCH), Recording(BENCH)
    _, ha = gnn_aided_optimize(ORACLE, ra, cfg)
    _, hb = baseline_optimize(rb, cfg)
    assert ha.records[0].best_f == hb.records[0].best_f
    for da, db in zip(ra.seen[:15], rb.seen[:15]):
        assert da == db


def test_aided_swarm_reaches_the_optimum():
    cfg = SwarmConfig(population=30, max_iterations=200, seed=0)
    best, hist = gnn_aided_optimize(ORACLE, BENCH, cfg)
    assert hist.best_f[-1] <= BENCH.optimum + 1e-3
    assert best.comb.index == BENCH.optimal_node


def test_oracle_aided_never_trails_plain_by_much():
    for seed in range(3):
        cfg = SwarmConfig(population=50, max_iterations=60, stagnation_window=1000, seed=seed)
        _, ha = gnn_aided_optimize(ORACLE, BENCH, cfg)
        _, hb = baseline_optimize(BENCH, cfg)
        n = min(len(ha.best_f), len(hb.best_f))
        assert np.all(ha.best_f[:n] <= hb.best_f[:n] + 1e-3)


def test_evaluator_errors_score_infinity():
    def broken(design):
        if design.comb.index % 2:
            raise RuntimeError("boom")
        return BENCH(design)

    _, hist = baseline_optimize(broken, SwarmConfig(population=10, max_iterations=5, seed=1))
    assert math.isfinite(hist.best_f[-1])
    assert hist.records[-1].best_node % 2 == 0


def test_stagnation_stops_the_swarm():
    flat = lambda design: Evaluation(1.0)  # noqa: E731
    _, hist = baseline_optimize(flat, SwarmConfig(population=4, max_iterations=100, stagnation_window=5))
    assert hist.stop_reason == "objective stagnated"
    assert len(hist.records) == 6


def test_detect_convergence():
    assert detect_convergence([10.0, 5.0, 1.004, 1.0]) == 2
    assert detect_convergence([3.0, 3.0, 3.0]) == 0
    with pytest.raises(ValueError):
        detect_convergence([])


def test_polish_on_a_quadratic_bowl():
    start = DesignPoint(next(iter(enumerate_combinations())), to_continuous(np.full(17, 0.5)))
    counted = Recording(BENCH)
    design, ev, used = polish_continuous(start, counted, budget=2000, min_step=1e-4)
    assert used == len(counted.seen) <= 2000
    node = BENCH.node_term(start.comb.index)
    gap0 = BENCH(start).f - node
    assert ev.f - node <= 0.002 * gap0
    assert ev.f == pytest.approx(BENCH(design).f)


def test_polish_leaves_a_flat_objective_alone():
    d = baseline_design()
    design, ev, used = polish_continuous(d, lambda _: Evaluation(2.0), budget=50)
    assert design is d and ev.f == 2.0 and used <= 50


@pytest.mark.parametrize("budget", [1, 7, 40])
def test_polish_budget_is_never_exceeded(budget):
    counted = Recording(BENCH)
    _, _, used = polish_continuous(_inside(), counted, budget=budget)
    assert used == len(counted.seen) <= budget


def _inside():
    return DesignPoint(next(iter(enumerate_combinations())), to_continuous(np.full(17, 0.37)))


def test_config_validation():
    with pytest.raises(ValueError):
        SwarmConfig(population=1)
    with pytest.raises(ValueError):
        SwarmConfig(max_iterations=0)

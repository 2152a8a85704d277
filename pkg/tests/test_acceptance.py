"""Acceptance criteria 1-9. Each test carries a ``criterion`` marker; the
terminal summary prints one PASS/FAIL line per criterion."""

import json
import time
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest
from oracles import brute_force_hull, central_difference, dense_mpc_oracle
from test_netsim import _energy

from tetheropt.catalog import baseline_design, enumerate_combinations
from tetheropt.cli import main, read_csv
from tetheropt.graphspace import generate_dataset, split_dataset
from tetheropt.guidance import MPCConfig, MPCController, discretize_model, min_energy_reference
from tetheropt.metrics import HullResult, compute_cqi, convex_hull, integrate_fuel
from tetheropt.navco import (
    ModelConfig,
    ModelRecommender,
    OracleRecommender,
    backward,
    cycle_loss,
    forward,
    init_params,
    recover_scores,
    stack_records,
    train,
)
from tetheropt.navco.model import total_loss_and_grad
from tetheropt.netsim import CaptureSimulation, DebrisSpec, DebrisState, SimConfig, contact_force, run_capture
from tetheropt.objectives import MultimodalBenchmark, SeparableBenchmark
from tetheropt.optimizer import SwarmConfig, baseline_optimize, gnn_aided_optimize


def criterion(n, title):
    return pytest.mark.criterion(n, title)


# ---------------------------------------------------------------- 1


@criterion(1, "combinatorial space: 180 unique nodes, K_cls counts 3/4/5")
def test_c1_combinatorial_space():
    start = time.perf_counter()
    nodes = enumerate_combinations()
    assert len(nodes) == 180
    assert len({(n.thruster, n.material, n.shape) for n in nodes}) == 180
    assert [n.index for n in nodes] == list(range(1, 181))
    per_nk = Counter(s.n_k for s in {n.shape for n in nodes})
    assert sorted(per_nk.values()) == [3, 4, 5]
    assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------- 2


@criterion(2, "CQI examples to 1e-12, hull vs brute-force oracle on 500 sets")
def test_c2_cqi_and_hull():
    start = time.perf_counter()
    deb = DebrisSpec()
    assert compute_cqi(HullResult(deb.volume, deb.surface_area, np.arange(4)), deb, 0.0) == 0.0
    assert abs(compute_cqi(HullResult(deb.volume, deb.surface_area, np.arange(4)), deb, deb.l_c) - 0.8) <= 1e-12
    assert abs(compute_cqi(HullResult(2 * deb.volume, deb.surface_area, np.arange(4)), deb, 0.0) - 0.1) <= 1e-12
    rng = np.random.default_rng(2024)
    for _ in range(500):
        pts = rng.uniform(-5, 5, size=(rng.integers(4, 13), 3))
        v, a = brute_force_hull(pts)
        h = convex_hull(pts)
        assert abs(h.volume - v) <= 1e-9 * v
        assert abs(h.surface_area - a) <= 1e-9 * a
    assert time.perf_counter() - start < 60.0


# ---------------------------------------------------------------- 3


@criterion(3, "guidance: reference endpoints, MPC bounds, KKT oracle, lone-MU tracking")
def test_c3_guidance():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    scale = np.array([20, 20, 20, 1, 1, 1.0])
    for _ in range(100):
        s0, sf, t_f = rng.normal(size=6) * scale, rng.normal(size=6) * scale, rng.uniform(1, 40)
        ref = min_energy_reference(s0, sf, t_f, rate=20)
        assert np.linalg.norm(ref.states[0] - s0) <= 1e-9 * np.linalg.norm(s0)
        assert np.linalg.norm(ref.states[-1] - sf) <= 1e-9 * np.linalg.norm(sf)

    def instance(f_t_max, horizon=10):
        cfg = MPCConfig(horizon=horizon, f_t_max=f_t_max, mass=rng.uniform(1.5, 4.0))
        state = rng.normal(size=6) * [5, 5, 5, 0.5, 0.5, 0.5]
        return cfg, state, state + np.cumsum(rng.normal(size=(horizon + 1, 6)) * 0.2, axis=0)

    for _ in range(1000):
        cfg, state, window = instance(rng.uniform(0.5, 9.0))
        assert np.all(np.abs(MPCController(cfg).solve(state, window)) <= cfg.u_bound)
    for horizon in (3, 5, 10, 20):
        cfg, state, window = instance(1e6, horizon)
        A, B = discretize_model(cfg.mass, cfg.dt)
        oracle = dense_mpc_oracle(A, B, state, window[1:], np.diag(cfg.q_diag), np.diag(cfg.qn_diag), np.diag(cfg.r_diag))
        u = MPCController(cfg).solve(state, window)
        assert np.max(np.abs(u - oracle)) <= 1e-6 * max(1.0, np.max(np.abs(oracle)))

    mass, t_f, rate = 2.7862, 25.0, 20.0
    s0, sf = np.zeros(6), np.array([-10.0, 18.0, -65.0, -0.4, 0.7, -2.6])
    ref = min_energy_reference(s0, sf, t_f, rate)
    cfg = MPCConfig(f_t_max=1e4, mass=mass, dt=1.0 / rate)
    ctl = MPCController(cfg)
    A, B = discretize_model(mass, cfg.dt)
    x = s0.copy()
    for k in range(int(t_f * rate)):
        x = A @ x + B @ ctl.step(x, ref.window(k, cfg.horizon))
    assert np.linalg.norm(x[:3] - sf[:3]) < 0.05
    assert time.perf_counter() - start < 300.0


# ---------------------------------------------------------------- 4


@criterion(4, "fuel: constant-thrust case within 0.1%")
def test_c4_fuel():
    start = time.perf_counter()
    dt = 1e-3
    hist = np.broadcast_to(6.1 * np.array([2.0, -1.0, 2.0]) / 3.0, (int(round(25.0 / dt)) + 1, 4, 3))
    m = integrate_fuel(hist, 277.0, dt)
    assert abs(m - 0.22448) <= 0.001 * 0.22448
    assert time.perf_counter() - start < 1.0


# ---------------------------------------------------------------- 5


@criterion(5, "simulator invariants and baseline desk run")
def test_c5_simulator_invariants():
    # contact momentum balance per step
    rng = np.random.default_rng(5)
    spec, cfg = DebrisSpec(), SimConfig()
    for _ in range(100):
        q = rng.normal(size=4)
        deb = DebrisState(rng.normal(size=3), rng.normal(size=3) * 0.1, q / np.linalg.norm(q), rng.normal(size=3) * 0.3)
        body = rng.uniform(-1, 1, size=(40, 3)) * [spec.radius * 0.7, spec.radius * 0.7, spec.half_length]
        pos = body @ deb.rotation.T + deb.com_position
        f, df, dtq = contact_force(pos, rng.normal(size=pos.shape), rng.uniform(0.01, 3.0, len(pos)), deb, spec, cfg)
        scale = np.abs(f).sum()
        assert scale > 0
        assert np.all(np.abs(f.sum(axis=0) + df) <= 1e-10 * scale)
        moment = np.cross(pos, f).sum(axis=0) + np.cross(deb.com_position, df) + dtq
        assert np.all(np.abs(moment) <= 1e-10 * scale * (1 + np.abs(pos).max()))

    # undamped energy drift over 10 s
    free = replace(SimConfig(), t_thrust=1e9, t_end=2e9)
    sim = CaptureSimulation(baseline_design(), free)
    finite = np.isfinite(sim.mass)
    sim.vel[finite] = rng.normal(size=(finite.sum(), 3)) * 0.2
    sim.vel[finite] -= (sim.mass[finite, None] * sim.vel[finite]).sum(axis=0) / sim.mass[finite].sum()
    e0 = _energy(sim)
    n = int(round(10.0 / free.dt))
    buf_p, buf_v = np.zeros((n, 4, 3)), np.zeros((n, 4, 3))
    drift = 0.0
    for chunk in range(20):
        m = n // 20
        status, _ = sim._advance(m, chunk * m * free.dt, np.zeros((4, 3)), buf_p, buf_v, damping_scale=0.0, contact=False)
        assert status == 0
        drift = max(drift, abs(_energy(sim) - e0) / e0)
    assert drift < 0.01

    # baseline desk run: full 35 s at dt = 1e-3, N_k = 11
    design = baseline_design()
    assert design.comb.shape.n_k == 11
    run_capture(design, replace(SimConfig(dt=1e-3), t_end=0.1))  # compile the kernel outside the timing
    start = time.perf_counter()
    a = run_capture(design, SimConfig(dt=1e-3))
    assert time.perf_counter() - start < 60.0
    assert a.success and a.min_tension >= 0.0  # no element ever pushed
    assert len(a.thrust_history) == int(round(25.0 / 1e-3)) + 1
    b = run_capture(design, SimConfig(dt=1e-3))
    assert a.summary() == b.summary()
    assert np.array_equal(a.final_positions, b.final_positions)
    assert np.array_equal(a.thrust_history, b.thrust_history)


# ---------------------------------------------------------------- 6


@criterion(6, "model math: gradients, antisymmetry, cycle loss, score recovery")
def test_c6_model_math():
    rng = np.random.default_rng(6)
    for trial in range(3):
        cfg = ModelConfig(encoder_layers=2, hidden_dim=8, embed_dim=6, decoder_layers=2, dropout=0.25)
        B, n = 2, 5
        X, ctx = rng.normal(size=(B, n, 4)), rng.normal(size=(B, 3))
        params = init_params(cfg, 4, 3, rng, np.float64)
        for k in params:
            params[k] = params[k] + 0.1 * rng.normal(size=params[k].shape)
        truth = rng.normal(size=(B, n, n))
        truth -= np.swapaxes(truth, 1, 2)

        def loss():
            D = forward(params, X, ctx, cfg, rng=np.random.default_rng(trial))
            return total_loss_and_grad(D, truth, 0.3, 1.0)[0]

        D, cache = forward(params, X, ctx, cfg, rng=np.random.default_rng(trial), keep_cache=True)
        assert np.array_equal(D, -np.swapaxes(D, 1, 2))
        assert np.all(np.diagonal(D, axis1=1, axis2=2) == 0)
        grads = backward(params, cache, total_loss_and_grad(D, truth, 0.3, 1.0)[3], cfg)
        for name, arr in params.items():
            num = np.array([central_difference(loss, params, name, i) for i in np.ndindex(arr.shape)])
            ana = grads[name].reshape(-1)
            assert np.max(np.abs(num - ana)) <= 1e-5 * max(np.max(np.abs(num)), 1e-8), name
        D_eval = forward(params, X, ctx, cfg)
        assert np.array_equal(D_eval, -np.swapaxes(D_eval, 1, 2))
        assert np.all(np.diagonal(D_eval, axis1=1, axis2=2) == 0)

    # exact arithmetic on dyadic inputs
    f = rng.integers(-50, 50, size=(3, 8)).astype(float)
    Dp = f[:, :, None] - f[:, None, :]
    assert cycle_loss(Dp)[0] == 0.0
    assert np.array_equal(recover_scores(Dp), f - f.mean(axis=1, keepdims=True))
    # general inputs: argmin preserved
    for _ in range(200):
        g = rng.normal(size=rng.integers(2, 31))
        s = recover_scores(g[:, None] - g[None, :])
        assert np.argmin(s) == np.argmin(g)
        assert np.allclose(s, g - g.mean(), rtol=0, atol=1e-12)


# ---------------------------------------------------------------- 7


C7_EPOCHS = 60


@criterion(7, "learnability: held-out sign accuracy >= 0.70 for each lambda")
def test_c7_learnability():
    bench = MultimodalBenchmark(seed=0)
    records = generate_dataset(100, 30, bench, np.random.default_rng(1))
    tr, va = split_dataset(records, 0.8, np.random.default_rng(1))
    train_data, val_data = stack_records(tr), stack_records(va)
    start = time.perf_counter()
    accs = {}
    for lam in (0.0, 0.003, 1.0):
        _, report = train(train_data, val_data, ModelConfig(lambda_cycle=lam, max_epochs=C7_EPOCHS, patience=40))
        accs[lam] = report.best.sign_acc
    print("criterion 7 held-out sign accuracy:", accs)
    assert time.perf_counter() - start < 15 * 60
    assert all(a >= 0.70 for a in accs.values()), accs


# ---------------------------------------------------------------- 8


def _evals_ratio(history, target, reference):
    n = history.evaluations_to_reach(target)
    return n / reference if n is not None else np.inf


@criterion(8, "efficiency: median evaluations-to-reach <= 50% (GNN), <= 35% (oracle)")
def test_c8_efficiency():
    start = time.perf_counter()
    bench = SeparableBenchmark(seed=0, bowl_scale=0.002)
    records = generate_dataset(100, 30, bench, np.random.default_rng(1))
    tr, va = split_dataset(records, 0.8, np.random.default_rng(1))
    model, _ = train(stack_records(tr), stack_records(va), ModelConfig(max_epochs=100, patience=40))
    gnn = ModelRecommender(model)
    oracle = OracleRecommender(lambda ids, ctx: np.array([bench.node_term(int(i)) for i in ids]))
    r_gnn, r_oracle = [], []
    for seed in range(5):
        cfg = SwarmConfig(seed=seed, population=50)
        _, hp = baseline_optimize(bench, cfg)
        _, hg = gnn_aided_optimize(gnn, bench, cfg)
        _, ho = gnn_aided_optimize(oracle, bench, cfg)
        target = hp.best_f[-1]
        n_plain = hp.evaluations_to_reach(target)
        r_gnn.append(_evals_ratio(hg, target, n_plain))
        r_oracle.append(_evals_ratio(ho, target, n_plain))
    print(f"criterion 8 ratios: gnn {r_gnn} (median {np.median(r_gnn):.3f}), oracle {r_oracle} (median {np.median(r_oracle):.3f})")
    assert time.perf_counter() - start < 30 * 60
    assert np.median(r_gnn) <= 0.50
    assert np.median(r_oracle) <= 0.35


# ---------------------------------------------------------------- 9

SMOKE_TOML = """
[sim]
dt = 0.002

[dataset]
p_sg = 10
n_sn = 10
seed = 0

[model]
max_epochs = 100
patience = 40

[swarm]
population = 20
max_iterations = 10
n_sn = 10
"""


@criterion(9, "end-to-end smoke on the real simulator")
def test_c9_end_to_end(tmp_path):
    start = time.perf_counter()
    cfg = tmp_path / "smoke.toml"
    cfg.write_text(SMOKE_TOML)
    base = ["--config", str(cfg), "--jobs", "1"]
    ds, run = tmp_path / "ds.jsonl", tmp_path / "run"
    assert main([*base, "dataset", "generate", "--out", str(ds)]) == 0
    assert main([*base, "train", "--dataset", str(ds), "--out", str(run)]) == 0
    assert main([*base, "optimize", "--method", "gnn", "--model", str(run / "model.ckpt"), "--out", str(run)]) == 0
    _, _, conv = read_csv(run / "convergence_gnn.csv")
    assert len(conv) == 11
    assert np.all(np.diff(conv[:, 2]) <= 0)
    assert conv[-1, 3] == 1  # a successful capture was found
    best = json.loads((run / "best_design_gnn.json").read_text())
    assert best["feasible"] and best["outcome"]["n_locked"] == 12
    base_fuel = run_capture(baseline_design(), SimConfig(dt=2e-3)).m_prop
    print(f"criterion 9: best feasible fuel {best['outcome']['m_prop']:.4f} kg vs baseline {base_fuel:.4f} kg")
    assert best["outcome"]["m_prop"] < base_fuel
    assert time.perf_counter() - start < 2 * 3600

"""Command-line entry point.

Subcommands write deterministic artifacts into an output directory. Every CSV
starts with a ``# config_hash=... seed=...`` comment line and contains no
timestamps, so identical inputs give byte-identical files.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .catalog import baseline_design, design_from_dict
from .config import CONFIG_ENV, RunConfig, resolve_config
from .graphspace import FullGraph, calibrate_dataset_beta, generate_dataset, load_dataset, rescore, save_dataset, split_dataset
from .metrics import evaluate_objective
from .objectives import MultimodalBenchmark, SeparableBenchmark, SimulationObjective
from .optimizer import baseline_optimize, gnn_aided_optimize, polish_continuous

log = logging.getLogger("tetheropt")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2
OBJECTIVES = ("sim", "separable", "multimodal")
TRAIN_COLUMNS = ("epoch", "train_edge", "val_edge", "cycle", "sign_acc")
CONVERGENCE_COLUMNS = ("iteration", "evals", "best_f", "feasible_flag")
TRAJECTORY_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "Fx", "Fy", "Fz")


class UsageError(Exception):
    """Bad flags, missing files or invalid configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------- helpers


def fmt(value) -> str:
    """Shortest round-trip text for numbers; booleans as 0/1."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, columns, rows, config_hash: str, seed) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash} seed={seed}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Header metadata, column names and a float array of rows."""
    lines = Path(path).read_text().splitlines()
    meta = {}
    while lines and lines[0].startswith("#"):
        for token in lines.pop(0)[1:].split():
            key, _, value = token.partition("=")
            meta[key] = value
    if not lines:
        raise ValueError(f"{path}: no header row")
    reader = csv.reader(lines)
    columns = next(reader)
    data = np.array([[float(v) for v in row] for row in reader if row], dtype=float)
    return meta, columns, data.reshape(-1, len(columns))


def write_json(path: Path, payload: dict) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def make_evaluator(kind: str, cfg: RunConfig, benchmark_seed: int = 0):
    catalog = cfg.catalog()
    if kind == "sim":
        return SimulationObjective(cfg.sim, cfg.objective)
    if kind == "separable":
        return SeparableBenchmark(seed=benchmark_seed, catalog=catalog, bowl_scale=0.002)
    if kind == "multimodal":
        return MultimodalBenchmark(seed=benchmark_seed, catalog=catalog)
    raise UsageError(f"unknown objective {kind!r}")


def load_design(path: str, cfg: RunConfig):
    """``baseline`` or a JSON design file (``"check_bounds": false`` allows out-of-box values)."""
    catalog = cfg.catalog()
    if path == "baseline":
        return baseline_design(catalog)
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"design file not found: {p}")
    try:
        data = json.loads(p.read_text())
        return design_from_dict(data, catalog, check_bounds=data.get("check_bounds", True))
    except (KeyError, ValueError) as exc:
        raise UsageError(f"invalid design file {p}: {exc}") from exc


def design_payload(design, evaluation=None, check_bounds: bool = True) -> dict:
    out = design.to_dict()
    if not check_bounds:
        out["check_bounds"] = False
    if evaluation is not None:
        out["f"] = evaluation.f
        out["feasible"] = evaluation.feasible
        if evaluation.outcome:
            out["outcome"] = evaluation.outcome
    return out


def _out_dir(path: str) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- commands


def cmd_catalog(args, cfg: RunConfig) -> int:
    catalog = cfg.catalog()
    if args.action == "list":
        print("id  F_max   I_sp   m_t    E_n       rho_n   N_k K_cls")
        for n in catalog.enumerate_combinations():
            t, m, s = n.thruster, n.material, n.shape
            print(f"{n.index:3d} {t.f_t_max:5.2f} {t.i_sp:6.1f} {t.m_t:6.3f} {m.e_n:9.3e} {m.rho_n:7.1f} {s.n_k:3d} {s.k_cls:5d}")
        return EXIT_OK
    if args.action == "export":
        if not args.out:
            raise UsageError("catalog export needs --out")
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        catalog.save(args.out)
        print(f"catalog written to {args.out} (digest {catalog.digest()})")
        return EXIT_OK
    if not args.out:
        raise UsageError("catalog baseline needs --out")
    write_json(Path(args.out), design_payload(baseline_design(catalog), check_bounds=False))
    print(f"baseline design written to {args.out}")
    return EXIT_OK


def cmd_dataset(args, cfg: RunConfig) -> int:
    catalog = cfg.catalog()
    ds = cfg.dataset
    p_sg = args.p_sg or ds.p_sg
    n_sn = args.n_sn or ds.n_sn
    seed = ds.seed if args.seed is None else args.seed
    evaluator = make_evaluator(args.objective, cfg, args.benchmark_seed)
    start = time.perf_counter()
    records = generate_dataset(p_sg, n_sn, evaluator, np.random.default_rng(seed), FullGraph(catalog), jobs=args.jobs)
    elapsed = time.perf_counter() - start
    header = {
        "config_hash": cfg.digest(),
        "catalog": catalog.digest(),
        "seed": seed,
        "objective": args.objective,
        "benchmark_seed": args.benchmark_seed,
        "p_sg": p_sg,
        "n_sn": n_sn,
        "beta": cfg.objective.beta,
    }
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(out, records, header)
    n_valid = sum(r.valid for r in records)
    n_success = int(sum(int(np.sum(r.success)) for r in records if r.valid))
    print(f"dataset: {len(records)} subgraphs ({n_valid} valid, {n_success} successful evaluations) in {elapsed:.1f} s -> {out}")
    return EXIT_OK if n_valid else EXIT_RUNTIME


def _checkpoint_expect(cfg: RunConfig) -> dict:
    return {"catalog": cfg.catalog().digest()}


def cmd_train(args, cfg: RunConfig) -> int:
    from .navco import stack_records, train

    catalog = cfg.catalog()
    header, records = _load_dataset(args.dataset, cfg)
    if header.get("objective") == "sim":
        beta = args.beta if args.beta is not None else calibrate_dataset_beta(records)
        records = rescore(records, dataclasses.replace(cfg.objective, beta=beta))
    else:
        beta = cfg.objective.beta
    model_cfg = cfg.model
    overrides = {k: v for k, v in (("max_epochs", args.epochs), ("lambda_cycle", args.lambda_cycle), ("seed", args.seed)) if v is not None}
    model_cfg = dataclasses.replace(model_cfg, **overrides)
    tr, va = split_dataset(records, cfg.dataset.split, np.random.default_rng(model_cfg.seed))
    try:
        train_data, val_data = stack_records(tr, catalog), stack_records(va, catalog)
    except ValueError as exc:
        raise UsageError(f"dataset cannot be used for training: {exc}") from exc
    meta = {
        "catalog": catalog.digest(),
        "dataset_config_hash": header.get("config_hash"),
        "objective": header.get("objective"),
        "beta": beta,
    }
    progress = (lambda s: log.info("epoch %d train %.4g val %.4g acc %.3f", s.epoch, s.train_edge, s.val_edge, s.sign_acc)) if args.verbose else None
    model, report = train(train_data, val_data, model_cfg, catalog, args.time_limit, meta, progress)
    out = _out_dir(args.out)
    model.save(out / "model.ckpt")
    write_csv(out / "train.csv", TRAIN_COLUMNS, ([getattr(e, c) for c in TRAIN_COLUMNS] for e in report.epochs), cfg.digest(), model_cfg.seed)
    best = report.best
    write_json(
        out / "train_summary.json",
        {
            "config_hash": cfg.digest(),
            "seed": model_cfg.seed,
            "epochs": len(report.epochs),
            "best_epoch": report.best_epoch,
            "best_val_edge": report.best_val_edge,
            "best_sign_acc": best.sign_acc if best else None,
            "stopped": report.stopped,
            "wall_time_s": report.wall_time,
            "beta": beta,
        },
    )
    if best is None:
        print("training produced no usable epoch", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"trained {len(report.epochs)} epochs, best epoch {report.best_epoch} (val edge {report.best_val_edge:.4g}, sign acc {best.sign_acc:.3f}) -> {out}")
    return EXIT_OK


def _load_dataset(path: str, cfg: RunConfig):
    if not Path(path).is_file():
        raise UsageError(f"dataset file not found: {path}")
    return load_dataset(path, expect={"catalog": cfg.catalog().digest()})


def cmd_optimize(args, cfg: RunConfig) -> int:
    catalog = cfg.catalog()
    swarm = cfg.swarm
    overrides = {k: v for k, v in (("population", args.pop), ("max_iterations", args.max_iter), ("seed", args.seed), ("n_sn", args.n_sn)) if v is not None}
    swarm = dataclasses.replace(swarm, **overrides)
    objective = cfg.objective
    recommender = None
    if args.method == "gnn":
        from .navco import EdgeFlowModel, ModelRecommender

        if not args.model:
            raise UsageError("--method gnn needs --model")
        if not Path(args.model).is_file():
            raise UsageError(f"checkpoint not found: {args.model}")
        model = EdgeFlowModel.load(args.model, expect=_checkpoint_expect(cfg))
        recommender = ModelRecommender(model, catalog)
        if args.objective == "sim" and args.beta is None and "beta" in model.meta:
            objective = dataclasses.replace(objective, beta=float(model.meta["beta"]))
    if args.beta is not None:
        objective = dataclasses.replace(objective, beta=args.beta)
    evaluator = make_evaluator(args.objective, dataclasses.replace(cfg, objective=objective), args.benchmark_seed)
    start = time.perf_counter()
    if recommender is not None:
        best, history = gnn_aided_optimize(recommender, evaluator, swarm, catalog, jobs=args.jobs)
    else:
        best, history = baseline_optimize(evaluator, swarm, catalog, jobs=args.jobs)
    elapsed = time.perf_counter() - start
    out = _out_dir(args.out)
    digest = dataclasses.replace(cfg, swarm=swarm, objective=objective).digest()
    rows = ((r.iteration, r.evaluations, r.best_f, r.feasible) for r in history.records)
    write_csv(out / f"convergence_{args.method}.csv", CONVERGENCE_COLUMNS, rows, digest, swarm.seed)
    if best is None:
        print("no design was evaluated successfully", file=sys.stderr)
        return EXIT_RUNTIME
    best_eval = evaluator(best)
    summary = {
        "config_hash": digest,
        "seed": swarm.seed,
        "method": args.method,
        "objective": args.objective,
        "iterations": history.records[-1].iteration,
        "evaluations": int(history.evaluations[-1]),
        "stop_reason": history.stop_reason,
        "best_f": history.records[-1].best_f,
        "feasible": history.records[-1].feasible,
        "wall_time_s": elapsed,
    }
    if args.polish:
        polished, pe, used = polish_continuous(best, evaluator, catalog=catalog)
        summary["polish"] = {"evaluations": used, "f": pe.f, "improved": polished is not best}
        best, best_eval = polished, pe
    write_json(out / f"best_design_{args.method}.json", design_payload(best, best_eval))
    write_json(out / f"summary_{args.method}.json", summary)
    print(f"{args.method}: best f {summary['best_f']:.6g} after {summary['evaluations']} evaluations ({history.stop_reason}) -> {out}")
    return EXIT_OK


def cmd_simulate(args, cfg: RunConfig) -> int:
    from .netsim import run_capture

    design = load_design(args.design, cfg)
    sim = dataclasses.replace(cfg.sim, record_trajectory=True)
    if args.dt is not None:
        sim = dataclasses.replace(sim, dt=args.dt)
    digest = dataclasses.replace(cfg, sim=sim).digest()
    start = time.perf_counter()
    outcome = run_capture(design, sim)
    elapsed = time.perf_counter() - start
    out = _out_dir(args.out)
    stride = max(1, args.stride)
    n_thrust = len(outcome.thrust_history)
    for m in range(4):
        idx = range(0, len(outcome.mu_times), stride)

        def rows(m=m, idx=idx):
            for i in idx:
                force = outcome.thrust_history[i, m] if i < n_thrust else (0.0, 0.0, 0.0)
                yield (outcome.mu_times[i], *outcome.mu_positions[i, m], *outcome.mu_velocities[i, m], *force)

        write_csv(out / f"trajectory_mu{m + 1}.csv", TRAJECTORY_COLUMNS, rows(), digest, 0)
    evaluation = evaluate_objective(outcome, cfg.objective)
    summary = {"config_hash": digest, "seed": 0, "design": design.to_dict(), "f": evaluation, "wall_time_s": elapsed, **outcome.summary()}
    write_json(out / "simulation_summary.json", summary)
    flag = "success" if outcome.success else "failure"
    print(f"capture {flag}: CQI {outcome.cqi_final:.3f}, {outcome.n_locked} locked, fuel {outcome.m_prop:.4f} kg, f {evaluation:.4f} ({elapsed:.1f} s) -> {out}")
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    from .report import render_run

    run_dir = Path(args.run_dir)
    if not run_dir.is_dir():
        raise UsageError(f"run directory not found: {run_dir}")
    written = render_run(run_dir)
    if not written:
        print(f"no convergence, training or trajectory CSVs in {run_dir}", file=sys.stderr)
        return EXIT_RUNTIME
    for path, rows in written:
        print(f"{path} ({rows} rows)")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tetheropt", description="Tether-net capture design optimization.")
    p.add_argument("--config", help=f"TOML run configuration (default: ${CONFIG_ENV}, else built-in defaults)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="parallel evaluations (default: all cores)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("catalog", help="list or export the combinatorial catalog")
    c.add_argument("action", choices=("list", "export", "baseline"))
    c.add_argument("--out")
    c.set_defaults(func=cmd_catalog)

    d = sub.add_parser("dataset", help="generate a training dataset")
    d.add_argument("action", choices=("generate",))
    d.add_argument("--out", required=True)
    d.add_argument("--p-sg", type=int)
    d.add_argument("--n-sn", type=int)
    d.add_argument("--seed", type=int)
    _objective_flags(d)
    d.set_defaults(func=cmd_dataset)

    t = sub.add_parser("train", help="train the edge-flow recommender")
    t.add_argument("--dataset", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--lambda-cycle", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--beta", type=float, help="penalty offset (default: calibrated from simulator datasets)")
    t.add_argument("--time-limit", type=float)
    t.set_defaults(func=cmd_train)

    o = sub.add_parser("optimize", help="run the particle swarm")
    o.add_argument("--method", choices=("gnn", "plain"), required=True)
    o.add_argument("--model")
    o.add_argument("--pop", type=int)
    o.add_argument("--max-iter", type=int)
    o.add_argument("--n-sn", type=int)
    o.add_argument("--seed", type=int)
    o.add_argument("--beta", type=float)
    o.add_argument("--polish", action="store_true", help="pattern-search polish of the best design")
    o.add_argument("--out", required=True)
    _objective_flags(o)
    o.set_defaults(func=cmd_optimize)

    s = sub.add_parser("simulate", help="simulate one design and export trajectories")
    s.add_argument("--design", required=True, help="design JSON file or 'baseline'")
    s.add_argument("--out", required=True)
    s.add_argument("--dt", type=float)
    s.add_argument("--stride", type=int, default=10, help="write every n-th physics step")
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("report", help="render SVG plots from a run directory")
    r.add_argument("run_dir")
    r.set_defaults(func=cmd_report)
    return p


def _objective_flags(p):
    p.add_argument("--objective", choices=OBJECTIVES, default="sim", help="capture simulator or a synthetic benchmark")
    p.add_argument("--benchmark-seed", type=int, default=0)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("tetheropt: error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = resolve_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"tetheropt: error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"tetheropt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"tetheropt: runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


__all__ = ["build_parser", "main", "read_csv", "write_csv"]

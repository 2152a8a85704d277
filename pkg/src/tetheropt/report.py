"""SVG plots rendered from the CSV artifacts of a run directory."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .cli import read_csv  # noqa: E402

# Fixed salt and no date stamp keep the SVG output reproducible.
_RC = {"svg.hashsalt": "tetheropt", "svg.fonttype": "none"}
_META = {"Date": None}


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def plot_convergence(csv_paths, out: Path) -> int:
    """Global-best objective against cumulative evaluations, one line per CSV."""
    rows = 0
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 4))
        for path in csv_paths:
            _, cols, data = read_csv(path)
            rows = max(rows, len(data))
            label = path.stem.removeprefix("convergence_")
            ax.plot(data[:, cols.index("evals")], data[:, cols.index("best_f")], marker=".", label=label)
        ax.set_xlabel("function evaluations")
        ax.set_ylabel("global best objective")
        ax.set_yscale("symlog", linthresh=1e-3)
        ax.legend()
        ax.grid(alpha=0.3)
        _save(fig, out)
    return rows


def plot_training(csv_path: Path, out: Path) -> int:
    _, cols, data = read_csv(csv_path)
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
        ep = data[:, cols.index("epoch")]
        ax1.plot(ep, data[:, cols.index("train_edge")], label="train edge")
        ax1.plot(ep, data[:, cols.index("val_edge")], label="validation edge")
        ax1.plot(ep, data[:, cols.index("cycle")], label="validation cycle")
        ax1.set_yscale("log")
        ax1.set_xlabel("epoch")
        ax1.legend()
        ax2.plot(ep, data[:, cols.index("sign_acc")])
        ax2.set_xlabel("epoch")
        ax2.set_ylabel("validation sign accuracy")
        _save(fig, out)
    return len(data)


def plot_trajectories(csv_paths, out: Path) -> int:
    """3-D paths of the maneuverable units plus thrust magnitude histories."""
    rows = 0
    with plt.rc_context(_RC):
        fig = plt.figure(figsize=(10, 4.5))
        ax3 = fig.add_subplot(1, 2, 1, projection="3d")
        ax2 = fig.add_subplot(1, 2, 2)
        for path in csv_paths:
            _, cols, d = read_csv(path)
            rows = max(rows, len(d))
            label = path.stem.removeprefix("trajectory_")
            x, y, z = (d[:, cols.index(c)] for c in ("x", "y", "z"))
            ax3.plot(x, y, z, label=label)
            f = d[:, [cols.index(c) for c in ("Fx", "Fy", "Fz")]]
            ax2.plot(d[:, cols.index("t")], (f**2).sum(axis=1) ** 0.5, label=label)
        ax3.set_xlabel("x [m]")
        ax3.set_ylabel("y [m]")
        ax3.set_zlabel("z [m]")
        ax3.legend()
        ax2.set_xlabel("t [s]")
        ax2.set_ylabel("thrust [N]")
        ax2.legend()
        _save(fig, out)
    return rows


def render_run(run_dir) -> list[tuple[Path, int]]:
    """Render every plot the directory has data for; returns (svg path, CSV rows)."""
    run_dir = Path(run_dir)
    written = []
    conv = sorted(run_dir.glob("convergence_*.csv"))
    if conv:
        out = run_dir / "convergence.svg"
        written.append((out, plot_convergence(conv, out)))
    if (run_dir / "train.csv").is_file():
        out = run_dir / "training.svg"
        written.append((out, plot_training(run_dir / "train.csv", out)))
    traj = sorted(run_dir.glob("trajectory_*.csv"))
    if traj:
        out = run_dir / "trajectories.svg"
        written.append((out, plot_trajectories(traj, out)))
    return written

"""Capture quality, propellant use and the penalized scalar objective."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

log = logging.getLogger(__name__)

G_E = 9.81  # m/s^2
CQI_WEIGHTS = (0.1, 0.1, 0.8)
DEFAULT_BETA = 1.44  # 1.5 x 0.96 kg, a ceiling on successful propellant mass; recalibrated from datasets


@dataclass(frozen=True)
class HullResult:
    volume: float
    surface_area: float
    vertex_ids: np.ndarray


def _planar_hull(pts: np.ndarray) -> HullResult:
    """Hull of a (numerically) flat point set: zero volume, polygon area."""
    centred = pts - pts.mean(axis=0)
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    scale = max(s[0], 1e-300)
    if s[1] <= 1e-12 * scale:
        # collinear: report the extreme points along the line
        proj = centred @ vt[0]
        return HullResult(0.0, 0.0, np.unique([int(np.argmin(proj)), int(np.argmax(proj))]))
    uv = centred @ vt[:2].T
    hull2 = ConvexHull(uv)
    return HullResult(0.0, float(hull2.volume), np.sort(hull2.vertices))


def convex_hull(points) -> HullResult:
    """Volume and surface area of the 3-D convex hull of ``points``.

    Degenerate sets (all points coplanar or collinear) give zero volume and
    the area of their planar hull.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("points must have shape (n, 3)")
    if len(pts) < 4:
        raise ValueError(f"need at least 4 points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    extent = float(np.ptp(pts, axis=0).max())
    if extent == 0.0:
        return HullResult(0.0, 0.0, np.array([0]))
    s = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if s[2] <= 1e-10 * s[0]:
        return _planar_hull(pts)
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return _planar_hull(pts)
    centroid = pts[hull.vertices].mean(axis=0)
    tri = pts[hull.simplices]  # (F, 3, 3)
    a = tri[:, 1] - tri[:, 0]
    b = tri[:, 2] - tri[:, 0]
    cross = np.cross(a, b)
    area = 0.5 * np.linalg.norm(cross, axis=1).sum()
    # tetrahedra from an interior point; abs() makes facet orientation irrelevant
    vol = np.abs(np.einsum("ij,ij->i", tri[:, 0] - centroid, cross)).sum() / 6.0
    return HullResult(float(vol), float(area), np.sort(hull.vertices))


def compute_cqi(hull: HullResult, debris, q_n: float) -> float:
    """Shape/size/centering mismatch between the closed net and the target."""
    v_d, s_d, l_c = debris.volume, debris.surface_area, debris.l_c
    if min(v_d, s_d, l_c) <= 0:
        raise ValueError("debris volume, area and l_c must be positive")
    wv, ws, wq = CQI_WEIGHTS
    return wv * abs(hull.volume - v_d) / v_d + ws * abs(hull.surface_area - s_d) / s_d + wq * abs(q_n) / l_c


def integrate_fuel(thrust_history, i_sp: float, dt: float) -> float:
    """Propellant mass for a uniformly sampled thrust history.

    ``thrust_history`` has shape (T, n_mu, 3) (or (T, 3) for a single MU);
    the magnitude is integrated with the trapezoidal rule.
    """
    F = np.asarray(thrust_history, dtype=float)
    if F.shape[0] < 2:
        return 0.0
    mag = np.linalg.norm(F, axis=-1)
    impulse = np.trapezoid(mag, dx=dt, axis=0) if hasattr(np, "trapezoid") else np.trapz(mag, dx=dt, axis=0)
    return float(np.sum(impulse) / (G_E * i_sp))


@dataclass(frozen=True)
class ObjectiveConfig:
    cqi_threshold: float = 2.5
    n_l_required: int = 12
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")


def failure_penalty(cqi: float, n_locked: int, config: ObjectiveConfig) -> float:
    """Graded part of the failure score (without the beta offset)."""
    return math.log((cqi - config.cqi_threshold) ** 2 + 1.0) + math.log((n_locked - config.n_l_required) ** 2 + 1.0)


def is_success(cqi: float, n_locked: int, tension_failed: bool, config: ObjectiveConfig | None = None) -> bool:
    config = config or ObjectiveConfig()
    return (not tension_failed) and cqi <= config.cqi_threshold and n_locked == config.n_l_required


def objective_value(cqi: float, n_locked: int, m_prop: float, tension_failed: bool, config: ObjectiveConfig) -> float:
    if is_success(cqi, n_locked, tension_failed, config):
        return float(m_prop)
    return failure_penalty(cqi, n_locked, config) + config.beta


def evaluate_objective(outcome, config: ObjectiveConfig | None = None) -> float:
    """Propellant mass on success, otherwise a graded penalty offset by beta."""
    config = config or ObjectiveConfig()
    return objective_value(outcome.cqi_final, outcome.n_locked, outcome.m_prop, outcome.tension_failed, config)


def constraint_violation(outcome, config: ObjectiveConfig | None = None) -> float:
    """Zero for a successful capture, the graded penalty otherwise."""
    config = config or ObjectiveConfig()
    if is_success(outcome.cqi_final, outcome.n_locked, outcome.tension_failed, config):
        return 0.0
    return failure_penalty(outcome.cqi_final, outcome.n_locked, config)


def calibrate_beta(successful_m_prop, factor: float = 1.5, fallback: float = DEFAULT_BETA) -> float:
    """``factor`` times the largest propellant mass among successful captures."""
    vals = [float(v) for v in successful_m_prop if math.isfinite(v)]
    if not vals or max(vals) <= 0:
        log.warning("no successful captures to calibrate beta; using %.4g", fallback)
        return fallback
    return factor * max(vals)

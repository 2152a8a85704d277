"""MU guidance: aiming points, minimum-energy reference paths and tracking MPC.

Each MU is modelled as a free point mass (double integrator). The tracking MPC
is condensed per axis: with diagonal weights and per-axis input bounds the
3-axis problem separates into three identical-Hessian box QPs of size N_h.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import ContinuousVector

log = logging.getLogger(__name__)

NOMINAL_HALF_SPAN = 12.0  # m
AIM_PLANE_OFFSET = 5.0  # m behind the debris centre of mass


def corner_signs(i: int) -> tuple[int, int]:
    """(x, y) sign of MU ``i`` (1-based) around the target."""
    return (-1) ** i, (-1) ** ((i + 1) // 2)


def compute_aiming_points(cont: ContinuousVector, debris_com) -> np.ndarray:
    x_d, y_d, z_d = map(float, debris_com)
    pts = np.empty((4, 3))
    for i in range(1, 5):
        sx, sy = corner_signs(i)
        pts[i - 1] = (
            x_d + NOMINAL_HALF_SPAN * sx + cont.dx[i - 1],
            y_d + NOMINAL_HALF_SPAN * sy + cont.dy[i - 1],
            z_d - AIM_PLANE_OFFSET,
        )
    return pts


def compute_final_velocities(cont: ContinuousVector, r_final, r_0, t_f: float) -> np.ndarray:
    """Final velocity of each MU: along its displacement, nominal speed plus ``v_i``.

    A requested speed below zero is clamped to zero.
    """
    r_final = np.asarray(r_final, dtype=float)
    r_0 = np.asarray(r_0, dtype=float)
    out = np.zeros((4, 3))
    for i in range(4):
        delta = r_final[i] - r_0[i]
        dist = float(np.linalg.norm(delta))
        if dist == 0.0:
            raise ValueError(f"MU {i + 1} has zero displacement; final velocity direction undefined")
        speed = dist / t_f + cont.v[i]
        if speed < 0.0:
            log.info("MU %d requested speed %.3f m/s clamped to 0", i + 1, speed)
            speed = 0.0
        out[i] = speed * delta / dist
    return out


@dataclass
class ReferenceTrajectory:
    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, 6): position, velocity
    accel_coeffs: np.ndarray  # (2, 3): a(t) = c0 + c1 t

    def control(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)[..., None]
        return self.accel_coeffs[0] + self.accel_coeffs[1] * t

    def state_at(self, t) -> np.ndarray:
        """Position and velocity of the cubic at times ``t`` (also beyond ``t_f``)."""
        t = np.asarray(t, dtype=float)[..., None]
        p0, v0 = self.states[0, :3], self.states[0, 3:]
        c0, c1 = self.accel_coeffs
        pos = p0 + v0 * t + c0 * t**2 / 2.0 + c1 * t**3 / 6.0
        vel = v0 + c0 * t + c1 * t**2 / 2.0
        return np.concatenate([pos, vel], axis=-1)

    def window(self, k: int, horizon: int) -> np.ndarray:
        """States k..k+horizon; past ``t_f`` the same cubic is continued.

        Holding the terminal position while keeping its nonzero velocity would be
        dynamically inconsistent and make the tracker brake before ``t_f``.
        """
        last = len(self.states) - 1
        steps = np.arange(k, k + horizon + 1)
        out = self.states[np.minimum(steps, last)].copy()
        over = steps > last
        if over.any() and last > 0:
            step_dt = self.times[1] - self.times[0]
            out[over] = self.state_at(self.times[last] + (steps[over] - last) * step_dt)
        return out


def min_energy_reference(s_0, s_f, t_f: float, rate: float = 20.0) -> ReferenceTrajectory:
    """Minimum integral of squared acceleration between two 6-D states.

    Uses the controllability-Gramian solution of the double integrator
    (unit mass; the optimal path does not depend on mass). The control is
    affine in time, so positions are cubic.
    """
    if not t_f > 0:
        raise ValueError(f"maneuver time must be positive, got {t_f}")
    s_0 = np.asarray(s_0, dtype=float)
    s_f = np.asarray(s_f, dtype=float)
    p0, v0 = s_0[:3], s_0[3:]
    pf, vf = s_f[:3], s_f[3:]
    T = float(t_f)
    gram = np.array([[T**3 / 3.0, T**2 / 2.0], [T**2 / 2.0, T]])
    # free-drift miss distance at t_f, per axis
    miss = np.stack([pf - (p0 + v0 * T), vf - v0])  # (2, 3)
    lam = np.linalg.solve(gram, miss)
    # u(t) = B^T exp(A^T (T - t)) lam = (T - t) lam1 + lam2
    c0 = T * lam[0] + lam[1]
    c1 = -lam[0]

    n = int(round(T * rate))
    times = np.linspace(0.0, T, n + 1)
    tt = times[:, None]
    pos = p0 + v0 * tt + c0 * tt**2 / 2.0 + c1 * tt**3 / 6.0
    vel = v0 + c0 * tt + c1 * tt**2 / 2.0
    return ReferenceTrajectory(times, np.hstack([pos, vel]), np.stack([c0, c1]))


def discretize_model(mass: float, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Zero-order-hold discretization of a 3-D point mass, state [r, v]."""
    if mass <= 0 or dt <= 0:
        raise ValueError("mass and dt must be positive")
    eye = np.eye(3)
    A = np.block([[eye, dt * eye], [np.zeros((3, 3)), eye]])
    B = np.vstack([dt**2 / (2.0 * mass) * eye, dt / mass * eye])
    return A, B


@dataclass
class MPCConfig:
    horizon: int = 10
    q_diag: tuple = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    qn_diag: tuple = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    r_diag: tuple = (0.01, 0.01, 0.01)
    dt: float = 0.05
    f_t_max: float = 1.0
    mass: float = 1.0
    tol: float = 1e-8
    max_iter: int = 100

    @property
    def u_bound(self) -> float:
        return self.f_t_max / math.sqrt(3.0)


@dataclass
class BoxQPResult:
    x: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool


def kkt_residual(H, g, x, lo, hi) -> float:
    grad = H @ x + g
    return float(np.max(np.abs(x - np.clip(x - grad, lo, hi))))


def solve_box_qp(H, g, lo, hi, tol: float = 1e-8, max_iter: int = 100, x0=None) -> BoxQPResult:
    """min 0.5 x'Hx + g'x  s.t. lo <= x <= hi, H positive definite.

    Projected Newton with an Armijo search along the projection arc.
    """
    n = len(g)
    lo = np.broadcast_to(lo, (n,)).astype(float)
    hi = np.broadcast_to(hi, (n,)).astype(float)
    x = np.clip(np.linalg.solve(H, -g) if x0 is None else x0, lo, hi)

    def cost(z):
        return 0.5 * z @ H @ z + g @ z

    fx = cost(x)
    best = x
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        res = float(np.max(np.abs(x - np.clip(x - grad, lo, hi))))
        if res <= tol:
            return BoxQPResult(x, res, it - 1, True)
        eps = min(res, 1e-6)
        clamped = ((x <= lo + eps) & (grad > 0)) | ((x >= hi - eps) & (grad < 0))
        free = ~clamped
        direction = -grad / np.diag(H)
        if free.any():
            Hf = H[np.ix_(free, free)]
            direction[free] = -np.linalg.solve(Hf, grad[free])
        step = 1.0
        while True:
            cand = np.clip(x + step * direction, lo, hi)
            fc = cost(cand)
            if fc <= fx + 1e-4 * grad @ (cand - x) or step < 1e-12:
                break
            step *= 0.5
        if fc > fx:  # numerical stall
            break
        x, fx = cand, fc
        best = x
    res = kkt_residual(H, g, best, lo, hi)
    return BoxQPResult(best, res, max_iter, res <= tol)


@dataclass
class MPCController:
    """Condensed, axis-separable tracking MPC for one MU model."""

    config: MPCConfig
    A1: np.ndarray = field(init=False)
    B1: np.ndarray = field(init=False)
    hessian: np.ndarray = field(init=False)
    warnings: int = field(init=False, default=0)

    def __post_init__(self):
        cfg = self.config
        dt, m, N = cfg.dt, cfg.mass, cfg.horizon
        self.A1 = np.array([[1.0, dt], [0.0, 1.0]])
        self.B1 = np.array([dt**2 / (2.0 * m), dt / m])
        # prediction x_k = Phi_k x0 + sum_j Gamma_kj u_j, k = 1..N
        Phi = np.zeros((N, 2, 2))
        Gam = np.zeros((N, 2, N))
        Ak = np.eye(2)
        for k in range(N):
            Ak = self.A1 @ Ak
            Phi[k] = Ak
            for j in range(k + 1):
                Gam[k, :, j] = np.linalg.matrix_power(self.A1, k - j) @ self.B1
        self._phi = Phi
        self._gam = Gam
        self._q = np.array([[cfg.q_diag[a], cfg.q_diag[a + 3]] for a in range(3)])  # (3, 2)
        self._qn = np.array([[cfg.qn_diag[a], cfg.qn_diag[a + 3]] for a in range(3)])
        self._r = np.asarray(cfg.r_diag, dtype=float)
        self._hess = []
        for a in range(3):
            W = np.tile(self._q[a], (N, 1))
            W[-1] = self._qn[a]
            H = 2.0 * np.einsum("kin,ki,kim->nm", Gam, W, Gam) + 2.0 * self._r[a] * np.eye(N)
            self._hess.append(H)
        self.hessian = self._hess[0]

    def axis_problem(self, state, ref_window, axis: int):
        """Hessian and linear term of the condensed QP for one axis."""
        N = self.config.horizon
        x0 = np.array([state[axis], state[axis + 3]])
        ref = np.stack([ref_window[1:, axis], ref_window[1:, axis + 3]], axis=1)  # (N, 2)
        W = np.tile(self._q[axis], (N, 1))
        W[-1] = self._qn[axis]
        err = self._phi @ x0 - ref  # (N, 2)
        g = 2.0 * np.einsum("kin,ki,ki->n", self._gam, W, err)
        return self._hess[axis], g

    def solve(self, state, ref_window) -> np.ndarray:
        """Optimal input sequence, shape (N_h, 3)."""
        ref_window = np.asarray(ref_window, dtype=float)
        if ref_window.shape != (self.config.horizon + 1, 6):
            raise ValueError(f"reference window must be ({self.config.horizon + 1}, 6)")
        ub = self.config.u_bound
        out = np.empty((self.config.horizon, 3))
        for a in range(3):
            H, g = self.axis_problem(state, ref_window, a)
            res = solve_box_qp(H, g, -ub, ub, self.config.tol, self.config.max_iter)
            if not res.converged:
                self.warnings += 1
                log.warning("MPC QP hit iteration cap (KKT residual %.2e)", res.kkt_residual)
            out[:, a] = res.x
        return out

    def step(self, state, ref_window) -> np.ndarray:
        return self.solve(state, ref_window)[0]

    def cost(self, state, ref_window, u_seq) -> float:
        """Objective value (excluding the constant k=0 state term)."""
        u_seq = np.asarray(u_seq, dtype=float)
        total = 0.0
        for a in range(3):
            H, g = self.axis_problem(state, ref_window, a)
            u = u_seq[:, a]
            x0 = np.array([state[a], state[a + 3]])
            ref = np.stack([ref_window[1:, a], ref_window[1:, a + 3]], axis=1)
            W = np.tile(self._q[a], (self.config.horizon, 1))
            W[-1] = self._qn[a]
            err = self._phi @ x0 - ref
            const = float(np.sum(W * err**2))
            total += 0.5 * u @ H @ u + g @ u + const
        return total


def mpc_step(state, ref_window, config: MPCConfig) -> np.ndarray:
    """First input of the box-constrained tracking MPC."""
    return MPCController(config).step(state, ref_window)

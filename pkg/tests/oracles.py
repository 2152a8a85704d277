"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def brute_force_hull(points, tol: float = 1e-12) -> tuple[float, float]:
    """Volume and area of the hull of points in general position, O(n^4).

    A triple is a facet when every other point lies on one side of its plane.
    With no four points coplanar each facet is exactly one triangle, so the
    volume is the sum of tetrahedra from an interior point.
    """
    pts = np.asarray(points, dtype=float)
    centre = pts.mean(axis=0)
    volume = area = 0.0
    for i, j, k in itertools.combinations(range(len(pts)), 3):
        a, b, c = pts[i], pts[j], pts[k]
        normal = np.cross(b - a, c - a)
        side = (pts - a) @ normal
        scale = tol * np.linalg.norm(normal) * np.ptp(pts)
        others = np.delete(side, [i, j, k])
        if np.all(others <= scale) or np.all(others >= -scale):
            area += 0.5 * np.linalg.norm(normal)
            volume += abs(np.dot(a - centre, normal)) / 6.0
    return volume, area


def dense_mpc_oracle(A, B, x0, refs, Q, QN, R):
    """Unconstrained tracking MPC solved as one equality-constrained QP.

    Decision vector z = (u_0..u_{N-1}, x_1..x_N); dynamics enter as equality
    constraints and the full KKT system is solved densely.
    """
    N = len(refs)
    nx, nu = B.shape
    nz = N * nu + N * nx
    H = np.zeros((nz, nz))
    g = np.zeros(nz)
    for k in range(N):
        H[k * nu : (k + 1) * nu, k * nu : (k + 1) * nu] = 2.0 * R
        W = QN if k == N - 1 else Q
        s = N * nu + k * nx
        H[s : s + nx, s : s + nx] = 2.0 * W
        g[s : s + nx] = -2.0 * W @ refs[k]
    Aeq = np.zeros((N * nx, nz))
    beq = np.zeros(N * nx)
    for k in range(N):
        rows = slice(k * nx, (k + 1) * nx)
        Aeq[rows, N * nu + k * nx : N * nu + (k + 1) * nx] = np.eye(nx)
        Aeq[rows, k * nu : (k + 1) * nu] = -B
        if k == 0:
            beq[rows] = A @ x0
        else:
            Aeq[rows, N * nu + (k - 1) * nx : N * nu + k * nx] = -A
    kkt = np.block([[H, Aeq.T], [Aeq, np.zeros((N * nx, N * nx))]])
    sol = np.linalg.solve(kkt, np.concatenate([-g, beq]))
    return sol[: N * nu].reshape(N, nu)


def central_difference(fun, params: dict, name: str, index, eps: float = 1e-6) -> float:
    """d fun / d params[name][index] by central differences."""
    p = params[name]
    orig = p[index]
    p[index] = orig + eps
    up = fun()
    p[index] = orig - eps
    down = fun()
    p[index] = orig
    return (up - down) / (2.0 * eps)

"""Compiled inner loops of the capture simulator.

Everything here works on flat float64 arrays so that one call can advance
the coupled net/debris system by many steps without returning to Python.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

OK, TENSION_FAILURE, DIVERGED = 0, 1, 2


@njit(cache=True)
def quat_matrix(q, out):
    w, x, y, z = q[0], q[1], q[2], q[3]
    out[0, 0] = 1 - 2 * (y * y + z * z)
    out[0, 1] = 2 * (x * y - w * z)
    out[0, 2] = 2 * (x * z + w * y)
    out[1, 0] = 2 * (x * y + w * z)
    out[1, 1] = 1 - 2 * (x * x + z * z)
    out[1, 2] = 2 * (y * z - w * x)
    out[2, 0] = 2 * (x * z - w * y)
    out[2, 1] = 2 * (y * z + w * x)
    out[2, 2] = 1 - 2 * (x * x + y * y)


@njit(cache=True)
def element_forces(pos, vel, ei, ej, rest, k, c, damping_scale, forces, tension):
    """Tension-only spring-dampers. Fills ``tension`` (>= 0) and adds to ``forces``."""
    for e in range(ei.shape[0]):
        a = ei[e]
        b = ej[e]
        dx = pos[b, 0] - pos[a, 0]
        dy = pos[b, 1] - pos[a, 1]
        dz = pos[b, 2] - pos[a, 2]
        length = math.sqrt(dx * dx + dy * dy + dz * dz)
        t = 0.0
        if length > rest[e] and length > 1e-12:
            nx = dx / length
            ny = dy / length
            nz = dz / length
            rate = (vel[b, 0] - vel[a, 0]) * nx + (vel[b, 1] - vel[a, 1]) * ny + (vel[b, 2] - vel[a, 2]) * nz
            t = k[e] * (length - rest[e]) + damping_scale * c[e] * rate
            if t < 0.0:
                t = 0.0
            forces[a, 0] += t * nx
            forces[a, 1] += t * ny
            forces[a, 2] += t * nz
            forces[b, 0] -= t * nx
            forces[b, 1] -= t * ny
            forces[b, 2] -= t * nz
        tension[e] = t


@njit(cache=True)
def contact_forces(
    pos, vel, mass, collide, dpos, dvel, rot, omega_body, radius, half_len, kc, cc, ct, h, forces, dforce, dtorque
):
    """Penalty contact of every colliding node against the cylinder.

    Node forces are added to ``forces``; the exact opposite force and its
    moment about the debris centre of mass accumulate in ``dforce``/``dtorque``
    (inertial frame). Damping coefficients are capped at m/h per node so the
    explicit update cannot reverse the relative velocity within one sub-step.
    Returns the number of nodes in contact.
    """
    # angular velocity in the inertial frame
    wx = rot[0, 0] * omega_body[0] + rot[0, 1] * omega_body[1] + rot[0, 2] * omega_body[2]
    wy = rot[1, 0] * omega_body[0] + rot[1, 1] * omega_body[1] + rot[1, 2] * omega_body[2]
    wz = rot[2, 0] * omega_body[0] + rot[2, 1] * omega_body[1] + rot[2, 2] * omega_body[2]
    n_contact = 0
    for i in range(pos.shape[0]):
        if not collide[i]:
            continue
        rx = pos[i, 0] - dpos[0]
        ry = pos[i, 1] - dpos[1]
        rz = pos[i, 2] - dpos[2]
        # body-frame coordinates: R^T r
        bx = rot[0, 0] * rx + rot[1, 0] * ry + rot[2, 0] * rz
        by = rot[0, 1] * rx + rot[1, 1] * ry + rot[2, 1] * rz
        bz = rot[0, 2] * rx + rot[1, 2] * ry + rot[2, 2] * rz
        rho = math.sqrt(bx * bx + by * by)
        if rho >= radius or abs(bz) >= half_len:
            continue
        pen_side = radius - rho
        pen_cap = half_len - abs(bz)
        if pen_side <= pen_cap:
            depth = pen_side
            if rho > 1e-12:
                nbx = bx / rho
                nby = by / rho
            else:
                nbx = 1.0
                nby = 0.0
            nbz = 0.0
        else:
            depth = pen_cap
            nbx = 0.0
            nby = 0.0
            nbz = 1.0 if bz >= 0.0 else -1.0
        nx = rot[0, 0] * nbx + rot[0, 1] * nby + rot[0, 2] * nbz
        ny = rot[1, 0] * nbx + rot[1, 1] * nby + rot[1, 2] * nbz
        nz = rot[2, 0] * nbx + rot[2, 1] * nby + rot[2, 2] * nbz
        # relative velocity of the node w.r.t. the surface point under it
        sx = dvel[0] + wy * rz - wz * ry
        sy = dvel[1] + wz * rx - wx * rz
        sz = dvel[2] + wx * ry - wy * rx
        vx = vel[i, 0] - sx
        vy = vel[i, 1] - sy
        vz = vel[i, 2] - sz
        vn = vx * nx + vy * ny + vz * nz
        cap = mass[i] / h
        cn = cc if cc < cap else cap
        cta = ct if ct < cap else cap
        fn = kc * depth - cn * vn
        if fn < 0.0:
            fn = 0.0
        tx = vx - vn * nx
        ty = vy - vn * ny
        tz = vz - vn * nz
        fx = fn * nx - cta * tx
        fy = fn * ny - cta * ty
        fz = fn * nz - cta * tz
        forces[i, 0] += fx
        forces[i, 1] += fy
        forces[i, 2] += fz
        dforce[0] -= fx
        dforce[1] -= fy
        dforce[2] -= fz
        # moment of (-f) applied at the node position about the debris CoM
        dtorque[0] -= ry * fz - rz * fy
        dtorque[1] -= rz * fx - rx * fz
        dtorque[2] -= rx * fy - ry * fx
        n_contact += 1
    return n_contact


@njit(cache=True)
def rigid_body_update(dpos, dvel, quat, omega, dmass, inertia, dforce, dtorque, rot, h):
    """Semi-implicit Euler on the debris; exponential-map attitude update."""
    for a in range(3):
        dvel[a] += h * dforce[a] / dmass
        dpos[a] += h * dvel[a]
    # body-frame torque
    tb0 = rot[0, 0] * dtorque[0] + rot[1, 0] * dtorque[1] + rot[2, 0] * dtorque[2]
    tb1 = rot[0, 1] * dtorque[0] + rot[1, 1] * dtorque[1] + rot[2, 1] * dtorque[2]
    tb2 = rot[0, 2] * dtorque[0] + rot[1, 2] * dtorque[1] + rot[2, 2] * dtorque[2]
    L0 = inertia[0] * omega[0]
    L1 = inertia[1] * omega[1]
    L2 = inertia[2] * omega[2]
    # Euler's equations: I w' = tau - w x (I w)
    omega[0] += h * (tb0 - (omega[1] * L2 - omega[2] * L1)) / inertia[0]
    omega[1] += h * (tb1 - (omega[2] * L0 - omega[0] * L2)) / inertia[1]
    omega[2] += h * (tb2 - (omega[0] * L1 - omega[1] * L0)) / inertia[2]
    wn = math.sqrt(omega[0] ** 2 + omega[1] ** 2 + omega[2] ** 2)
    if wn > 0.0:
        half = 0.5 * wn * h
        s = math.sin(half) / wn
        dw = math.cos(half)
        dx = omega[0] * s
        dy = omega[1] * s
        dz = omega[2] * s
        w, x, y, z = quat[0], quat[1], quat[2], quat[3]
        quat[0] = w * dw - x * dx - y * dy - z * dz
        quat[1] = w * dx + x * dw + y * dz - z * dy
        quat[2] = w * dy - x * dz + y * dw + z * dx
        quat[3] = w * dz + x * dy - y * dx + z * dw
    qn = math.sqrt(quat[0] ** 2 + quat[1] ** 2 + quat[2] ** 2 + quat[3] ** 2)
    for a in range(4):
        quat[a] /= qn


@njit(cache=True)
def advance(
    n_steps,
    dt,
    n_sub,
    t0,
    pos,
    vel,
    mass,
    inv_mass,
    collide,
    ei,
    ej,
    rest,
    k,
    c,
    limit,
    damping_scale,
    closing_idx,
    closing_l0,
    locked,
    t_close,
    close_duration,
    close_fraction,
    lock_fraction,
    mu_idx,
    thrust,
    dpos,
    dvel,
    quat,
    omega,
    dmass,
    inertia,
    radius,
    half_len,
    kc,
    cc,
    ct,
    contact_on,
    rec_pos,
    rec_vel,
    stats,
):
    """Advance ``n_steps`` outer steps of length ``dt``, each split in ``n_sub``.

    ``thrust`` (4, 3) is held constant. MU states after every outer step are
    written into ``rec_pos``/``rec_vel``. ``stats`` receives
    [max tension/limit, min applied tension, max contact count].
    Returns (status, steps completed).
    """
    n = pos.shape[0]
    h = dt / n_sub
    forces = np.zeros((n, 3))
    tension = np.zeros(ei.shape[0])
    rot = np.empty((3, 3))
    dforce = np.zeros(3)
    dtorque = np.zeros(3)
    for step in range(n_steps):
        t = t0 + step * dt
        if t >= t_close - 1e-12:
            frac = 1.0 - (1.0 - close_fraction) * (t - t_close) / close_duration
            if frac < close_fraction:
                frac = close_fraction
            for s in range(closing_idx.shape[0]):
                if not locked[s]:
                    rest[closing_idx[s]] = frac * closing_l0[s]
        for sub in range(n_sub):
            forces[:, :] = 0.0
            element_forces(pos, vel, ei, ej, rest, k, c, damping_scale, forces, tension)
            for e in range(ei.shape[0]):
                if tension[e] < stats[1]:
                    stats[1] = tension[e]
                r = tension[e] / limit[e]
                if r > stats[0]:
                    stats[0] = r
                if tension[e] > limit[e]:
                    return TENSION_FAILURE, step
            for m in range(4):
                for a in range(3):
                    forces[mu_idx[m], a] += thrust[m, a]
            quat_matrix(quat, rot)
            dforce[:] = 0.0
            dtorque[:] = 0.0
            if contact_on:
                nc = contact_forces(
                    pos, vel, mass, collide, dpos, dvel, rot, omega, radius, half_len, kc, cc, ct, h, forces, dforce, dtorque
                )
                if nc > stats[2]:
                    stats[2] = nc
            for i in range(n):
                im = inv_mass[i]
                for a in range(3):
                    vel[i, a] += h * forces[i, a] * im
                    pos[i, a] += h * vel[i, a]
            rigid_body_update(dpos, dvel, quat, omega, dmass, inertia, dforce, dtorque, rot, h)
        if t >= t_close - 1e-12:
            for s in range(closing_idx.shape[0]):
                if locked[s]:
                    continue
                e = closing_idx[s]
                a = ei[e]
                b = ej[e]
                d = math.sqrt(
                    (pos[b, 0] - pos[a, 0]) ** 2 + (pos[b, 1] - pos[a, 1]) ** 2 + (pos[b, 2] - pos[a, 2]) ** 2
                )
                if d <= lock_fraction * closing_l0[s]:
                    locked[s] = True
        for m in range(4):
            for a in range(3):
                rec_pos[step, m, a] = pos[mu_idx[m], a]
                rec_vel[step, m, a] = vel[mu_idx[m], a]
        for i in range(n):
            for a in range(3):
                if not math.isfinite(pos[i, a]) or abs(pos[i, a]) > 1e6:
                    return DIVERGED, step
    return OK, n_steps

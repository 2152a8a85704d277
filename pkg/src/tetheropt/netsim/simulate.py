"""Capture mission: MPC-thrusted flight, closing, and final capture metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..catalog import DesignPoint
from ..guidance import (
    MPCConfig,
    MPCController,
    compute_aiming_points,
    compute_final_velocities,
    min_energy_reference,
)
from ..metrics import compute_cqi, convex_hull, integrate_fuel, is_success
from . import kernel
from .model import DebrisSpec, DebrisState, NetModel, build_net

log = logging.getLogger(__name__)

TENSION_FAILURE_CQI = 50.0


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"simulation diverged at step {step}")
        self.step = step


@dataclass(frozen=True)
class ScenarioSpec:
    target_position: tuple = (9.0, 9.0, -60.0)  # m
    euler_deg: tuple = (60.0, 40.0, 0.0)  # 3-2-1 sequence
    omega_deg: tuple = (10.0, 30.0, 10.0)  # body frame, deg/s

    def __post_init__(self):
        vals = [*self.target_position, *self.euler_deg, *self.omega_deg]
        if len(vals) != 9 or not all(math.isfinite(v) for v in vals):
            raise ValueError("scenario values must be 3 finite numbers each")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_thrust: float = 25.0  # thrust cut-off and closing activation
    t_end: float = 35.0
    t_f: float = 25.0  # maneuver time of the reference path
    control_rate: float = 20.0  # Hz
    mpc_horizon: int = 10
    q_diag: tuple = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    r_diag: tuple = (0.01, 0.01, 0.01)
    k_contact: float = 5.0e4
    c_contact: float = 200.0
    c_tangent: float = 50.0
    damping_ratio: float = 0.106
    closing_fraction: float = 0.10
    lock_fraction: float = 0.25
    main_tether_rest: float = 62.0
    anchor_offset: float = 2.0
    stability_factor: float = 0.6
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    debris: DebrisSpec = field(default_factory=DebrisSpec)
    record_trajectory: bool = False

    @property
    def steps_per_tick(self) -> int:
        ratio = 1.0 / (self.control_rate * self.dt)
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-9:
            raise ValueError(f"dt={self.dt} must divide the controller period {1.0 / self.control_rate}")
        return n


@dataclass
class SimOutcome:
    cqi_final: float
    n_locked: int
    m_prop: float
    tension_failed: bool
    success: bool
    thrust_history: np.ndarray  # (T, 4, 3) at the physics step, ZOH of controller output
    thrust_dt: float
    max_tension_ratio: float = 0.0
    min_tension: float = 0.0
    volume: float = float("nan")
    surface_area: float = float("nan")
    q_n: float = float("nan")
    substeps: int = 1
    mu_times: np.ndarray | None = None
    mu_positions: np.ndarray | None = None  # (T, 4, 3)
    mu_velocities: np.ndarray | None = None
    mu_reference: np.ndarray | None = None  # (K, 4, 6) at controller rate
    final_positions: np.ndarray | None = None
    debris_final: DebrisState | None = None

    def summary(self) -> dict:
        return {
            "cqi_final": self.cqi_final,
            "n_locked": self.n_locked,
            "m_prop": self.m_prop,
            "tension_failed": self.tension_failed,
            "success": self.success,
            "hull_volume": self.volume,
            "hull_area": self.surface_area,
            "q_n": self.q_n,
            "max_tension_ratio": self.max_tension_ratio,
        }


def net_centre_of_mass(positions: np.ndarray, masses: np.ndarray) -> np.ndarray:
    """Mass-weighted centroid of every finite-mass node (knots and MUs)."""
    finite = np.isfinite(masses)
    w = masses[finite]
    return (positions[finite] * w[:, None]).sum(axis=0) / w.sum()


def count_locked(locked) -> int:
    return int(np.count_nonzero(locked))


def closing_rest_lengths(l0, locked, frozen, t, t_close, duration, fraction=0.1):
    """Rest lengths of the closing segments at time ``t``.

    Unlocked segments shrink linearly to ``fraction`` of their activation
    value over ``duration``; locked ones keep their ``frozen`` value.
    """
    l0 = np.asarray(l0, dtype=float)
    if t < t_close:
        return l0.copy()
    frac = max(fraction, 1.0 - (1.0 - fraction) * (t - t_close) / duration)
    return np.where(locked, frozen, frac * l0)


def update_locks(lengths, l0, locked, lock_fraction=0.25) -> np.ndarray:
    """Lock every segment whose current length fell to ``lock_fraction`` of its activation length."""
    return np.asarray(locked) | (np.asarray(lengths) <= lock_fraction * np.asarray(l0))


class CaptureSimulation:
    """One capture run; single-threaded, owns all of its mutable state."""

    def __init__(self, design: DesignPoint, config: SimConfig | None = None):
        self.design = design
        self.config = config or SimConfig()
        cfg = self.config
        self.model: NetModel = build_net(
            design.comb,
            design.cont,
            damping_ratio=cfg.damping_ratio,
            main_tether_rest=cfg.main_tether_rest,
            anchor_offset=cfg.anchor_offset,
        )
        arr = self.model.element_arrays()
        self.ei, self.ej = arr["i"], arr["j"]
        self.rest = arr["rest"].copy()
        self.k, self.c, self.kind = arr["k"], arr["c"], arr["kind"]
        self.limit = arr["limit"]
        self.pos = self.model.positions.copy()
        self.vel = self.model.velocities.copy()
        self.mass = self.model.masses
        self.inv_mass = self.model.inv_masses
        self.mass_finite = np.where(np.isfinite(self.mass), self.mass, 1e30)
        self.collide = np.isfinite(self.mass)
        self.closing_idx = self.model.closing_elements.astype(np.int64)
        self.closing_l0 = self.rest[self.closing_idx].copy()
        self.locked = np.zeros(12, dtype=np.bool_)
        sc = cfg.scenario
        self.debris = DebrisState.initial(sc.target_position, sc.euler_deg, sc.omega_deg)
        self.n_sub = self.substeps()
        self.stats = np.array([0.0, np.inf, 0.0])

    def substeps(self, dt: float | None = None) -> int:
        dt = self.config.dt if dt is None else dt
        omega = self.model.stiffness_frequency(self.config.k_contact)
        zeta = self.config.damping_ratio
        h_max = self.config.stability_factor * 2.0 * (math.sqrt(1.0 + zeta**2) - zeta) / omega
        return max(1, math.ceil(dt / h_max))

    def references(self):
        cfg = self.config
        cont = self.design.cont
        r0 = self.pos[self.model.mu_indices]
        aims = compute_aiming_points(cont, cfg.scenario.target_position)
        v_final = compute_final_velocities(cont, aims, r0, cfg.t_f)
        refs = []
        for m in range(4):
            s0 = np.concatenate([r0[m], np.zeros(3)])
            sf = np.concatenate([aims[m], v_final[m]])
            refs.append(min_energy_reference(s0, sf, cfg.t_f, cfg.control_rate))
        return refs

    def _advance(self, n_steps, t0, thrust, rec_pos, rec_vel, damping_scale=1.0, contact=True):
        cfg = self.config
        d = self.debris
        spec = cfg.debris
        status, done = kernel.advance(
            n_steps,
            cfg.dt,
            self.n_sub,
            t0,
            self.pos,
            self.vel,
            self.mass_finite,
            self.inv_mass,
            self.collide,
            self.ei,
            self.ej,
            self.rest,
            self.k,
            self.c,
            self.limit,
            damping_scale,
            self.closing_idx,
            self.closing_l0,
            self.locked,
            cfg.t_thrust,
            cfg.t_end - cfg.t_thrust,
            cfg.closing_fraction,
            cfg.lock_fraction,
            self.model.mu_indices.astype(np.int64),
            np.ascontiguousarray(thrust, dtype=float),
            d.com_position,
            d.com_velocity,
            d.quaternion,
            d.angular_velocity,
            spec.mass,
            spec.inertia,
            spec.radius,
            spec.half_length,
            cfg.k_contact,
            cfg.c_contact,
            cfg.c_tangent,
            contact,
            rec_pos,
            rec_vel,
            self.stats,
        )
        return status, done

    def run(self, thrust_enabled: bool = True) -> SimOutcome:
        cfg = self.config
        spt = cfg.steps_per_tick
        n_thrust_ticks = int(round(cfg.t_thrust * cfg.control_rate))
        n_total = int(round(cfg.t_end / cfg.dt))
        n_thrust = n_thrust_ticks * spt
        mu_mass = self.design.cont.m_mu + self.design.comb.thruster.m_t
        mpc = MPCController(
            MPCConfig(
                horizon=cfg.mpc_horizon,
                q_diag=cfg.q_diag,
                qn_diag=cfg.q_diag,
                r_diag=cfg.r_diag,
                dt=1.0 / cfg.control_rate,
                f_t_max=self.design.comb.thruster.f_t_max,
                mass=mu_mass,
            )
        )
        refs = self.references()
        rec_pos = np.zeros((n_total, 4, 3))
        rec_vel = np.zeros((n_total, 4, 3))
        thrust_hist = np.zeros((n_thrust + 1, 4, 3))
        mu = self.model.mu_indices
        status, done = kernel.OK, 0
        for tick in range(n_thrust_ticks):
            thrust = np.zeros((4, 3))
            if thrust_enabled:
                for m in range(4):
                    state = np.concatenate([self.pos[mu[m]], self.vel[mu[m]]])
                    thrust[m] = mpc.step(state, refs[m].window(tick, cfg.mpc_horizon))
            s0 = tick * spt
            status, done = self._advance(spt, s0 * cfg.dt, thrust, rec_pos[s0:], rec_vel[s0:])
            thrust_hist[s0 : s0 + done] = thrust
            if status != kernel.OK:
                done += s0
                break
        else:
            status, done = self._advance(
                n_total - n_thrust, n_thrust * cfg.dt, np.zeros((4, 3)), rec_pos[n_thrust:], rec_vel[n_thrust:]
            )
            done += n_thrust
        if status == kernel.DIVERGED:
            raise SimulationDiverged(done)

        m_prop = integrate_fuel(thrust_hist, self.design.comb.thruster.i_sp, cfg.dt)
        knots = self.pos[: self.model.n_knots]
        tension_failed = status == kernel.TENSION_FAILURE
        if tension_failed:
            cqi, n_locked = TENSION_FAILURE_CQI, 0
            hull_v = hull_s = q_n = float("nan")
        else:
            hull = convex_hull(knots)
            com = net_centre_of_mass(self.pos, self.model.masses)
            q_n = float(np.linalg.norm(com - self.debris.com_position))
            cqi = compute_cqi(hull, cfg.debris, q_n)
            n_locked = count_locked(self.locked)
            hull_v, hull_s = hull.volume, hull.surface_area
        outcome = SimOutcome(
            cqi_final=float(cqi),
            n_locked=int(n_locked),
            m_prop=float(m_prop),
            tension_failed=tension_failed,
            success=is_success(cqi, n_locked, tension_failed),
            thrust_history=thrust_hist,
            thrust_dt=cfg.dt,
            max_tension_ratio=float(self.stats[0]),
            min_tension=float(self.stats[1]),
            volume=hull_v,
            surface_area=hull_s,
            q_n=q_n,
            substeps=self.n_sub,
            final_positions=self.pos.copy(),
            debris_final=self.debris,
        )
        if cfg.record_trajectory:
            outcome.mu_times = cfg.dt * np.arange(done + 1)
            init_p = self.model.positions[mu][None]
            init_v = np.zeros((1, 4, 3))
            outcome.mu_positions = np.concatenate([init_p, rec_pos[:done]])
            outcome.mu_velocities = np.concatenate([init_v, rec_vel[:done]])
            outcome.mu_reference = np.stack([r.states for r in refs], axis=1)
        return outcome


def run_capture(design: DesignPoint, config: SimConfig | None = None, thrust_enabled: bool = True) -> SimOutcome:
    """Simulate one capture from launch to the end of closing."""
    return CaptureSimulation(design, config).run(thrust_enabled=thrust_enabled)


def element_force(element, positions, velocities):
    """Force on the two endpoints of one tension-only element.

    Returns (force on ``element.i``, force on ``element.j``, tension).
    """
    pos = np.asarray(positions, dtype=float)
    vel = np.asarray(velocities, dtype=float)
    forces = np.zeros((pos.shape[0], 3))
    tension = np.zeros(1)
    kernel.element_forces(
        pos,
        vel,
        np.array([element.i], dtype=np.int64),
        np.array([element.j], dtype=np.int64),
        np.array([element.rest_length]),
        np.array([element.stiffness]),
        np.array([element.damping]),
        1.0,
        forces,
        tension,
    )
    if np.linalg.norm(pos[element.j] - pos[element.i]) <= 1e-12:
        log.debug("coincident endpoints on element (%d, %d)", element.i, element.j)
    return forces[element.i], forces[element.j], float(tension[0])


def contact_force(
    positions, velocities, masses, debris: DebrisState, spec: DebrisSpec, config: SimConfig | None = None, h: float = 1e-4
):
    """Contact forces on every node plus the reaction force and torque on the debris."""
    cfg = config or SimConfig()
    pos = np.ascontiguousarray(positions, dtype=float)
    vel = np.ascontiguousarray(velocities, dtype=float)
    masses = np.asarray(masses, dtype=float)
    forces = np.zeros_like(pos)
    dforce = np.zeros(3)
    dtorque = np.zeros(3)
    kernel.contact_forces(
        pos,
        vel,
        masses,
        np.ones(len(pos), dtype=np.bool_),
        np.asarray(debris.com_position, dtype=float),
        np.asarray(debris.com_velocity, dtype=float),
        debris.rotation,
        np.asarray(debris.angular_velocity, dtype=float),
        spec.radius,
        spec.half_length,
        cfg.k_contact,
        cfg.c_contact,
        cfg.c_tangent,
        h,
        forces,
        dforce,
        dtorque,
    )
    return forces, dforce, dtorque

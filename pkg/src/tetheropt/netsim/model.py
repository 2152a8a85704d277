"""Lumped-mass net, corner MUs and rigid cylindrical target."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..catalog import CombNode, ContinuousVector, closing_offset
from ..guidance import corner_signs

MESH, CORNER, CLOSING, MAIN_TETHER = 0, 1, 2, 3
KIND_NAMES = {MESH: "mesh", CORNER: "corner", CLOSING: "closing", MAIN_TETHER: "main_tether"}


@dataclass(frozen=True)
class SpringElement:
    i: int
    j: int
    rest_length: float
    stiffness: float
    damping: float
    kind: int
    tension_limit: float = math.inf


@dataclass(frozen=True)
class DebrisSpec:
    """Rigid solid cylinder; the symmetry axis is the body z axis."""

    mass: float = 9000.0
    diameter: float = 3.9
    length: float = 11.0
    volume: float = 125.3  # tabulated, used by the capture-quality index
    surface_area: float = 159.9  # tabulated

    @property
    def radius(self) -> float:
        return self.diameter / 2.0

    @property
    def half_length(self) -> float:
        return self.length / 2.0

    @property
    def l_c(self) -> float:
        """Shortest distance from the centre of mass to the surface."""
        return min(self.radius, self.half_length)

    @property
    def inertia(self) -> np.ndarray:
        r, h, m = self.radius, self.length, self.mass
        transverse = m * (3.0 * r**2 + h**2) / 12.0
        return np.array([transverse, transverse, 0.5 * m * r**2])


def euler321_to_quat(yaw_deg: float, pitch_deg: float, roll_deg: float) -> np.ndarray:
    """Body-to-inertial quaternion (w, x, y, z) for a 3-2-1 rotation sequence."""
    y, p, r = (math.radians(a) / 2.0 for a in (yaw_deg, pitch_deg, roll_deg))
    cy, sy, cp, sp, cr, sr = math.cos(y), math.sin(y), math.cos(p), math.sin(p), math.cos(r), math.sin(r)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


@dataclass
class DebrisState:
    com_position: np.ndarray
    com_velocity: np.ndarray
    quaternion: np.ndarray  # body -> inertial, (w, x, y, z)
    angular_velocity: np.ndarray  # rad/s, body frame

    @classmethod
    def initial(cls, position, euler_deg, omega_deg) -> "DebrisState":
        return cls(
            np.asarray(position, dtype=float).copy(),
            np.zeros(3),
            euler321_to_quat(*euler_deg),
            np.radians(np.asarray(omega_deg, dtype=float)),
        )

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_matrix(self.quaternion)


@dataclass
class NetModel:
    """Net knots ``0..n_k**2-1``, then the four MUs, then the chaser anchor.

    The anchor has zero inverse mass (station-keeping chaser).
    """

    n_k: int
    mesh_length: float
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    elements: list[SpringElement]
    mu_indices: np.ndarray
    corner_knots: np.ndarray
    closing_nodes: np.ndarray  # 12 perimeter knots in perimeter order
    closing_elements: np.ndarray  # element index of each closing segment
    anchor_index: int
    main_tether: int  # element index
    meta: dict = field(default_factory=dict)

    @property
    def n_knots(self) -> int:
        return self.n_k**2

    @property
    def n_nodes(self) -> int:
        return len(self.masses)

    @property
    def inv_masses(self) -> np.ndarray:
        out = np.zeros_like(self.masses)
        finite = np.isfinite(self.masses)
        out[finite] = 1.0 / self.masses[finite]
        return out

    def element_arrays(self) -> dict[str, np.ndarray]:
        e = self.elements
        return {
            "i": np.array([x.i for x in e], dtype=np.int64),
            "j": np.array([x.j for x in e], dtype=np.int64),
            "rest": np.array([x.rest_length for x in e]),
            "k": np.array([x.stiffness for x in e]),
            "c": np.array([x.damping for x in e]),
            "kind": np.array([x.kind for x in e], dtype=np.int64),
            "limit": np.array([x.tension_limit for x in e]),
        }

    def stiffness_frequency(self, k_contact: float = 0.0) -> float:
        """Gershgorin bound on the highest axial natural frequency (rad/s)."""
        ksum = np.zeros(self.n_nodes)
        for e in self.elements:
            ksum[e.i] += e.stiffness
            ksum[e.j] += e.stiffness
        inv_m = self.inv_masses
        lam = (2.0 * ksum + k_contact) * inv_m
        return float(math.sqrt(lam.max()))


def perimeter_ring(n_k: int) -> list[int]:
    """Perimeter knot ids, counter-clockwise from the (0, 0) corner."""
    last = n_k - 1
    ring = [c for c in range(last)]  # bottom row, r = 0
    ring += [r * n_k + last for r in range(last)]  # right column
    ring += [last * n_k + c for c in range(last, 0, -1)]  # top row
    ring += [r * n_k for r in range(last, 0, -1)]  # left column
    return ring


def closing_node_positions(n_k: int, k_cls: int, shapes: dict | None = None) -> list[int]:
    """Positions along :func:`perimeter_ring` of the 12 closing nodes."""
    half = (n_k - 1) // 2
    off = closing_offset(n_k, k_cls, shapes)
    side = n_k - 1
    out = []
    for edge in range(4):
        base = edge * side
        out += [base, base + half - off, base + half + off]
    return out


def build_net(
    comb: CombNode,
    cont: ContinuousVector,
    damping_ratio: float = 0.106,
    main_tether_rest: float = 62.0,
    anchor_offset: float = 2.0,
    shapes: dict | None = None,
) -> NetModel:
    """Flat square net in the z = 0 plane with the MU-1 corner knot at the origin."""
    n = comb.shape.n_k
    mat = comb.material
    L = cont.l_net / (n - 1)
    area_t = math.pi * cont.r_thread**2
    area_c = math.pi * cont.r_corner**2
    n_knots = n * n

    pos = np.zeros((n_knots + 5, 3))
    for r in range(n):
        for c in range(n):
            pos[r * n + c] = (c * L, r * L, 0.0)
    corner_knots = np.array([0, n - 1, (n - 1) * n, n * n - 1])
    mu_indices = np.arange(n_knots, n_knots + 4)
    for i in range(4):
        sx, sy = corner_signs(i + 1)
        pos[mu_indices[i]] = pos[corner_knots[i]] + cont.l_ct * np.array([sx, sy, 0.0]) / math.sqrt(2.0)
    anchor = n_knots + 4
    centre = (n // 2) * n + n // 2
    pos[anchor] = pos[centre] + (0.0, 0.0, anchor_offset)

    masses = np.zeros(n_knots + 5)
    raw = []  # (i, j, rest, area, kind, limit)
    limit_t = mat.tension_limit(cont.r_thread)
    limit_c = mat.tension_limit(cont.r_corner)
    for r in range(n):
        for c in range(n):
            k = r * n + c
            if c + 1 < n:
                raw.append((k, k + 1, L, area_t, MESH, limit_t))
            if r + 1 < n:
                raw.append((k, k + n, L, area_t, MESH, limit_t))
    for i in range(4):
        raw.append((corner_knots[i], mu_indices[i], cont.l_ct, area_c, CORNER, limit_c))
    for a, b, rest, area, kind, _ in raw:
        half = 0.5 * mat.rho_n * area * rest
        masses[a] += half
        masses[b] += half
    masses[mu_indices] += cont.m_mu + comb.thruster.m_t
    masses[anchor] = math.inf

    ring = perimeter_ring(n)
    ring_pos = closing_node_positions(n, comb.shape.k_cls, shapes)
    closing_nodes = np.array([ring[p] for p in ring_pos])
    first_closing = len(raw)
    for s in range(12):
        p0, p1 = ring_pos[s], ring_pos[(s + 1) % 12]
        span = (p1 - p0) % len(ring)
        raw.append((ring[p0], ring[p1], span * L, area_t, CLOSING, math.inf))
    main_idx = len(raw)
    raw.append((centre, anchor, main_tether_rest, area_t, MAIN_TETHER, math.inf))

    elements = []
    for a, b, rest, area, kind, limit in raw:
        stiff = mat.e_n * area / rest
        ma, mb = masses[a], masses[b]
        m_red = mb if not math.isfinite(ma) else ma if not math.isfinite(mb) else ma * mb / (ma + mb)
        elements.append(
            SpringElement(int(a), int(b), float(rest), stiff, 2.0 * damping_ratio * math.sqrt(stiff * m_red), kind, limit)
        )

    return NetModel(
        n_k=n,
        mesh_length=L,
        positions=pos,
        velocities=np.zeros_like(pos),
        masses=masses,
        elements=elements,
        mu_indices=mu_indices,
        corner_knots=corner_knots,
        closing_nodes=closing_nodes,
        closing_elements=np.arange(first_closing, first_closing + 12),
        anchor_index=anchor,
        main_tether=main_idx,
        meta={"centre_knot": centre},
    )

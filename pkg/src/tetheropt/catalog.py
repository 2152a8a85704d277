"""Design space of the tether-net system.

Combinatorial option tables (thrusters, net materials, net shapes with their
closing-node index ranges), continuous variable bounds, enumeration of the
180 valid combinations and min-max normalization.
"""

from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

N_CONTINUOUS = 17
N_FEATURES = 7

CONTINUOUS_NAMES: tuple[str, ...] = (
    *(f"dx[{i}]" for i in range(4)),
    *(f"dy[{i}]" for i in range(4)),
    *(f"v[{i}]" for i in range(4)),
    "m_mu",
    "r_thread",
    "r_corner",
    "l_net",
    "l_ct",
)
FEATURE_NAMES: tuple[str, ...] = ("f_t_max", "i_sp", "m_t", "e_n", "rho_n", "n_k", "k_cls")


@dataclass(frozen=True)
class ThrusterSpec:
    f_t_max: float  # N
    i_sp: float  # s
    m_t: float  # kg

    def __post_init__(self):
        if min(self.f_t_max, self.i_sp, self.m_t) <= 0:
            raise ValueError(f"thruster fields must be positive: {self}")


@dataclass(frozen=True)
class MaterialSpec:
    """Net fiber. ``ultimate_stress`` sets the tension limit of a thread."""

    e_n: float  # Pa
    rho_n: float  # kg/m^3
    ultimate_stress: float = 3.0e9  # Pa, aramid-like stand-in
    poisson: float = 0.3  # unconfirmed, not used by the axial thread model

    def __post_init__(self):
        if self.e_n <= 0 or self.rho_n <= 0 or self.ultimate_stress <= 0:
            raise ValueError(f"material fields must be positive: {self}")

    def tension_limit(self, radius: float) -> float:
        return self.ultimate_stress * math.pi * radius**2


@dataclass(frozen=True)
class NetShapeSpec:
    n_k: int
    k_cls: int


@dataclass(frozen=True)
class CombNode:
    index: int  # 1-based, dense
    thruster: ThrusterSpec
    material: MaterialSpec
    shape: NetShapeSpec

    @property
    def feature(self) -> np.ndarray:
        return np.array(
            [
                self.thruster.f_t_max,
                self.thruster.i_sp,
                self.thruster.m_t,
                self.material.e_n,
                self.material.rho_n,
                float(self.shape.n_k),
                float(self.shape.k_cls),
            ]
        )


@dataclass(frozen=True)
class ContinuousVector:
    dx: tuple[float, float, float, float]
    dy: tuple[float, float, float, float]
    v: tuple[float, float, float, float]
    m_mu: float
    r_thread: float
    r_corner: float
    l_net: float
    l_ct: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [*self.dx, *self.dy, *self.v, self.m_mu, self.r_thread, self.r_corner, self.l_net, self.l_ct],
            dtype=float,
        )

    @classmethod
    def from_array(cls, x: Sequence[float]) -> "ContinuousVector":
        """Build without bound checks; use :func:`validate_continuous` for checked input."""
        x = [float(v) for v in x]
        if len(x) != N_CONTINUOUS:
            raise ValueError(f"expected {N_CONTINUOUS} continuous values, got {len(x)}")
        return cls(tuple(x[0:4]), tuple(x[4:8]), tuple(x[8:12]), *x[12:17])


@dataclass(frozen=True)
class DesignPoint:
    comb: CombNode
    cont: ContinuousVector

    def to_dict(self) -> dict:
        return {
            "node": self.comb.index,
            "continuous": dict(zip(CONTINUOUS_NAMES, self.cont.as_array().tolist())),
        }


DEFAULT_THRUSTERS = (
    ThrusterSpec(8.9, 60.0, 0.37),
    ThrusterSpec(3.6, 57.0, 0.023),
    ThrusterSpec(6.1, 277.0, 0.6),
    ThrusterSpec(5.5, 253.0, 0.48),
    ThrusterSpec(6.0, 250.0, 0.25),
)
DEFAULT_MATERIALS = (
    MaterialSpec(70.0e9, 1390.0),
    MaterialSpec(70.5e9, 1440.0),
    MaterialSpec(112.4e9, 1440.0),
)
# knots per side -> inclusive closing-node index range
DEFAULT_SHAPES = {9: (-2, 0), 11: (-2, 1), 13: (-3, 1)}
DEFAULT_BOUNDS = (
    *([(-5.0, 5.0)] * 8),
    *([(-1.0, 4.0)] * 4),
    (2.0, 3.0),
    (5.0e-4, 1.5e-3),
    (1.0e-4, 1.5e-3),
    (19.0, 25.0),
    (0.5, 2.0),
)


def closing_offset(n_k: int, k_cls: int, shapes: dict | None = None) -> int:
    """Knot offset of the two closing nodes from the centre of a net edge.

    Higher ``k_cls`` sits closer to the edge centre; the largest index of each
    shape maps to offset 1.
    """
    shapes = DEFAULT_SHAPES if shapes is None else shapes
    return shapes[n_k][1] + 1 - k_cls


def _fmt_bound(value: float) -> str:
    return f"{value:g}"


@dataclass(frozen=True)
class Catalog:
    """Option tables and bounds; immutable and safe to share across workers."""

    thrusters: tuple[ThrusterSpec, ...] = DEFAULT_THRUSTERS
    materials: tuple[MaterialSpec, ...] = DEFAULT_MATERIALS
    shapes: dict = field(default_factory=lambda: dict(DEFAULT_SHAPES))
    bounds: tuple[tuple[float, float], ...] = DEFAULT_BOUNDS

    def __post_init__(self):
        if len(self.bounds) != N_CONTINUOUS:
            raise ValueError(f"need {N_CONTINUOUS} continuous bounds")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"empty bound [{lo}, {hi}]")
        for n_k, (k_lo, k_hi) in self.shapes.items():
            if k_lo > k_hi:
                raise ValueError(f"empty closing index range for n_k={n_k}")
            offsets = [closing_offset(n_k, k, self.shapes) for k in (k_lo, k_hi)]
            if min(offsets) < 1 or max(offsets) > (n_k - 1) // 2 - 1:
                raise ValueError(f"closing index range {k_lo}..{k_hi} does not fit n_k={n_k}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b[1] for b in self.bounds])

    def shape_pairs(self) -> list[NetShapeSpec]:
        return [
            NetShapeSpec(n_k, k)
            for n_k in sorted(self.shapes)
            for k in range(self.shapes[n_k][0], self.shapes[n_k][1] + 1)
        ]

    def enumerate_combinations(self) -> list[CombNode]:
        nodes = []
        for thruster in self.thrusters:
            for material in self.materials:
                for shape in self.shape_pairs():
                    nodes.append(CombNode(len(nodes) + 1, thruster, material, shape))
        return nodes

    def feature_matrix(self) -> np.ndarray:
        return np.stack([n.feature for n in self.enumerate_combinations()])

    def to_dict(self) -> dict:
        return {
            "thrusters": [asdict(t) for t in self.thrusters],
            "materials": [asdict(m) for m in self.materials],
            "shapes": [{"n_k": n, "k_cls_min": lo, "k_cls_max": hi} for n, (lo, hi) in sorted(self.shapes.items())],
            "continuous": [
                {"name": name, "lower": lo, "upper": hi} for name, (lo, hi) in zip(CONTINUOUS_NAMES, self.bounds)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Catalog":
        bounds = {c["name"]: (float(c["lower"]), float(c["upper"])) for c in data["continuous"]}
        missing = set(CONTINUOUS_NAMES) - set(bounds)
        if missing:
            raise ValueError(f"catalog is missing continuous bounds for {sorted(missing)}")
        return cls(
            thrusters=tuple(ThrusterSpec(**t) for t in data["thrusters"]),
            materials=tuple(MaterialSpec(**m) for m in data["materials"]),
            shapes={int(s["n_k"]): (int(s["k_cls_min"]), int(s["k_cls_max"])) for s in data["shapes"]},
            bounds=tuple(bounds[name] for name in CONTINUOUS_NAMES),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(tomli_w.dumps(self.to_dict()).encode())

    @classmethod
    def load(cls, path: str | Path) -> "Catalog":
        return cls.from_dict(tomllib.loads(Path(path).read_text()))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_CATALOG = Catalog()


def enumerate_combinations(catalog: Catalog = DEFAULT_CATALOG) -> list[CombNode]:
    """All valid combinations, thruster-major, then material, then shape/closing pair."""
    return catalog.enumerate_combinations()


def validate_continuous(x: Sequence[float], catalog: Catalog = DEFAULT_CATALOG) -> ContinuousVector:
    x = np.asarray(x, dtype=float)
    if x.shape != (N_CONTINUOUS,):
        raise ValueError(f"expected {N_CONTINUOUS} continuous values, got shape {x.shape}")
    for name, value, (lo, hi) in zip(CONTINUOUS_NAMES, x, catalog.bounds):
        if not np.isfinite(value):
            raise ValueError(f"{name} is not finite")
        if value > hi:
            raise ValueError(f"{name} exceeds {_fmt_bound(hi)}")
        if value < lo:
            raise ValueError(f"{name} is below {_fmt_bound(lo)}")
    return ContinuousVector.from_array(x)


def feature_bounds(catalog: Catalog = DEFAULT_CATALOG) -> tuple[np.ndarray, np.ndarray]:
    feats = catalog.feature_matrix()
    return feats.min(axis=0), feats.max(axis=0)


def _scale(value, lo, hi):
    span = np.where(hi > lo, hi - lo, 1.0)
    return (value - lo) / span


def normalize_features(features: np.ndarray, catalog: Catalog = DEFAULT_CATALOG) -> np.ndarray:
    lo, hi = feature_bounds(catalog)
    return _scale(np.asarray(features, dtype=float), lo, hi)


def normalize_continuous(x: np.ndarray, catalog: Catalog = DEFAULT_CATALOG) -> np.ndarray:
    return _scale(np.asarray(x, dtype=float), catalog.lower, catalog.upper)


def denormalize_continuous(u: np.ndarray, catalog: Catalog = DEFAULT_CATALOG) -> np.ndarray:
    lo, hi = catalog.lower, catalog.upper
    return lo + np.asarray(u, dtype=float) * (hi - lo)


def normalize(point: DesignPoint, catalog: Catalog = DEFAULT_CATALOG) -> tuple[np.ndarray, np.ndarray]:
    """Min-max scale a design point to ([0,1]^7, [0,1]^17)."""
    return normalize_features(point.comb.feature, catalog), normalize_continuous(point.cont.as_array(), catalog)


def denormalize(
    features: np.ndarray, cont: np.ndarray, catalog: Catalog = DEFAULT_CATALOG
) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = feature_bounds(catalog)
    return lo + np.asarray(features) * np.where(hi > lo, hi - lo, 1.0), denormalize_continuous(cont, catalog)


def baseline_design(catalog: Catalog = DEFAULT_CATALOG) -> DesignPoint:
    """Reference design from earlier work.

    Its corner-thread length (2.414 m) lies outside the optimization box, so the
    continuous part is built unchecked.
    """
    node = next(
        n
        for n in catalog.enumerate_combinations()
        if n.thruster == DEFAULT_THRUSTERS[0] and n.material == DEFAULT_MATERIALS[0] and n.shape == NetShapeSpec(11, 1)
    )
    cont = ContinuousVector((0.0,) * 4, (0.0,) * 4, (0.0,) * 4, 2.0, 1.0e-3, 1.0e-3, 22.0, 2.414)
    return DesignPoint(node, cont)


def design_from_dict(data: dict, catalog: Catalog = DEFAULT_CATALOG, check_bounds: bool = True) -> DesignPoint:
    """Inverse of :meth:`DesignPoint.to_dict`."""
    nodes = catalog.enumerate_combinations()
    idx = int(data["node"])
    if not 1 <= idx <= len(nodes):
        raise ValueError(f"node id {idx} outside [1, {len(nodes)}]")
    raw = [float(data["continuous"][name]) for name in CONTINUOUS_NAMES]
    cont = validate_continuous(raw, catalog) if check_bounds else ContinuousVector.from_array(raw)
    return DesignPoint(nodes[idx - 1], cont)

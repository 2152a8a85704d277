"""Run configuration: one TOML file with a section per stage."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .catalog import DEFAULT_CATALOG, Catalog
from .metrics import DEFAULT_BETA, ObjectiveConfig
from .navco import ModelConfig
from .netsim import ScenarioSpec, SimConfig
from .optimizer import SwarmConfig

CONFIG_ENV = "TETHEROPT_CONFIG"


@dataclass(frozen=True)
class DatasetConfig:
    p_sg: int = 100
    n_sn: int = 30
    seed: int = 0
    split: float = 0.8

    def __post_init__(self):
        if self.p_sg < 2 or self.n_sn < 2:
            raise ValueError("p_sg and n_sn must be at least 2")
        if not 0.0 < self.split < 1.0:
            raise ValueError("split must be in (0, 1)")


@dataclass
class RunConfig:
    catalog_path: str | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    swarm: SwarmConfig = field(default_factory=SwarmConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    output_dir: str = "runs"

    def catalog(self) -> Catalog:
        return Catalog.load(self.catalog_path) if self.catalog_path else DEFAULT_CATALOG

    def to_dict(self) -> dict:
        sim = asdict(self.sim)
        sim.pop("debris")  # fixed target geometry, not a run setting
        out = {
            "sim": sim,
            "dataset": asdict(self.dataset),
            "model": asdict(self.model),
            "swarm": asdict(self.swarm),
            "objective": asdict(self.objective),
            "output_dir": self.output_dir,
        }
        if self.catalog_path:
            out["catalog_path"] = self.catalog_path
        return _tomlable(out)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {"catalog_path", "sim", "dataset", "model", "swarm", "objective", "output_dir"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        sim = dict(data.get("sim", {}))
        if "scenario" in sim:
            sim["scenario"] = _build(ScenarioSpec, sim["scenario"], "sim.scenario")
        return cls(
            catalog_path=data.get("catalog_path"),
            sim=_build(SimConfig, sim, "sim"),
            dataset=_build(DatasetConfig, data.get("dataset", {}), "dataset"),
            model=_build(ModelConfig, data.get("model", {}), "model"),
            swarm=_build(SwarmConfig, data.get("swarm", {}), "swarm"),
            objective=_build(ObjectiveConfig, data.get("objective", {}), "objective"),
            output_dir=data.get("output_dir", "runs"),
        )

    def save(self, path) -> None:
        Path(path).write_text(tomli_w.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "RunConfig":
        p = Path(path)
        if not p.is_file():
            raise FileNotFoundError(f"config file not found: {p}")
        cfg = cls.from_dict(tomllib.loads(p.read_text()))
        if cfg.catalog_path and not Path(cfg.catalog_path).is_absolute():
            cfg.catalog_path = str((p.parent / cfg.catalog_path).resolve())
        if cfg.catalog_path and not Path(cfg.catalog_path).is_file():
            raise FileNotFoundError(f"catalog file not found: {cfg.catalog_path}")
        return cfg

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_beta(self, beta: float) -> "RunConfig":
        return dataclasses.replace(self, objective=dataclasses.replace(self.objective, beta=float(beta)))


def _tomlable(obj):
    if isinstance(obj, dict):
        return {k: _tomlable(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, (list, tuple)):
        return [_tomlable(v) for v in obj]
    return obj


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown keys in [{section}]: {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    return cls(**kwargs)


def resolve_config(path: str | None) -> RunConfig:
    """Explicit path, else the path in ``$TETHEROPT_CONFIG``, else defaults."""
    path = path or os.environ.get(CONFIG_ENV)
    return RunConfig.load(path) if path else RunConfig()


__all__ = ["CONFIG_ENV", "DEFAULT_BETA", "DatasetConfig", "RunConfig", "resolve_config"]

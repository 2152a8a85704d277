"""Graph view of the combinatorial space, subgraph sampling and training data."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from .catalog import DEFAULT_CATALOG, Catalog, ContinuousVector, DesignPoint, denormalize_continuous
from .metrics import ObjectiveConfig, calibrate_beta
from .objectives import Evaluation, evaluate_many

log = logging.getLogger(__name__)

DATASET_FORMAT = "tetheropt-dataset"
DATASET_VERSION = 1


@dataclass(frozen=True)
class FullGraph:
    """All combinations as nodes of an implicitly complete graph (ids are 1-based)."""

    catalog: Catalog = DEFAULT_CATALOG
    nodes: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.catalog.enumerate_combinations()))
        feats = np.stack([n.feature for n in self.nodes])
        if not np.all(np.isfinite(feats)):
            raise ValueError("node features must be finite")

    @property
    def n_tot(self) -> int:
        return len(self.nodes)

    def node(self, index: int):
        return self.nodes[index - 1]

    def features(self, ids=None) -> np.ndarray:
        feats = np.stack([n.feature for n in self.nodes])
        return feats if ids is None else feats[np.asarray(ids) - 1]


def sample_subgraph(graph: FullGraph, n_sn: int, rng: np.random.Generator, anchor: int | None = None) -> np.ndarray:
    """``n_sn`` distinct node ids, uniformly without replacement, optionally containing ``anchor``."""
    n_tot = graph.n_tot
    if not 2 <= n_sn <= n_tot:
        raise ValueError(f"n_sn must be in [2, {n_tot}], got {n_sn}")
    if anchor is None:
        return np.sort(rng.choice(n_tot, size=n_sn, replace=False) + 1)
    if not 1 <= anchor <= n_tot:
        raise ValueError(f"anchor {anchor} is not a node id")
    others = np.delete(np.arange(1, n_tot + 1), anchor - 1)
    picked = rng.choice(others, size=n_sn - 1, replace=False)
    return np.sort(np.append(picked, anchor))


def edge_differences(f) -> np.ndarray:
    """d_ij = f_i - f_j."""
    f = np.asarray(f, dtype=float)
    return f[:, None] - f[None, :]


@dataclass
class DatasetRecord:
    sg_id: int
    node_ids: np.ndarray
    context: np.ndarray  # raw continuous values, shared by every node
    f_values: np.ndarray
    success: np.ndarray
    outcomes: list | None = None  # raw simulator outcomes, if any
    valid: bool = True

    @property
    def edge_diffs(self) -> np.ndarray:
        return edge_differences(self.f_values)

    def context_vector(self) -> ContinuousVector:
        return ContinuousVector.from_array(self.context)

    def to_json(self) -> dict:
        return {
            "sg_id": self.sg_id,
            "node_ids": self.node_ids.tolist(),
            "context": self.context.tolist(),
            "f_values": [float(v) for v in self.f_values],
            "success": [bool(v) for v in self.success],
            "outcomes": self.outcomes,
            "valid": self.valid,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DatasetRecord":
        return cls(
            int(d["sg_id"]),
            np.asarray(d["node_ids"], dtype=int),
            np.asarray(d["context"], dtype=float),
            np.asarray(d["f_values"], dtype=float),
            np.asarray(d["success"], dtype=bool),
            d.get("outcomes"),
            bool(d.get("valid", True)),
        )


def lhs_contexts(p_sg: int, rng: np.random.Generator, catalog: Catalog = DEFAULT_CATALOG) -> np.ndarray:
    """``p_sg`` Latin-hypercube samples of the continuous box, shape (p_sg, 17)."""
    sampler = qmc.LatinHypercube(d=len(catalog.bounds), seed=rng)
    return denormalize_continuous(sampler.random(p_sg), catalog)


def _assemble(sg_id, ids, context, evals: list[Evaluation]) -> DatasetRecord:
    errors = [e.error for e in evals if e.error is not None]
    rec = DatasetRecord(
        sg_id,
        np.asarray(ids, dtype=int),
        np.asarray(context, dtype=float),
        np.array([e.f for e in evals]),
        np.array([e.feasible for e in evals]),
        [e.outcome for e in evals] if all(e.outcome is not None for e in evals) else None,
        valid=not errors,
    )
    if errors:
        log.warning("subgraph %d marked invalid: %s", sg_id, errors[0])
    return rec


def generate_dataset(
    p_sg: int,
    n_sn: int,
    evaluator,
    rng: np.random.Generator,
    graph: FullGraph | None = None,
    jobs: int = 1,
) -> list[DatasetRecord]:
    """``p_sg`` subgraphs of ``n_sn`` nodes, each sharing one LHS context."""
    graph = graph or FullGraph()
    contexts = lhs_contexts(p_sg, rng, graph.catalog)
    id_sets = [sample_subgraph(graph, n_sn, rng) for _ in range(p_sg)]
    designs = [
        DesignPoint(graph.node(i), ContinuousVector.from_array(ctx)) for ids, ctx in zip(id_sets, contexts) for i in ids
    ]
    evals = evaluate_many(evaluator, designs, jobs)
    return [_assemble(q, id_sets[q], contexts[q], evals[q * n_sn : (q + 1) * n_sn]) for q in range(p_sg)]


def rescore(records: list[DatasetRecord], config: ObjectiveConfig) -> list[DatasetRecord]:
    """Recompute f from stored raw outcomes under ``config``."""
    out = []
    for r in records:
        if r.outcomes is None:
            out.append(r)
            continue
        evals = [Evaluation(0.0, 0.0, False, o).rescored(config) for o in r.outcomes]
        out.append(
            DatasetRecord(
                r.sg_id, r.node_ids, r.context, np.array([e.f for e in evals]), np.array([e.success for e in evals]),
                r.outcomes, r.valid,
            )
        )
    return out


def calibrate_dataset_beta(records: list[DatasetRecord], factor: float = 1.5) -> float:
    m = [o["m_prop"] for r in records if r.outcomes and r.valid for o, ok in zip(r.outcomes, r.success) if ok]
    return calibrate_beta(m, factor)


def split_dataset(records: list, ratio: float = 0.8, rng: np.random.Generator | None = None):
    """Split by whole subgraph into (train, validation)."""
    if len(records) < 2:
        raise ValueError("need at least 2 records to split")
    rng = rng or np.random.default_rng(0)
    order = rng.permutation(len(records))
    n_train = min(max(1, int(round(ratio * len(records)))), len(records) - 1)
    train = [records[i] for i in sorted(order[:n_train])]
    val = [records[i] for i in sorted(order[n_train:])]
    return train, val


def save_dataset(path, records: list[DatasetRecord], header: dict) -> None:
    """Line-delimited JSON: a header line, then one record per line."""
    head = {"format": DATASET_FORMAT, "version": DATASET_VERSION, **header}
    lines = [json.dumps(head, sort_keys=True)]
    lines += [json.dumps(r.to_json(), sort_keys=True) for r in records]
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path, expect: dict | None = None) -> tuple[dict, list[DatasetRecord]]:
    """Read a dataset file; ``expect`` keys (e.g. catalog hash) must match the header."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("format") != DATASET_FORMAT or header.get("version") != DATASET_VERSION:
        raise ValueError(f"{path}: unsupported dataset format {header.get('format')} v{header.get('version')}")
    for key, value in (expect or {}).items():
        if header.get(key) != value:
            raise ValueError(f"{path}: {key} mismatch (file {header.get(key)!r}, expected {value!r})")
    return header, [DatasetRecord.from_json(json.loads(x)) for x in lines[1:] if x.strip()]

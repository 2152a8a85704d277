import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tetheropt.catalog import DEFAULT_CATALOG, normalize_continuous
from tetheropt.graphspace import (
    DatasetRecord,
    FullGraph,
    edge_differences,
    generate_dataset,
    lhs_contexts,
    load_dataset,
    rescore,
    sample_subgraph,
    save_dataset,
    split_dataset,
)
from tetheropt.metrics import ObjectiveConfig
from tetheropt.objectives import Evaluation, SeparableBenchmark

GRAPH = FullGraph()


@given(st.integers(2, 180), st.integers(0, 2**31 - 1), st.one_of(st.none(), st.integers(1, 180)))
def test_subgraph_sampling(n_sn, seed, anchor):
    ids = sample_subgraph(GRAPH, n_sn, np.random.default_rng(seed), anchor)
    assert len(ids) == n_sn == len(set(ids.tolist()))
    assert ids.min() >= 1 and ids.max() <= 180
    assert np.all(np.diff(ids) > 0)
    if anchor is not None:
        assert anchor in ids


def test_subgraph_edge_cases():
    assert np.array_equal(sample_subgraph(GRAPH, 180, np.random.default_rng(0)), np.arange(1, 181))
    for bad in (1, 181):
        with pytest.raises(ValueError):
            sample_subgraph(GRAPH, bad, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_subgraph(GRAPH, 5, np.random.default_rng(0), anchor=0)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=12))
def test_ground_truth_edges_are_cycle_consistent(f):
    d = edge_differences(f)
    assert np.array_equal(d, -d.T)
    assert np.all(np.diag(d) == 0)
    for i, j, k in itertools.combinations(range(len(f)), 3):
        assert abs(d[i, j] + d[j, k] + d[k, i]) <= 1e-12 * max(1.0, np.abs(f).max())


def test_lhs_has_one_sample_per_stratum():
    p = 100
    u = normalize_continuous(lhs_contexts(p, np.random.default_rng(4)))
    assert u.shape == (p, 17)
    for col in u.T:
        assert sorted(np.floor(col * p).astype(int)) == list(range(p))


def test_generate_dataset_and_round_trip(tmp_path):
    bench = SeparableBenchmark(seed=2)
    recs = generate_dataset(10, 6, bench, np.random.default_rng(1))
    assert len(recs) == 10 and all(r.valid for r in recs)
    for r in recs:
        assert len(r.node_ids) == 6
        expected = [bench.value(i, normalize_continuous(r.context)) for i in r.node_ids]
        assert np.allclose(r.f_values, expected)
    header = {"catalog": DEFAULT_CATALOG.digest(), "config_hash": "abc"}
    path = tmp_path / "ds.jsonl"
    save_dataset(path, recs, header)
    head, back = load_dataset(path, expect={"catalog": DEFAULT_CATALOG.digest()})
    assert head["config_hash"] == "abc"
    for a, b in zip(recs, back):
        assert np.array_equal(a.node_ids, b.node_ids)
        assert np.array_equal(a.context, b.context)
        assert np.array_equal(a.f_values, b.f_values)
    with pytest.raises(ValueError, match="catalog mismatch"):
        load_dataset(path, expect={"catalog": "other"})


def test_same_seed_same_dataset():
    bench = SeparableBenchmark(seed=2)
    a = generate_dataset(5, 4, bench, np.random.default_rng(9))
    b = generate_dataset(5, 4, bench, np.random.default_rng(9))
    assert all(np.array_equal(x.f_values, y.f_values) and np.array_equal(x.node_ids, y.node_ids) for x, y in zip(a, b))


def test_failed_evaluations_invalidate_the_record():
    def flaky(design):
        if design.comb.index % 7 == 0:
            raise RuntimeError("solver blew up")
        return Evaluation(float(design.comb.index))

    recs = generate_dataset(20, 10, flaky, np.random.default_rng(0))
    for r in recs:
        assert r.valid == (not np.any(r.node_ids % 7 == 0))


def test_split_dataset():
    recs = [DatasetRecord(i, np.arange(1, 4), np.zeros(17), np.zeros(3), np.ones(3, bool)) for i in range(100)]
    tr, va = split_dataset(recs, 0.8, np.random.default_rng(0))
    assert (len(tr), len(va)) == (80, 20)
    assert not {r.sg_id for r in tr} & {r.sg_id for r in va}
    tr2, va2 = split_dataset(recs, 0.8, np.random.default_rng(0))
    assert [r.sg_id for r in tr] == [r.sg_id for r in tr2]


def test_rescore_uses_raw_outcomes():
    outcomes = [
        {"cqi_final": 1.0, "n_locked": 12, "m_prop": 0.2, "tension_failed": False},
        {"cqi_final": 3.0, "n_locked": 12, "m_prop": 0.1, "tension_failed": False},
    ]
    rec = DatasetRecord(0, np.array([1, 2]), np.zeros(17), np.zeros(2), np.zeros(2, bool), outcomes)
    (out,) = rescore([rec], ObjectiveConfig(beta=0.5))
    assert out.f_values[0] == 0.2
    assert out.f_values[1] == pytest.approx(np.log(1.25) + 0.5)
    assert out.success.tolist() == [True, False]

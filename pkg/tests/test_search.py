import json
import math

import numpy as np
import pytest

from gridcluster.modl import COL, ROW, CoclusterModel, CoocStats, merge_delta_matrix
from gridcluster.search import (THREADS_ENV, SearchConfig, bell_number, exhaustive_search,
                                optimize, set_partitions)

from conftest import independence_table, random_table


def planted_table(rng, V, W, N):
    """Two diagonal blocks with light noise; optimum is usually 2x2 or 1x1."""
    while True:
        ra, ca = rng.integers(0, 2, V), rng.integers(0, 2, W)
        p = np.where(ra[:, None] == ca[None, :], 1.0, 0.08)
        m = rng.multinomial(N, (p / p.sum()).ravel()).reshape(V, W)
        if (m.sum(axis=0) > 0).all() and (m.sum(axis=1) > 0).all():
            return m


def oracle_instances(count=50):
    out = []
    for s in range(count):
        rng = np.random.default_rng(7000 + s)
        V, W = (int(x) for x in rng.integers(2, 7, size=2))
        N = int(rng.integers(max(V, W), 41))
        m = random_table(rng, V, W, N) if s % 2 else planted_table(rng, V, W, N)
        out.append(CoocStats.from_dense(m))
    return out


def test_set_partitions_counts():
    for n in range(0, 8):
        assert len(set_partitions(n)) == bell_number(n)
    assert set_partitions(3).tolist() == [[0, 0, 0], [0, 0, 1], [0, 1, 0], [0, 1, 1], [0, 1, 2]]
    assert [bell_number(n) for n in range(7)] == [1, 1, 2, 5, 15, 52, 203]


def test_exhaustive_is_minimal_on_small_case():
    m = np.array([[5, 0, 1], [4, 1, 0], [0, 6, 5]])
    stats = CoocStats.from_dense(m)
    best = exhaustive_search(stats)
    for r in set_partitions(3):
        for c in set_partitions(3):
            assert CoclusterModel(stats, r, c).cost >= best.cost - 1e-9


def test_exhaustive_refuses_large():
    stats = CoocStats.from_dense(np.ones((12, 12), dtype=int))
    with pytest.raises(ValueError):
        exhaustive_search(stats)


def test_optimizer_matches_oracle():
    hits, worst = 0, 0.0
    for stats in oracle_instances():
        opt = exhaustive_search(stats)
        found = optimize(stats, SearchConfig(seed=0, restarts=16, budget_seconds=30)).best_model
        gap = found.cost - opt.cost
        assert gap >= -1e-9 * abs(opt.cost)
        worst = max(worst, gap)
        hits += gap <= 1e-9 * abs(opt.cost)
    assert hits >= 45
    assert worst <= 0.5


@pytest.mark.parametrize("seed", range(20))
def test_independence_gives_null_grid(seed):
    rng = np.random.default_rng(seed)
    stats = CoocStats.from_dense(independence_table(rng, 20, 20, 400))
    model = optimize(stats, SearchConfig(seed=seed, restarts=4, budget_seconds=30)).best_model
    assert (model.I, model.J) == (1, 1)


@pytest.mark.parametrize("seed", range(5))
def test_independence_random_margins(seed):
    """Exactly factorizing tables with unequal margins also collapse to 1x1."""
    rng = np.random.default_rng(100 + seed)
    m = np.outer(rng.integers(1, 4, size=12), rng.integers(1, 4, size=10))
    stats = CoocStats.from_dense(m)
    model = optimize(stats, SearchConfig(seed=seed, restarts=4, budget_seconds=30)).best_model
    assert (model.I, model.J) == (1, 1)


def test_local_optimum_has_no_improving_merge(iris_stats):
    model = optimize(iris_stats, SearchConfig(seed=1, restarts=2, budget_seconds=30)).best_model
    model.check()
    for dim in (ROW, COL):
        K = model.n_groups(dim)
        if K > 1:
            mat = merge_delta_matrix(model, dim)
            assert mat[np.triu_indices(K, 1)].min() >= -1e-9 * abs(model.cost)


def test_deterministic_for_fixed_seed(iris_stats):
    cfg = SearchConfig(seed=3, restarts=3, budget_seconds=60)
    a = optimize(iris_stats, cfg).best_model
    b = optimize(iris_stats, cfg).best_model
    assert a.cost == b.cost
    np.testing.assert_array_equal(a.row_assign, b.row_assign)
    np.testing.assert_array_equal(a.col_assign, b.col_assign)


def test_threads_do_not_change_result(iris_stats, monkeypatch):
    cfg = SearchConfig(seed=2, restarts=4, budget_seconds=60)
    serial = optimize(iris_stats, cfg).best_model
    monkeypatch.setenv(THREADS_ENV, "4")
    parallel = optimize(iris_stats, cfg).best_model
    assert serial.cost == parallel.cost
    np.testing.assert_array_equal(serial.row_assign, parallel.row_assign)


def test_trace_monotone_and_checkpoint(tmp_path, iris_stats):
    ckpt = tmp_path / "ckpt.json"
    cfg = SearchConfig(seed=0, restarts=2, budget_seconds=30, checkpoint=ckpt,
                       report_interval_seconds=0.0)
    result = optimize(iris_stats, cfg)
    costs = [p.cost for p in result.trace]
    assert all(b < a for a, b in zip(costs, costs[1:]))
    assert math.isclose(costs[-1], result.best_model.cost)
    saved = json.loads(ckpt.read_text())
    assert saved["cost"] == result.best_model.cost
    result.write_trace(tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "elapsed_s,cost,I,J" and len(lines) == len(result.trace) + 1


def test_never_worse_than_null(iris_stats):
    from gridcluster.modl import null_model
    result = optimize(iris_stats, SearchConfig(seed=0, budget_seconds=0.001))
    assert result.best_model.cost <= null_model(iris_stats).cost


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(budget_seconds=0)
    with pytest.raises(ValueError):
        SearchConfig(restarts=0)
    with pytest.raises(ValueError):
        SearchConfig(seed=-1)


def test_single_cell_table():
    stats = CoocStats.from_dense([[4]])
    model = optimize(stats).best_model
    assert (model.I, model.J) == (1, 1)

import math
import time
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridcluster.dataset import DataError
from gridcluster.modl import (COL, ROW, CoclusterModel, CoocStats, MergeScanner, criterion,
                              finest_model, log_bell_partial, merge_delta_matrix, null_model)

from conftest import D0, random_table


# ---------------------------------------------------------------------------
# independent oracles, exact integer arithmetic


def partitions(items):
    """Generate every set partition of a list (recursive, independent of the package)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for p in partitions(rest):
        for k in range(len(p)):
            yield p[:k] + [[first] + p[k]] + p[k + 1:]
        yield [[first]] + p


def bell_by_enumeration(V):
    counts = Counter(len(p) for p in partitions(list(range(V))))
    return [sum(counts[g] for g in range(1, I + 1)) for I in range(1, V + 1)]


def exact_cost(matrix, row_assign, col_assign):
    """ln of the product form of the criterion, computed with Python integers."""
    n = [list(map(int, r)) for r in matrix]
    V, W = len(n), len(n[0])
    I, J = max(row_assign) + 1, max(col_assign) + 1

    def bell(m, k):
        return bell_by_enumeration(m)[k - 1] if m <= 10 else None

    def stirling_sum(m, k):
        # sum_{g<=k} S(m, g) through the standard recurrence on integers
        S = [[0] * (k + 1) for _ in range(m + 1)]
        S[0][0] = 1
        for a in range(1, m + 1):
            for g in range(1, k + 1):
                S[a][g] = g * S[a - 1][g] + S[a - 1][g - 1]
        return sum(S[m][1:])

    N = sum(map(sum, n))
    Nij = [[0] * J for _ in range(I)]
    for v in range(V):
        for w in range(W):
            Nij[row_assign[v]][col_assign[w]] += n[v][w]
    Ni = [sum(r) for r in Nij]
    Nj = [sum(Nij[i][j] for i in range(I)) for j in range(J)]
    mi = Counter(row_assign)
    mj = Counter(col_assign)
    nv = [sum(r) for r in n]
    nw = [sum(n[v][w] for v in range(V)) for w in range(W)]
    G = I * J

    def group(tot, size):
        return 1 if tot == 0 else math.comb(tot + size - 1, tot - 1)

    prior = V * W * stirling_sum(V, I) * stirling_sum(W, J) * math.comb(N + G - 1, G - 1)
    for i in range(I):
        prior *= group(Ni[i], mi[i])
    for j in range(J):
        prior *= group(Nj[j], mj[j])
    num = math.factorial(N)
    for x in Ni + Nj:
        num *= math.factorial(x)
    den = 1
    for row in Nij:
        for x in row:
            den *= math.factorial(x)
    for x in nv + nw:
        den *= math.factorial(x)
    from fractions import Fraction
    return math.log(Fraction(prior * num, den))


# ---------------------------------------------------------------------------


def test_d0_null_and_finest(d0_stats):
    null = null_model(d0_stats)
    finest = finest_model(d0_stats)
    assert math.isclose(null.cost, math.log(9600), rel_tol=1e-9)
    assert math.isclose(finest.cost, math.log(80640), rel_tol=1e-9)
    assert math.isclose(null.cost, exact_cost(D0, [0, 0], [0, 0]), rel_tol=1e-12)
    assert math.isclose(finest.cost, exact_cost(D0, [0, 1], [0, 1]), rel_tol=1e-12)


@pytest.mark.parametrize("V", range(1, 11))
def test_log_bell_matches_enumeration(V):
    expected = bell_by_enumeration(V)
    for I in range(1, V + 1):
        got = log_bell_partial(V, I)
        assert math.isclose(got, math.log(expected[I - 1]), rel_tol=1e-10, abs_tol=1e-12)


def test_log_bell_large_is_fast_and_finite():
    t0 = time.perf_counter()
    value = log_bell_partial(50000, 50)
    assert time.perf_counter() - t0 < 2.0
    assert np.isfinite(value)
    # B(V, I) <= I^V, and S(V, I) >= I^V / I! for the dominant term
    assert value <= 50000 * math.log(50) + 1e-6
    assert value >= 50000 * math.log(50) - math.lgamma(51) - 1e-6


def test_log_bell_monotone_and_domain():
    vals = [log_bell_partial(30, I) for I in range(1, 31)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        log_bell_partial(3, 4)
    with pytest.raises(ValueError):
        log_bell_partial(3, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_criterion_matches_exact_oracle(seed):
    rng = np.random.default_rng(seed)
    V, W = rng.integers(1, 6, size=2)
    m = random_table(rng, V, W, int(rng.integers(max(V, W), 25)))
    ra = rng.integers(0, V, size=V)
    ca = rng.integers(0, W, size=W)
    stats = CoocStats.from_dense(m)
    model = CoclusterModel(stats, ra, ca)
    # dense relabel for the oracle
    r = list(np.unique(ra, return_inverse=True)[1])
    c = list(np.unique(ca, return_inverse=True)[1])
    assert math.isclose(model.cost, exact_cost(m, r, c), rel_tol=1e-9)
    assert math.isclose(criterion(model), model.cost, rel_tol=1e-12)


def test_relabel_and_permutation_invariance():
    rng = np.random.default_rng(3)
    m = random_table(rng, 6, 5, 40)
    stats = CoocStats.from_dense(m)
    ra, ca = np.array([0, 1, 0, 2, 1, 2]), np.array([0, 0, 1, 1, 0])
    base = CoclusterModel(stats, ra, ca).cost
    relabel = CoclusterModel(stats, (ra + 1) % 3, 1 - ca).cost
    assert math.isclose(base, relabel, rel_tol=1e-12)
    pr, pc = rng.permutation(6), rng.permutation(5)
    permuted = CoclusterModel(CoocStats.from_dense(m[pr][:, pc]), ra[pr], ca[pc]).cost
    assert math.isclose(base, permuted, rel_tol=1e-12)


def test_random_deltas_match_recompute():
    """1,000 random moves and merges; each delta against a full recomputation."""
    rng = np.random.default_rng(20240501)
    checked = 0
    t0 = time.perf_counter()
    while checked < 1000:
        V, W = rng.integers(2, 9, size=2)
        m = random_table(rng, V, W, int(rng.integers(V + W, 80)))
        stats = CoocStats.from_dense(m)
        model = CoclusterModel(stats, rng.integers(0, V, size=V), rng.integers(0, W, size=W))
        for _ in range(10):
            dim = ROW if rng.random() < 0.5 else COL
            K = model.n_groups(dim)
            before = criterion(model)
            movable = np.flatnonzero(model.sizes(dim)[model.assign(dim)] > 1)
            if rng.random() < 0.5 and K > 1 and len(movable):
                v = int(rng.choice(movable))
                target = int(rng.choice([g for g in range(K) if g != model.assign(dim)[v]]))
                delta = model.delta_move(dim, v, target)
                model.move(dim, v, target)
            elif K > 1:
                a, b = sorted(rng.choice(K, size=2, replace=False).tolist())
                delta = model.delta_merge(dim, a, b)
                model.merge(dim, a, b)
            else:
                continue
            after = criterion(model)
            assert math.isclose(after - before, delta, rel_tol=1e-9, abs_tol=1e-9 * abs(after))
            assert math.isclose(model.cost, after, rel_tol=1e-9)
            checked += 1
    model.check()
    assert time.perf_counter() - t0 < 5.0


def test_move_errors(d0_stats):
    model = finest_model(d0_stats)
    with pytest.raises(DataError, match="empty"):
        model.delta_move(ROW, 0, 1)
    with pytest.raises(DataError):
        model.delta_move(ROW, 0, 0)
    with pytest.raises(DataError):
        model.delta_move(ROW, 5, 0)


def test_merge_delta_matrix_matches_pairwise():
    rng = np.random.default_rng(11)
    stats = CoocStats.from_dense(random_table(rng, 7, 6, 60))
    model = finest_model(stats)
    for dim in (ROW, COL):
        mat = merge_delta_matrix(model, dim)
        K = model.n_groups(dim)
        for a in range(K):
            for b in range(a + 1, K):
                assert math.isclose(mat[a, b], model.delta_merge(dim, a, b),
                                    rel_tol=1e-9, abs_tol=1e-9)


def test_merge_scanner_tracks_merges():
    rng = np.random.default_rng(5)
    stats = CoocStats.from_dense(random_table(rng, 8, 5, 70))
    model = finest_model(stats)
    scanner = MergeScanner(model, ROW)
    while model.I > 1:
        delta, a, b = scanner.best()
        mat = merge_delta_matrix(model, ROW)
        iu = np.triu_indices(model.I, 1)
        assert math.isclose(delta, mat[iu].min(), rel_tol=1e-9, abs_tol=1e-9)
        before = model.recompute_cost()
        scanner.apply(a, b, delta)
        assert math.isclose(model.recompute_cost() - before, delta, rel_tol=1e-9, abs_tol=1e-9)
    model.check()


def test_degenerate_single_value():
    stats = CoocStats.from_dense([[3, 1, 2]])
    model = null_model(stats)
    assert model.I == 1
    assert np.isfinite(model.cost)
    finest = finest_model(stats)
    assert finest.I == 1 and finest.J == 3


def test_dict_roundtrip(iris_stats):
    rng = np.random.default_rng(0)
    model = CoclusterModel(iris_stats, rng.integers(0, 3, size=iris_stats.V),
                           rng.integers(0, 4, size=iris_stats.W))
    back = CoclusterModel.from_dict(model.to_dict(), iris_stats)
    np.testing.assert_array_equal(back.row_assign, model.row_assign)
    assert back.cost == model.cost

"""Grid models of two categorical variables and their MAP cost.

A model partitions the V values of the first variable into I groups and the
W values of the second into J groups.  Its cost (natural log, lower is
better) is

    ln V + ln W + ln B(V,I) + ln B(W,J) + ln C(N+G-1, G-1)
    + sum_i ln C(N_i. + m_i. - 1, N_i. - 1) + sum_j ln C(N_.j + m_.j - 1, N_.j - 1)
    + ln N! - sum_ij ln N_ij! + sum_i ln N_i.! + sum_j ln N_.j!
    - sum_v ln n_v.! - sum_w ln n_.w!

where B(V,I) counts partitions of V elements into at most I nonempty groups
and G = I*J.  A group holding no instances contributes 0 to its
``ln C(N + m - 1, N - 1)`` term.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln

from .binarize import PairTable
from .dataset import DataError

ROW = "row"
COL = "col"
DIMENSIONS = (ROW, COL)


# ---------------------------------------------------------------------------
# partial Bell numbers

_bell_lock = threading.Lock()
_bell_cache: dict[int, np.ndarray] = {}


def _log_bell_row(V: int, I_max: int) -> np.ndarray:
    """ln B(V, I) for I = 1..I_max (index I-1)."""
    log_k = np.log(np.arange(1, I_max + 1, dtype=float))
    s = np.full(I_max + 1, -np.inf)
    s[0] = 0.0
    for _ in range(V):
        nxt = np.empty_like(s)
        nxt[0] = -np.inf
        np.logaddexp(log_k + s[1:], s[:-1], out=nxt[1:])
        s = nxt
    return np.logaddexp.accumulate(s[1:])


def log_bell_partial(V: int, I: int) -> float:
    """ln of the number of partitions of V elements into at most I nonempty groups."""
    V, I = int(V), int(I)
    if not 1 <= I <= V:
        raise ValueError(f"need 1 <= I <= V, got V={V}, I={I}")
    if I == 1:
        return 0.0
    with _bell_lock:
        row = _bell_cache.get(V)
        if row is None or len(row) < I:
            size = min(V, max(I, 2 * (len(row) if row is not None else 0), 64))
            row = _log_bell_row(V, size)
            _bell_cache[V] = row
    return float(row[I - 1])


# ---------------------------------------------------------------------------
# sufficient statistics


def _ln_choose(n, k):
    return gammaln(np.asarray(n, dtype=float) + 1) - gammaln(np.asarray(k, dtype=float) + 1) \
        - gammaln(np.asarray(n, dtype=float) - np.asarray(k, dtype=float) + 1)


def _ln_fact(n):
    return gammaln(np.asarray(n, dtype=float) + 1)


def _group_term(total, size):
    """ln C(total + size - 1, total - 1), taken as 0 for an empty group."""
    total = np.asarray(total, dtype=float)
    size = np.asarray(size, dtype=float)
    safe = np.maximum(total, 1.0)
    out = gammaln(safe + size) - gammaln(safe) - gammaln(size + 1)
    return np.where(total > 0, out, 0.0)


@dataclass
class CoocStats:
    """Contingency counts n_vw between the values of two categorical variables."""

    counts: sp.csr_matrix
    row_labels: list[str]
    col_labels: list[str]
    _lf: np.ndarray | None = field(default=None, repr=False)
    _counts_t: sp.csr_matrix | None = field(default=None, repr=False)

    def __post_init__(self):
        self.counts = sp.csr_matrix(self.counts, dtype=np.int64)
        self.counts.sum_duplicates()
        self.counts.sort_indices()
        if self.counts.nnz and self.counts.data.min() < 0:
            raise DataError("negative counts")
        if self.counts.shape != (len(self.row_labels), len(self.col_labels)):
            raise DataError("label lists do not match the count matrix")
        self.row_totals = np.asarray(self.counts.sum(axis=1)).ravel().astype(np.int64)
        self.col_totals = np.asarray(self.counts.sum(axis=0)).ravel().astype(np.int64)

    @property
    def V(self) -> int:
        return self.counts.shape[0]

    @property
    def W(self) -> int:
        return self.counts.shape[1]

    @property
    def N(self) -> int:
        return int(self.row_totals.sum())

    @property
    def counts_t(self) -> sp.csr_matrix:
        if self._counts_t is None:
            t = self.counts.T.tocsr()
            t.sort_indices()
            self._counts_t = t
        return self._counts_t

    @property
    def lf(self) -> np.ndarray:
        """Table of ln n! for n up to 2N + max(V, W) + 1."""
        if self._lf is None:
            self._lf = gammaln(np.arange(2 * self.N + max(self.V, self.W) + 2, dtype=float) + 1)
        return self._lf

    def side(self, dim: str) -> sp.csr_matrix:
        return self.counts if dim == ROW else self.counts_t

    def n_values(self, dim: str) -> int:
        return self.V if dim == ROW else self.W

    @classmethod
    def from_dense(cls, matrix, row_labels=None, col_labels=None) -> "CoocStats":
        m = np.asarray(matrix, dtype=np.int64)
        if m.ndim != 2:
            raise DataError("count matrix must be 2-d")
        rl = list(row_labels) if row_labels is not None else [f"v{i + 1}" for i in range(m.shape[0])]
        cl = list(col_labels) if col_labels is not None else [f"w{j + 1}" for j in range(m.shape[1])]
        return cls(sp.csr_matrix(m), rl, cl)

    @property
    def value_term(self) -> float:
        """ln N! - sum_v ln n_v.! - sum_w ln n_.w!  (independent of the model)."""
        return float(_ln_fact(self.N) - _ln_fact(self.row_totals).sum()
                     - _ln_fact(self.col_totals).sum())


def build_stats(pairs: PairTable) -> CoocStats:
    if pairs.N == 0:
        raise DataError("empty pair table")
    counts = sp.coo_matrix((np.ones(pairs.N, dtype=np.int64), (pairs.rows, pairs.cols)),
                           shape=(pairs.V, pairs.W)).tocsr()
    return CoocStats(counts, list(pairs.instance_ids), list(pairs.part_labels))


# ---------------------------------------------------------------------------
# cost


def _cell_counts(stats: CoocStats, row_assign, col_assign, I: int, J: int) -> np.ndarray:
    coo = stats.counts.tocoo()
    flat = row_assign[coo.row] * J + col_assign[coo.col]
    return np.bincount(flat, weights=coo.data, minlength=I * J).astype(np.int64).reshape(I, J)


def _dense_labels(assign, n_values: int) -> np.ndarray:
    a = np.asarray(assign, dtype=np.int64)
    if a.shape != (n_values,):
        raise DataError(f"assignment has {a.size} entries, expected {n_values}")
    if n_values and a.min() < 0:
        raise DataError("negative group index")
    _, dense = np.unique(a, return_inverse=True)
    return dense.astype(np.int64)


def cost_from_counts(stats: CoocStats, cells, row_sizes, col_sizes) -> float:
    cells = np.asarray(cells)
    I, J = cells.shape
    G = I * J
    N = stats.N
    row_tot = cells.sum(axis=1)
    col_tot = cells.sum(axis=0)
    c = math.log(stats.V) + math.log(stats.W)
    c += log_bell_partial(stats.V, I) + log_bell_partial(stats.W, J)
    c += float(_ln_choose(N + G - 1, G - 1))
    c += float(_group_term(row_tot, row_sizes).sum()) + float(_group_term(col_tot, col_sizes).sum())
    c += -float(_ln_fact(cells).sum()) + float(_ln_fact(row_tot).sum()) \
        + float(_ln_fact(col_tot).sum())
    c += stats.value_term
    return c


class CoclusterModel:
    """Assignment of row values to I groups and column values to J groups."""

    def __init__(self, stats: CoocStats, row_assign, col_assign):
        self.stats = stats
        self.row_assign = _dense_labels(row_assign, stats.V)
        self.col_assign = _dense_labels(col_assign, stats.W)
        I = int(self.row_assign.max()) + 1
        J = int(self.col_assign.max()) + 1
        self.cells = _cell_counts(stats, self.row_assign, self.col_assign, I, J)
        self.row_sizes = np.bincount(self.row_assign, minlength=I).astype(np.int64)
        self.col_sizes = np.bincount(self.col_assign, minlength=J).astype(np.int64)
        self.cost = cost_from_counts(stats, self.cells, self.row_sizes, self.col_sizes)

    # shape ---------------------------------------------------------------
    @property
    def I(self) -> int:
        return self.cells.shape[0]

    @property
    def J(self) -> int:
        return self.cells.shape[1]

    @property
    def G(self) -> int:
        return self.I * self.J

    @property
    def row_totals(self) -> np.ndarray:
        return self.cells.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.cells.sum(axis=0)

    def assign(self, dim: str) -> np.ndarray:
        return self.row_assign if dim == ROW else self.col_assign

    def sizes(self, dim: str) -> np.ndarray:
        return self.row_sizes if dim == ROW else self.col_sizes

    def n_groups(self, dim: str) -> int:
        return self.I if dim == ROW else self.J

    def oriented_cells(self, dim: str) -> np.ndarray:
        """Cells with the groups of ``dim`` along axis 0 (a view)."""
        return self.cells if dim == ROW else self.cells.T

    def copy(self) -> "CoclusterModel":
        new = object.__new__(CoclusterModel)
        new.stats = self.stats
        new.row_assign = self.row_assign.copy()
        new.col_assign = self.col_assign.copy()
        new.cells = self.cells.copy()
        new.row_sizes = self.row_sizes.copy()
        new.col_sizes = self.col_sizes.copy()
        new.cost = self.cost
        return new

    def recompute_cost(self) -> float:
        return cost_from_counts(self.stats, self.cells, self.row_sizes, self.col_sizes)

    def members(self, dim: str, group: int) -> list[str]:
        labels = self.stats.row_labels if dim == ROW else self.stats.col_labels
        return [labels[v] for v in np.flatnonzero(self.assign(dim) == group)]

    def check(self) -> None:
        """Assert the count-consistency invariants."""
        s = self.stats
        assert self.row_sizes.min() >= 1 and self.col_sizes.min() >= 1
        assert self.row_sizes.sum() == s.V and self.col_sizes.sum() == s.W
        assert np.array_equal(np.bincount(self.row_assign, minlength=self.I), self.row_sizes)
        assert np.array_equal(np.bincount(self.col_assign, minlength=self.J), self.col_sizes)
        assert np.array_equal(self.cells, _cell_counts(s, self.row_assign, self.col_assign,
                                                       self.I, self.J))
        assert self.cells.sum() == s.N
        full = self.recompute_cost()
        assert abs(full - self.cost) <= 1e-9 * max(1.0, abs(full)), (full, self.cost)

    # profiles ------------------------------------------------------------
    def profile(self, dim: str, value: int) -> np.ndarray:
        """Counts of one value spread over the opposite dimension's groups."""
        m = self.stats.side(dim)
        other = self.col_assign if dim == ROW else self.row_assign
        lo, hi = m.indptr[value], m.indptr[value + 1]
        return np.bincount(other[m.indices[lo:hi]], weights=m.data[lo:hi],
                           minlength=self.n_groups(COL if dim == ROW else ROW)).astype(np.int64)

    # moves ---------------------------------------------------------------
    def delta_move(self, dim: str, value: int, target: int) -> float:
        assign = self.assign(dim)
        if not 0 <= value < len(assign):
            raise DataError(f"unknown {dim} value {value}")
        K = self.n_groups(dim)
        if not 0 <= target < K:
            raise DataError(f"unknown {dim} group {target}")
        a = int(assign[value])
        if a == target:
            raise DataError("value already in target group")
        sizes = self.sizes(dim)
        if sizes[a] <= 1:
            raise DataError("move would empty its source group; use a merge instead")
        cells = self.oriented_cells(dim)
        tot = cells.sum(axis=1)
        p = self.profile(dim, value)
        t = int(p.sum())
        b = target
        d = _ln_fact(cells[a]).sum() - _ln_fact(cells[a] - p).sum()
        d += _ln_fact(cells[b]).sum() - _ln_fact(cells[b] + p).sum()
        d += _ln_fact(tot[a] - t) - _ln_fact(tot[a]) + _ln_fact(tot[b] + t) - _ln_fact(tot[b])
        d += _group_term(tot[a] - t, sizes[a] - 1) - _group_term(tot[a], sizes[a])
        d += _group_term(tot[b] + t, sizes[b] + 1) - _group_term(tot[b], sizes[b])
        return float(d)

    def move(self, dim: str, value: int, target: int) -> float:
        delta = self.delta_move(dim, value, target)
        p = self.profile(dim, value)
        assign = self.assign(dim)
        a = assign[value]
        cells = self.oriented_cells(dim)
        cells[a] -= p
        cells[target] += p
        sizes = self.sizes(dim)
        sizes[a] -= 1
        sizes[target] += 1
        assign[value] = target
        self.cost += delta
        return delta

    # merges --------------------------------------------------------------
    def _global_merge_term(self, dim: str) -> float:
        K = self.n_groups(dim)
        K_other = self.n_groups(COL if dim == ROW else ROW)
        n = self.stats.n_values(dim)
        N = self.stats.N
        G, G2 = K * K_other, (K - 1) * K_other
        return (log_bell_partial(n, K - 1) - log_bell_partial(n, K)
                + float(_ln_choose(N + G2 - 1, G2 - 1) - _ln_choose(N + G - 1, G - 1)))

    def delta_merge(self, dim: str, a: int, b: int) -> float:
        K = self.n_groups(dim)
        if a == b:
            raise DataError("cannot merge a group with itself")
        if not (0 <= a < K and 0 <= b < K):
            raise DataError(f"unknown {dim} group")
        cells = self.oriented_cells(dim)
        sizes = self.sizes(dim)
        ta, tb = cells[a].sum(), cells[b].sum()
        d = _ln_fact(cells[a]).sum() + _ln_fact(cells[b]).sum() - _ln_fact(cells[a] + cells[b]).sum()
        d += _ln_fact(ta + tb) - _ln_fact(ta) - _ln_fact(tb)
        d += _group_term(ta + tb, sizes[a] + sizes[b]) - _group_term(ta, sizes[a]) \
            - _group_term(tb, sizes[b])
        return float(d) + self._global_merge_term(dim)

    def merge(self, dim: str, a: int, b: int, delta: float | None = None) -> float:
        """Merge group ``max(a,b)`` into ``min(a,b)``; higher group ids shift down by one."""
        if delta is None:
            delta = self.delta_merge(dim, a, b)
        lo, hi = min(a, b), max(a, b)
        assign = self.assign(dim)
        assign[assign == hi] = lo
        assign[assign > hi] -= 1
        sizes = self.sizes(dim)
        sizes[lo] += sizes[hi]
        sizes = np.delete(sizes, hi)
        if dim == ROW:
            self.cells[lo] += self.cells[hi]
            self.cells = np.delete(self.cells, hi, axis=0)
            self.row_sizes = sizes
        else:
            self.cells[:, lo] += self.cells[:, hi]
            self.cells = np.delete(self.cells, hi, axis=1)
            self.col_sizes = sizes
        self.cost += delta
        return delta

    # serialization ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "I": self.I,
            "J": self.J,
            "cost": self.cost,
            "rows": {"labels": list(self.stats.row_labels), "groups": self.row_assign.tolist()},
            "cols": {"labels": list(self.stats.col_labels), "groups": self.col_assign.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict, stats: CoocStats) -> "CoclusterModel":
        try:
            rows = dict(zip(d["rows"]["labels"], d["rows"]["groups"]))
            cols = dict(zip(d["cols"]["labels"], d["cols"]["groups"]))
            return cls(stats, [rows[v] for v in stats.row_labels],
                       [cols[w] for w in stats.col_labels])
        except KeyError as exc:
            raise DataError(f"model does not match the pair table: {exc}") from exc


def criterion(model: CoclusterModel, stats: CoocStats | None = None) -> float:
    """Cost recomputed from scratch from the assignments."""
    stats = model.stats if stats is None else stats
    if len(model.row_assign) != stats.V or len(model.col_assign) != stats.W:
        raise DataError("model does not cover the values of these statistics")
    ra = _dense_labels(model.row_assign, stats.V)
    ca = _dense_labels(model.col_assign, stats.W)
    I, J = int(ra.max()) + 1, int(ca.max()) + 1
    cells = _cell_counts(stats, ra, ca, I, J)
    return cost_from_counts(stats, cells, np.bincount(ra, minlength=I), np.bincount(ca, minlength=J))


def null_model(stats: CoocStats) -> CoclusterModel:
    return CoclusterModel(stats, np.zeros(stats.V, dtype=np.int64), np.zeros(stats.W, dtype=np.int64))


def finest_model(stats: CoocStats) -> CoclusterModel:
    return CoclusterModel(stats, np.arange(stats.V), np.arange(stats.W))


def merge_delta_matrix(model: CoclusterModel, dim: str) -> np.ndarray:
    """Cost change of merging each pair of groups of ``dim`` (diagonal is +inf)."""
    local = _local_merge_matrix(model, dim)
    K = local.shape[0]
    if K < 2:
        return np.full((K, K), np.inf)
    return local + model._global_merge_term(dim)


def _local_merge_matrix(model: CoclusterModel, dim: str) -> np.ndarray:
    lf = model.stats.lf
    cells = np.ascontiguousarray(model.oriented_cells(dim))
    sizes = model.sizes(dim)
    tot = cells.sum(axis=1)
    K = cells.shape[0]
    lf_rows = lf[cells].sum(axis=1)
    lf_tot = lf[tot]
    h = _group_term(tot, sizes)
    out = np.empty((K, K))
    for a in range(K):
        out[a] = _local_merge_row(lf, cells, tot, sizes, lf_rows, lf_tot, h, a)
    return out


def _local_merge_row(lf, cells, tot, sizes, lf_rows, lf_tot, h, a) -> np.ndarray:
    merged = cells[a][None, :] + cells
    row = lf_rows[a] + lf_rows - lf[merged].sum(axis=1)
    row += lf[tot[a] + tot] - lf_tot[a] - lf_tot
    row += _group_term(tot[a] + tot, sizes[a] + sizes) - h[a] - h
    row[a] = np.inf
    return row


class MergeScanner:
    """Pairwise merge deltas for one dimension, kept current across merges."""

    def __init__(self, model: CoclusterModel, dim: str):
        self.model = model
        self.dim = dim
        self.local = _local_merge_matrix(model, dim)

    def best(self) -> tuple[float, int, int]:
        K = self.local.shape[0]
        if K < 2:
            return np.inf, -1, -1
        iu = np.triu_indices(K, 1)
        vals = self.local[iu]
        k = int(np.argmin(vals))  # first minimum: lowest (a, b) pair in row-major order
        return float(vals[k]) + self.model._global_merge_term(self.dim), int(iu[0][k]), int(iu[1][k])

    def apply(self, a: int, b: int, delta: float) -> None:
        m = self.model
        m.merge(self.dim, a, b, delta)
        lo, hi = min(a, b), max(a, b)
        local = np.delete(np.delete(self.local, hi, axis=0), hi, axis=1)
        cells = np.ascontiguousarray(m.oriented_cells(self.dim))
        sizes = m.sizes(self.dim)
        tot = cells.sum(axis=1)
        lf = m.stats.lf
        row = _local_merge_row(lf, cells, tot, sizes, lf[cells].sum(axis=1), lf[tot],
                               _group_term(tot, sizes), lo)
        local[lo] = row
        local[:, lo] = row
        self.local = local

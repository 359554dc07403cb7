"""Anytime minimization of the grid cost, plus a brute-force oracle for tiny inputs."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .modl import (COL, ROW, CoclusterModel, CoocStats, MergeScanner, _group_term,
                   _ln_choose, log_bell_partial, null_model)

logger = logging.getLogger(__name__)

THREADS_ENV = "GRIDCLUSTER_THREADS"


@dataclass
class SearchConfig:
    seed: int = 0
    budget_seconds: float = 60.0
    restarts: int = 1
    initial_groups: int | None = None
    report_interval_seconds: float = 10.0
    checkpoint: str | os.PathLike | None = None
    workers: int | None = None

    def __post_init__(self):
        if not self.budget_seconds > 0:
            raise ValueError("budget_seconds must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class TracePoint:
    elapsed: float
    cost: float
    I: int
    J: int


@dataclass
class SearchResult:
    best_model: CoclusterModel
    trace: list[TracePoint] = field(default_factory=list)
    restarts_completed: int = 0

    def write_trace(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["elapsed_s", "cost", "I", "J"])
            for p in self.trace:
                writer.writerow([f"{p.elapsed:.3f}", repr(p.cost), p.I, p.J])


def default_initial_groups(stats: CoocStats) -> int:
    return max(1, math.ceil(math.sqrt(stats.N)))


# ---------------------------------------------------------------------------
# one restart


def _seed_dimension(stats: CoocStats, dim: str, other_assign: np.ndarray, n_other: int,
                    n_groups: int, rng: np.random.Generator) -> np.ndarray:
    m = stats.side(dim)
    n = stats.n_values(dim)
    if n_groups >= n:
        return np.arange(n, dtype=np.int64)
    assign = np.full(n, -1, dtype=np.int64)
    cells = np.zeros((n_groups, n_other), dtype=np.int64)
    totals = np.zeros(n_groups, dtype=np.int64)
    sizes = np.zeros(n_groups, dtype=np.int64)
    _kernels.seed_groups(m.indptr, m.indices, m.data, other_assign, n_other,
                         rng.permutation(n).astype(np.int64), n_groups,
                         assign, cells, totals, sizes, stats.lf)
    return assign


def _initial_model(stats: CoocStats, caps: dict[str, int], rng) -> CoclusterModel:
    assign = {ROW: None, COL: None}
    counts = {ROW: stats.V, COL: stats.W}
    for dim in (ROW, COL):
        if caps[dim] >= counts[dim]:
            assign[dim] = np.arange(counts[dim], dtype=np.int64)
    pending = [d for d in (ROW, COL) if assign[d] is None]
    pending.sort(key=lambda d: counts[d])
    for dim in pending:
        other = COL if dim == ROW else ROW
        if assign[other] is None:
            other_assign, n_other = np.arange(counts[other], dtype=np.int64), counts[other]
        else:
            other_assign, n_other = assign[other], int(assign[other].max()) + 1
        assign[dim] = _seed_dimension(stats, dim, other_assign, n_other, caps[dim], rng)
    return CoclusterModel(stats, assign[ROW], assign[COL])


def _sweep(model: CoclusterModel, dim: str, rng, tol: float) -> int:
    stats = model.stats
    m = stats.side(dim)
    other = model.col_assign if dim == ROW else model.row_assign
    cells = np.ascontiguousarray(model.oriented_cells(dim)).copy()
    totals = cells.sum(axis=1)
    sizes = model.sizes(dim).copy()
    order = rng.permutation(stats.n_values(dim)).astype(np.int64)
    moves, _ = _kernels.reassign_sweep(m.indptr, m.indices, m.data, other, cells.shape[1], order,
                                       model.assign(dim), cells, totals, sizes, stats.lf, tol)
    if moves:
        model.cells = cells if dim == ROW else np.ascontiguousarray(cells.T)
        if dim == ROW:
            model.row_sizes = sizes
        else:
            model.col_sizes = sizes
        model.cost = model.recompute_cost()
    return moves


def _merge_pass(model: CoclusterModel, dim: str, tol: float) -> int:
    if model.n_groups(dim) < 2:
        return 0
    scanner = MergeScanner(model, dim)
    applied = 0
    while True:
        delta, a, b = scanner.best()
        if not delta < -tol:
            break
        scanner.apply(a, b, delta)
        applied += 1
    if applied:
        model.cost = model.recompute_cost()
    return applied


def _restart_caps(stats: CoocStats, config: SearchConfig, r: int, rng) -> dict[str, int]:
    cap = config.initial_groups or default_initial_groups(stats)
    caps = {ROW: min(stats.V, cap), COL: min(stats.W, cap)}
    if r > 0:
        # later restarts start from a random number of groups to diversify
        for dim in caps:
            if caps[dim] > 2:
                caps[dim] = int(rng.integers(2, caps[dim] + 1))
    return caps


def _run_restart(stats, config, r, deadline, report) -> CoclusterModel:
    rng = np.random.default_rng(config.seed ^ r)
    caps = _restart_caps(stats, config, r, rng)
    model = _initial_model(stats, caps, rng)
    report(model, r)
    tol = 1e-10 * max(1.0, abs(model.cost))
    while time.monotonic() < deadline:
        changed = 0
        for dim in (ROW, COL):
            changed += _sweep(model, dim, rng, tol)
        for dim in (ROW, COL):
            changed += _merge_pass(model, dim, tol)
        report(model, r)
        if not changed:
            break
    return model


# ---------------------------------------------------------------------------


def optimize(stats: CoocStats, config: SearchConfig | None = None) -> SearchResult:
    """Multi-restart greedy search: seeding, best-improvement sweeps, merge passes."""
    config = config or SearchConfig()
    start = time.monotonic()
    deadline = start + config.budget_seconds
    lock = threading.Lock()
    null = null_model(stats)
    state = {"best": null.copy(), "rank": (null.cost, -1), "last_ckpt": start}
    trace = [TracePoint(0.0, null.cost, 1, 1)]

    def report(model: CoclusterModel, r: int) -> None:
        with lock:
            now = time.monotonic()
            if model.cost < state["best"].cost - 1e-12 * max(1.0, abs(model.cost)):
                state["best"] = model.copy()
                trace.append(TracePoint(now - start, model.cost, model.I, model.J))
            if config.checkpoint and now - state["last_ckpt"] >= config.report_interval_seconds:
                _write_checkpoint(config.checkpoint, state["best"])
                state["last_ckpt"] = now

    if stats.V == 1 and stats.W == 1:
        return SearchResult(null, trace, 0)

    workers = config.workers or int(os.environ.get(THREADS_ENV, "1") or 1)
    finals: dict[int, CoclusterModel] = {}

    def one(r):
        if time.monotonic() >= deadline and r > 0:
            return
        finals[r] = _run_restart(stats, config, r, deadline, report)

    if workers > 1 and config.restarts > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(config.restarts)))
    else:
        for r in range(config.restarts):
            one(r)

    # reduction independent of completion order: lowest cost, then lowest restart index
    best = null
    for r in sorted(finals):
        if finals[r].cost < best.cost - 1e-12 * max(1.0, abs(best.cost)):
            best = finals[r]
    best = best.copy()
    if config.checkpoint:
        _write_checkpoint(config.checkpoint, best)
    return SearchResult(best, _monotone(trace), len(finals))


def _monotone(trace: list[TracePoint]) -> list[TracePoint]:
    out = []
    for p in sorted(trace, key=lambda p: p.elapsed):
        if not out or p.cost < out[-1].cost:
            out.append(p)
    return out


def _write_checkpoint(path, model: CoclusterModel) -> None:
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(model.to_dict(), ensure_ascii=False) + "\n", encoding="utf-8")
    tmp.replace(path)


# ---------------------------------------------------------------------------
# exhaustive oracle


def set_partitions(n: int) -> np.ndarray:
    """All set partitions of n items as restricted growth strings, in lexicographic order."""
    out = [[]]
    for _ in range(n):
        nxt = []
        for rgs in out:
            top = max(rgs) + 1 if rgs else 0
            for g in range(top + 1):
                nxt.append(rgs + [g])
        out = nxt
    return np.array(out, dtype=np.int64).reshape(len(out), n)


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for x in row:
            nxt.append(nxt[-1] + x)
        row = nxt
    return row[0]


def exhaustive_search(stats: CoocStats, max_candidates: int = 10**6) -> CoclusterModel:
    """Criterion-minimal model over every pair of row/column partitions.

    Ties (within 1e-9 relative) go to fewer groups, then lexicographically
    smallest row then column assignment.
    """
    V, W = stats.V, stats.W
    if bell_number(V) * bell_number(W) > max_candidates:
        raise ValueError(f"Bell({V})*Bell({W}) exceeds {max_candidates} candidates")
    lf = stats.lf
    N = stats.N
    dense = stats.counts.toarray()
    rows = set_partitions(V)
    cols = set_partitions(W)
    col_J = cols.max(axis=1) + 1
    const = math.log(V) + math.log(W) + stats.value_term

    best = (np.inf, 0, (), ())
    results = []
    for rgs in rows:
        I = int(rgs.max()) + 1
        R = np.zeros((I, W), dtype=np.int64)
        np.add.at(R, rgs, dense)
        row_tot = R.sum(axis=1)
        row_sizes = np.bincount(rgs, minlength=I)
        row_part = log_bell_partial(V, I) + _group_term(row_tot, row_sizes).sum() + lf[row_tot].sum()
        for J in np.unique(col_J):
            sel = np.flatnonzero(col_J == J)
            onehot = np.zeros((len(sel), W, J), dtype=np.int64)
            onehot[np.arange(len(sel))[:, None], np.arange(W)[None, :], cols[sel]] = 1
            cells = np.einsum("iw,nwj->nij", R, onehot)
            col_tot = cells.sum(axis=1)
            col_sizes = onehot.sum(axis=1)
            G = I * J
            cost = (const + row_part + log_bell_partial(W, J) + float(_ln_choose(N + G - 1, G - 1))
                    + _group_term(col_tot, col_sizes).sum(axis=1)
                    - lf[cells].sum(axis=(1, 2)) + lf[col_tot].sum(axis=1))
            results.append((cost, I + J, rgs, cols[sel]))
            k = int(np.argmin(cost))
            if cost[k] < best[0]:
                best = (float(cost[k]), I + J, rgs, cols[sel][k])

    threshold = best[0] + 1e-9 * max(1.0, abs(best[0]))
    pick = None
    for cost, groups, rgs, cand in results:
        for k in np.flatnonzero(cost <= threshold):
            key = (groups, tuple(rgs), tuple(cand[k]))
            if pick is None or key < pick:
                pick = key
    return CoclusterModel(stats, np.array(pick[1]), np.array(pick[2]))

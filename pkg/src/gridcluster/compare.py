"""Comparing two flat partitions of the same items."""

from __future__ import annotations

import csv
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .dataset import DataError

logger = logging.getLogger(__name__)


@dataclass
class Partition:
    item_ids: list[str]
    labels: np.ndarray  # dense 0..K-1
    names: list[str]  # original cluster name of each dense label

    @property
    def n_clusters(self) -> int:
        return len(self.names)

    @classmethod
    def from_labels(cls, item_ids, labels) -> "Partition":
        """Dense relabeling; clusters are ordered by their name."""
        raw = [str(x) for x in labels]
        names = sorted(set(raw), key=_natural_key)
        index = {name: i for i, name in enumerate(names)}
        return cls([str(i) for i in item_ids], np.array([index[x] for x in raw], dtype=np.int64),
                   names)

    def save(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["item_id", "label"])
            for item, lab in zip(self.item_ids, self.labels):
                writer.writerow([item, self.names[lab]])

    @classmethod
    def load(cls, path) -> "Partition":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"{path}: no such file")
        with path.open(newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r]
        if len(rows) < 2:
            raise DataError(f"{path}: empty partition")
        if any(len(r) != 2 for r in rows):
            raise DataError(f"{path}: expected 2 columns (item_id,label)")
        return cls.from_labels([r[0] for r in rows[1:]], [r[1] for r in rows[1:]])


def _natural_key(s: str):
    try:
        return (0, float(s), s)
    except ValueError:
        return (1, 0.0, s)


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    row_names: list[str]
    col_names: list[str]

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def col_totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(a: Partition, b: Partition) -> ConfusionMatrix:
    if len(set(a.item_ids)) != len(a.item_ids) or len(set(b.item_ids)) != len(b.item_ids):
        raise DataError("duplicate item ids in a partition")
    pos = {item: k for k, item in enumerate(b.item_ids)}
    if set(pos) != set(a.item_ids):
        only_a = len(set(a.item_ids) - set(pos))
        only_b = len(set(pos) - set(a.item_ids))
        raise DataError(f"item sets differ ({only_a} only in first, {only_b} only in second)")
    lb = b.labels[[pos[i] for i in a.item_ids]]
    counts = np.zeros((a.n_clusters, b.n_clusters), dtype=np.int64)
    np.add.at(counts, (a.labels, lb), 1)
    return ConfusionMatrix(counts, list(a.names), list(b.names))


def mutual_information(m: ConfusionMatrix) -> tuple[float, np.ndarray]:
    """MI in nats and the per-cell terms (c/T) ln(c T / (r s)); empty cells give 0."""
    T = m.total
    if T <= 0:
        raise DataError("empty confusion matrix")
    c = m.counts.astype(float)
    denom = np.outer(m.row_totals, m.col_totals).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(c > 0, (c / T) * np.log(c * T / denom), 0.0)
    return float(cells.sum()), cells


def chi2(m: ConfusionMatrix) -> tuple[float, np.ndarray]:
    """Pearson statistic and per-cell terms; cells with a zero marginal are skipped (NaN)."""
    T = m.total
    expected = np.outer(m.row_totals, m.col_totals) / T
    ok = expected > 0
    if not ok.all():
        logger.warning("%d cell(s) with zero expected count skipped", int((~ok).sum()))
    with np.errstate(divide="ignore", invalid="ignore"):
        cells = np.where(ok, (m.counts - expected) ** 2 / expected, np.nan)
    return float(np.nansum(cells)), cells


def hungarian(weights, objective: str = "maximize") -> list[tuple[int, int]]:
    """Optimal one-to-one matching of size min(K_A, K_B), as sorted (row, col) pairs."""
    w = np.asarray(weights, dtype=float)
    if objective not in ("maximize", "minimize"):
        raise ValueError(f"unknown objective {objective!r}")
    if not np.isfinite(w).all():
        raise DataError("weights must be finite")
    rows, cols = linear_sum_assignment(w, maximize=objective == "maximize")
    return sorted(zip(rows.tolist(), cols.tolist()))


def brute_force_assignment(weights, objective: str = "maximize") -> tuple[float, list]:
    w = np.asarray(weights, dtype=float)
    transposed = w.shape[0] > w.shape[1]
    if transposed:
        w = w.T
    sign = 1 if objective == "maximize" else -1
    best, best_pairs = -np.inf, None
    for perm in itertools.permutations(range(w.shape[1]), w.shape[0]):
        total = sign * w[np.arange(w.shape[0]), perm].sum()
        if total > best:
            best, best_pairs = total, list(zip(range(w.shape[0]), perm))
    if transposed:
        best_pairs = [(j, i) for i, j in best_pairs]
    return sign * best, sorted(best_pairs)


def retained_mi(m: ConfusionMatrix, assignment) -> float:
    """Share of the mutual information carried by the matched cells."""
    total, cells = mutual_information(m)
    if total <= 0:
        raise DataError("partitions are independent; retained information is undefined")
    return float(sum(cells[i, j] for i, j in assignment) / total)


def compare_partitions(a: Partition, b: Partition, weights: str = "mi") -> dict:
    m = confusion(a, b)
    mi, mi_cells = mutual_information(m)
    stat, chi_cells = chi2(m)
    w = mi_cells if weights == "mi" else np.nan_to_num(chi_cells)
    pairs = hungarian(w, "maximize")
    return {
        "rows": m.row_names,
        "cols": m.col_names,
        "confusion": m.counts.tolist(),
        "mutual_information": mi,
        "chi2": stat,
        "weights": weights,
        "matching": [[m.row_names[i], m.col_names[j]] for i, j in pairs],
        "retained_mi": retained_mi(m, pairs) if mi > 0 else None,
    }

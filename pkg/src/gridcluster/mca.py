"""Multiple correspondence analysis of a binned table, and k-means on its factors."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.cluster import kmeans_plusplus

from .binarize import BinnedDataset
from .dataset import DataError

logger = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-12


@dataclass
class Cdt:
    """Complete disjunctive table: one 0/1 indicator column per category."""

    T: np.ndarray
    category_labels: list[str]
    variable_of: np.ndarray  # variable index of each category column
    variable_names: list[str]
    instance_ids: list[str]

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def p(self) -> int:
        return len(self.variable_names)

    @property
    def n_categories(self) -> int:
        return self.T.shape[1]

    @property
    def n_s(self) -> np.ndarray:
        return self.T.sum(axis=0)


def build_cdt(binned: BinnedDataset) -> Cdt:
    """Indicator expansion over the parts actually present in the data.

    Variables with a single observed part carry no inertia and are dropped.
    """
    labels = binned.model.part_labels
    names = binned.model.schema.names
    blocks, cat_labels, var_of, kept = [], [], [], []
    for j in range(binned.m):
        codes = binned.codes[:, j]
        present = np.unique(codes)
        if len(present) < 2:
            logger.warning("variable %r has a single part; dropped from the analysis", names[j])
            continue
        blocks.append((codes[:, None] == present[None, :]).astype(float))
        cat_labels.extend(labels[j][c] for c in present)
        var_of.extend([len(kept)] * len(present))
        kept.append(names[j])
    if not blocks:
        raise DataError("every variable has a single part")
    return Cdt(np.hstack(blocks), cat_labels, np.array(var_of), kept, list(binned.instance_ids))


@dataclass
class McaResult:
    eigenvalues: np.ndarray  # descending, trivial axis removed, mu > EIGEN_FLOOR
    category_coords: np.ndarray  # m_total x axes (principal coordinates)
    instance_coords: np.ndarray  # n x axes
    total_inertia: float
    category_labels: list[str]
    instance_ids: list[str]
    dropped_axes: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def variance_fraction(self) -> np.ndarray:
        return self.eigenvalues / self.total_inertia

    @property
    def cumulative_variance(self) -> np.ndarray:
        return np.cumsum(self.variance_fraction)

    def to_dict(self, contributions: dict | None = None) -> dict:
        d = {
            "eigenvalues": self.eigenvalues.tolist(),
            "total_inertia": self.total_inertia,
            "variance_fraction": self.variance_fraction.tolist(),
            "category_labels": self.category_labels,
            "category_coords": self.category_coords.tolist(),
            "instance_ids": self.instance_ids,
            "instance_coords": self.instance_coords.tolist(),
            "meta": {**self.meta, "dropped_axes": self.dropped_axes},
        }
        if contributions is not None:
            d["contributions"] = {k: v.tolist() if isinstance(v, np.ndarray) else v
                                  for k, v in contributions.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "McaResult":
        try:
            return cls(np.array(d["eigenvalues"], dtype=float),
                       np.array(d["category_coords"], dtype=float),
                       np.array(d["instance_coords"], dtype=float),
                       float(d["total_inertia"]), list(d["category_labels"]),
                       list(d["instance_ids"]), int(d.get("meta", {}).get("dropped_axes", 0)),
                       dict(d.get("meta", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed MCA document: {exc}") from exc

    def save(self, path, contributions: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(contributions)) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "McaResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def write_scree(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["axis", "eigenvalue", "variance", "cumulative"])
            for h, (mu, f, c) in enumerate(zip(self.eigenvalues, self.variance_fraction,
                                               self.cumulative_variance), start=1):
                writer.writerow([h, repr(float(mu)), repr(float(f)), repr(float(c))])


def fit_mca(cdt: Cdt) -> McaResult:
    """Solve (1/p) D^-1 T'T a = mu a through its symmetric form.

    With u = sqrt(n_s / (n p)) the trivial eigenvector (mu = 1) of
    S = (1/p) D^-1/2 T'T D^-1/2, the remaining spectrum is that of S - u u'.
    Category principal coordinates are a = sqrt(n p / n_s) * v * sqrt(mu);
    instance coordinates come from z = (1/sqrt(mu)) (1/p) T a.
    """
    T = cdt.T
    n, p = cdt.n, cdt.p
    n_s = cdt.n_s
    d_isqrt = 1.0 / np.sqrt(n_s)
    S = (T.T @ T) * np.outer(d_isqrt, d_isqrt) / p
    u = np.sqrt(n_s / (n * p))
    S -= np.outer(u, u)
    try:
        mu, vecs = np.linalg.eigh(S)
    except np.linalg.LinAlgError as exc:
        raise DataError(f"eigen-decomposition failed: {exc}") from exc
    order = np.argsort(mu)[::-1]
    mu, vecs = mu[order], vecs[:, order]
    keep = mu > EIGEN_FLOOR
    dropped = int((~keep).sum())
    mu, vecs = mu[keep], vecs[:, keep]

    a = np.sqrt(n * p / n_s)[:, None] * vecs * np.sqrt(mu)[None, :]
    for h in range(a.shape[1]):
        nz = np.flatnonzero(np.abs(a[:, h]) > 1e-12)
        if len(nz) and a[nz[0], h] < 0:
            a[:, h] = -a[:, h]
    z = (T @ a) / p / np.sqrt(mu)[None, :]
    total = cdt.n_categories / p - 1
    meta = {"n": n, "p": p, "n_categories": cdt.n_categories, "eigen_floor": EIGEN_FLOOR,
            "variables": cdt.variable_names}
    return McaResult(mu, a, z, total, list(cdt.category_labels), list(cdt.instance_ids),
                     dropped, meta)


def contributions(result: McaResult, cdt: Cdt) -> dict[str, np.ndarray]:
    n, p = cdt.n, cdt.p
    mu = result.eigenvalues[None, :]
    inst = (result.instance_coords ** 2) / n / mu
    cat = (cdt.n_s[:, None] / (n * p)) * result.category_coords ** 2 / mu
    var = np.zeros((cdt.p, len(result.eigenvalues)))
    np.add.at(var, cdt.variable_of, cat)
    cat_inertia = (cdt.n_s / (n * p)) * (result.category_coords ** 2).sum(axis=1)
    var_inertia = np.zeros(cdt.p)
    np.add.at(var_inertia, cdt.variable_of, cat_inertia)
    return {"instance": inst, "category": cat, "variable": var,
            "category_inertia": cat_inertia, "variable_inertia": var_inertia}


def transition_residuals(result: McaResult, cdt: Cdt) -> tuple[float, float]:
    """Max-norm residuals of both transition formulas."""
    sq = np.sqrt(result.eigenvalues)[None, :]
    z_hat = (cdt.T @ result.category_coords) / cdt.p / sq
    a_hat = (cdt.T.T @ result.instance_coords) / cdt.n_s[:, None] / sq
    return (float(np.abs(z_hat - result.instance_coords).max()),
            float(np.abs(a_hat - result.category_coords).max()))


# ---------------------------------------------------------------------------
# k-means over factor coordinates


@dataclass
class KMeansResult:
    labels: np.ndarray  # over stacked points: instances first, then categories
    centers: np.ndarray
    withinss: np.ndarray
    objective_history: list[float]
    n_instances: int
    point_ids: list[str]

    @property
    def instance_labels(self) -> np.ndarray:
        return self.labels[: self.n_instances]

    @property
    def category_labels(self) -> np.ndarray:
        return self.labels[self.n_instances:]


def lloyd(X: np.ndarray, k: int, seed: int = 0, max_iter: int = 300) -> tuple:
    """k-means++ seeding followed by Lloyd iterations until assignments settle."""
    X = np.asarray(X, dtype=float)
    if k < 1 or k > len(X):
        raise DataError(f"k={k} must lie in 1..{len(X)}")
    rng = np.random.default_rng(seed)
    centers, _ = kmeans_plusplus(X, k, random_state=int(rng.integers(2**31 - 1)))
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2) if len(X) * k < 5e6 \
            else _chunked_d2(X, centers)
        new = d2.argmin(axis=1)
        history.append(float(d2[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = X[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    withinss = np.array([((X[labels == c] - centers[c]) ** 2).sum() for c in range(k)])
    return labels, centers, withinss, history


def _chunked_d2(X, centers, chunk=20000):
    out = np.empty((len(X), len(centers)))
    for s in range(0, len(X), chunk):
        out[s:s + chunk] = ((X[s:s + chunk, None, :] - centers[None]) ** 2).sum(axis=2)
    return out


def kmeans_factor(result: McaResult, k: int, axes: int, seed: int = 0,
                  max_iter: int = 300) -> KMeansResult:
    """Joint k-means of instances and categories in the first ``axes`` factor axes."""
    if not 1 <= axes <= len(result.eigenvalues):
        raise DataError(f"axes must lie in 1..{len(result.eigenvalues)}")
    X = np.vstack([result.instance_coords[:, :axes], result.category_coords[:, :axes]])
    labels, centers, withinss, history = lloyd(X, k, seed, max_iter)
    return KMeansResult(labels, centers, withinss, history, len(result.instance_ids),
                        list(result.instance_ids) + list(result.category_labels))

"""Exploratory views of a grid model: cell contrast, cluster profiles, exports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
import scipy.sparse as sp

from .modl import COL, ROW, CoclusterModel, CoocStats

OVER, NEUTRAL, UNDER = 1, 0, -1
SIGN_NAMES = {OVER: "over", NEUTRAL: "neutral", UNDER: "under"}


@dataclass
class CellContrast:
    observed: np.ndarray
    expected: np.ndarray
    mi: np.ndarray
    sign: np.ndarray

    @property
    def total(self) -> float:
        return float(self.mi.sum())


def _mi_terms(observed, row_tot, col_tot, total) -> np.ndarray:
    obs = np.asarray(observed, dtype=float)
    denom = np.outer(row_tot, col_tot).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (obs / total) * np.log(obs * total / denom)
    return np.where(obs > 0, out, 0.0)


def cell_contrast(model: CoclusterModel, stats: CoocStats | None = None) -> CellContrast:
    stats = model.stats if stats is None else stats
    cells = model.cells
    N = cells.sum()
    rt, ct = cells.sum(axis=1), cells.sum(axis=0)
    expected = np.outer(rt, ct) / N
    mi = _mi_terms(cells, rt, ct, N)
    # exact comparison in integers: observed*N versus N_i.*N_.j
    lhs = cells.astype(np.int64) * int(N)
    rhs = np.outer(rt, ct).astype(np.int64)
    sign = np.where(lhs > rhs, OVER, np.where(lhs < rhs, UNDER, NEUTRAL))
    return CellContrast(cells.copy(), expected, mi, sign)


@dataclass
class Contrast:
    cluster: int
    mi: float
    sign: int
    members: list[tuple[str, float]]


@dataclass
class ClusterProfile:
    dimension: str
    cluster: int
    size: int
    frequency: int
    members: list[str]
    top: list[Contrast] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "cluster": self.cluster,
            "size": self.size,
            "frequency": self.frequency,
            "members": self.members,
            "top": [{"cluster": c.cluster, "mi": c.mi, "sign": SIGN_NAMES[c.sign],
                     "members": [{"label": lab, "mi": v} for lab, v in c.members]}
                    for c in self.top],
        }


def _group_by_value(model: CoclusterModel, dim: str) -> np.ndarray:
    """Counts between each group of ``dim`` and each value of the other dimension."""
    side = model.stats.side(dim)
    assign = model.assign(dim)
    K = model.n_groups(dim)
    onehot = sp.csr_matrix((np.ones(len(assign)), (assign, np.arange(len(assign)))),
                           shape=(K, len(assign)))
    return np.asarray((onehot @ side).todense())


def characterize_clusters(model: CoclusterModel, stats: CoocStats | None = None,
                          top_t: int = 3) -> dict[str, list[ClusterProfile]]:
    """Per cluster, the ``top_t`` opposite clusters with the largest MI contribution.

    Within each listed opposite cluster, its member values are ordered by
    their own contribution restricted to the profiled cluster.
    """
    if top_t < 1:
        raise ValueError("top_t must be at least 1")
    stats = model.stats if stats is None else stats
    contrast = cell_contrast(model, stats)
    N = stats.N
    out = {}
    for dim in (ROW, COL):
        other = COL if dim == ROW else ROW
        mi = contrast.mi if dim == ROW else contrast.mi.T
        sign = contrast.sign if dim == ROW else contrast.sign.T
        cells = model.oriented_cells(dim)
        by_value = _group_by_value(model, dim)
        other_tot = stats.col_totals if dim == ROW else stats.row_totals
        other_labels = stats.col_labels if dim == ROW else stats.row_labels
        other_assign = model.assign(other)
        profiles = []
        for g in range(model.n_groups(dim)):
            g_tot = int(cells[g].sum())
            value_mi = _mi_terms(by_value[g][None, :], [g_tot], other_tot, N)[0]
            order = sorted(range(mi.shape[1]), key=lambda j: (-mi[g, j], j))[:top_t]
            top = []
            for j in order:
                vals = np.flatnonzero(other_assign == j)
                vals = sorted(vals, key=lambda v: (-value_mi[v], v))
                top.append(Contrast(int(j), float(mi[g, j]), int(sign[g, j]),
                                    [(other_labels[v], float(value_mi[v])) for v in vals]))
            profiles.append(ClusterProfile(dim, g, int(model.sizes(dim)[g]), g_tot,
                                           model.members(dim, g), top))
        out[dim] = profiles
    return out


# ---------------------------------------------------------------------------
# exports


def _fmt(x: float) -> str:
    return "%.17g" % x


def grid_to_dict(model: CoclusterModel, stats: CoocStats | None = None, top_t: int = 3) -> dict:
    c = cell_contrast(model, stats)
    profiles = characterize_clusters(model, stats, top_t)
    return {
        "model": model.to_dict(),
        "contrast": {
            "observed": c.observed.tolist(),
            "expected": c.expected.tolist(),
            "mi": c.mi.tolist(),
            "sign": [[SIGN_NAMES[s] for s in row] for row in c.sign],
            "total_mi": c.total,
        },
        "profiles": {dim: [p.to_dict() for p in ps] for dim, ps in profiles.items()},
    }


def export_grid(model: CoclusterModel, stats: CoocStats | None, fmt: str, path,
                top_t: int = 3) -> None:
    path = Path(path)
    if fmt == "json":
        text = json.dumps(grid_to_dict(model, stats, top_t), indent=1, ensure_ascii=False)
        path.write_text(text + "\n", encoding="utf-8")
    elif fmt == "csv":
        c = cell_contrast(model, stats)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row_cluster"] + [f"col_{j}" for j in range(model.J)])
            for i, row in enumerate(c.mi):
                writer.writerow([f"row_{i}"] + [_fmt(v) for v in row])
    elif fmt == "svg":
        path.write_text(grid_svg(cell_contrast(model, stats)), encoding="utf-8")
    else:
        raise ValueError(f"unknown format {fmt!r}")


def read_grid_csv(path) -> np.ndarray:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[float(v) for v in row[1:]] for row in rows])


def _color(value: float, scale: float) -> str:
    x = 0.0 if scale == 0 else min(1.0, abs(value) / scale)
    fade = round(255 * (1 - x))
    if value > 0:
        return f"rgb(255,{fade},{fade})"
    if value < 0:
        return f"rgb({fade},{fade},255)"
    return "rgb(255,255,255)"


def grid_svg(contrast: CellContrast, cell: int = 24) -> str:
    """Heatmap: red for over-represented cells, blue for under-represented ones."""
    I, J = contrast.mi.shape
    scale = float(np.abs(contrast.mi).max()) if contrast.mi.size else 0.0
    margin = 40
    w, h = margin + J * cell + 2, margin + I * cell + 2
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}">']
    for j in range(J):
        parts.append(f'<text x="{margin + j * cell + cell // 2}" y="{margin - 6}" '
                     f'font-size="9" text-anchor="middle">{j}</text>')
    for i in range(I):
        parts.append(f'<text x="{margin - 6}" y="{margin + i * cell + cell // 2 + 3}" '
                     f'font-size="9" text-anchor="end">{i}</text>')
        for j in range(J):
            v = contrast.mi[i, j]
            parts.append(f'<rect class="cell" x="{margin + j * cell}" y="{margin + i * cell}" '
                         f'width="{cell}" height="{cell}" fill="{_color(v, scale)}" '
                         f'stroke="#888" stroke-width="0.5"><title>{i},{j}: {_fmt(v)}</title></rect>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def scatter_svg(points: np.ndarray, labels: list[str] | None = None, groups=None,
                size: int = 480) -> str:
    """Scatter plot of 2-d points (e.g. a factorial plane)."""
    pts = np.asarray(points, dtype=float)[:, :2]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    pad = 20
    xy = pad + (pts - lo) / span * (size - 2 * pad)
    xy[:, 1] = size - xy[:, 1]
    palette = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
               "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{size}" '
             f'height="{size}">']
    for k, (x, y) in enumerate(xy):
        color = palette[int(groups[k]) % len(palette)] if groups is not None else "#333"
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="{color}"/>')
        if labels is not None and labels[k]:
            parts.append(f'<text x="{x + 4:.2f}" y="{y - 4:.2f}" font-size="8">'
                         f'{escape(labels[k])}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

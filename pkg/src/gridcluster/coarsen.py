"""Greedy merge hierarchy from an optimized grid down to the 1x1 grid."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .dataset import DataError
from .modl import COL, ROW, CoclusterModel, CoocStats, MergeScanner, null_model

logger = logging.getLogger(__name__)


@dataclass
class MergeStep:
    dimension: str
    groups: tuple[int, int]
    delta: float
    cost_after: float
    info_after: float
    I_after: int
    J_after: int


@dataclass
class Hierarchy:
    base_model: CoclusterModel
    steps: list[MergeStep] = field(default_factory=list)
    null_cost: float = 0.0
    base_cost: float = 0.0

    @property
    def n_levels(self) -> int:
        return len(self.steps) + 1

    def cost_at(self, level: int) -> float:
        return self.base_cost if level == 0 else self.steps[level - 1].cost_after

    def info_at(self, level: int) -> float:
        return info_rate(self.cost_at(level), self)

    def shape_at(self, level: int) -> tuple[int, int]:
        if level == 0:
            return self.base_model.I, self.base_model.J
        s = self.steps[level - 1]
        return s.I_after, s.J_after

    def model_at(self, level: int) -> CoclusterModel:
        """The model after ``level`` merges (0 is the base model)."""
        if not 0 <= level <= len(self.steps):
            raise ValueError(f"level {level} outside 0..{len(self.steps)}")
        model = self.base_model.copy()
        for step in self.steps[:level]:
            model.merge(step.dimension, *step.groups, step.delta)
        model.cost = model.recompute_cost()
        return model

    def to_dict(self) -> dict:
        return {
            "null_cost": self.null_cost,
            "base_cost": self.base_cost,
            "base_shape": [self.base_model.I, self.base_model.J],
            "steps": [{**asdict(s), "groups": list(s.groups)} for s in self.steps],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def info_rate(cost: float, hierarchy: Hierarchy) -> float:
    """Share of the criterion gap between the 1x1 grid and the base grid kept at ``cost``."""
    span = hierarchy.null_cost - hierarchy.base_cost
    if span == 0:
        logger.warning("base model has the null cost; information rate defined as 1")
        return 1.0
    return (hierarchy.null_cost - cost) / span


def build_hierarchy(model: CoclusterModel, stats: CoocStats | None = None) -> Hierarchy:
    """Repeatedly apply the cheapest merge over both dimensions until 1x1.

    Ties go to the smaller delta, then rows before columns, then the lowest
    group pair.
    """
    stats = model.stats if stats is None else stats
    if stats is not model.stats:
        model = CoclusterModel(stats, model.row_assign, model.col_assign)
    base = model.copy()
    work = model.copy()
    hierarchy = Hierarchy(base, [], null_model(stats).cost, base.cost)
    scanners = {dim: MergeScanner(work, dim) for dim in (ROW, COL)}
    while work.I > 1 or work.J > 1:
        best = None
        for dim in (ROW, COL):
            delta, a, b = scanners[dim].best()
            if a >= 0 and (best is None or delta < best[0]):
                best = (delta, dim, a, b)
        delta, dim, a, b = best
        scanners[dim].apply(a, b, delta)
        other = COL if dim == ROW else ROW
        scanners[other] = MergeScanner(work, other)
        # keep the running cost anchored to a full evaluation
        work.cost = work.recompute_cost()
        hierarchy.steps.append(MergeStep(dim, (a, b), delta, work.cost, 0.0, work.I, work.J))
    for s in hierarchy.steps:
        s.info_after = info_rate(s.cost_after, hierarchy)
    return hierarchy


def model_at_info(hierarchy: Hierarchy, target: float) -> CoclusterModel:
    """Coarsest model along the hierarchy keeping at least ``target`` information."""
    if not 0.0 <= target <= 1.0:
        raise ValueError("target must lie in [0, 1]")
    level = 0
    for k in range(hierarchy.n_levels):
        if hierarchy.info_at(k) >= target:
            level = k
    return hierarchy.model_at(level)


def model_at_size(hierarchy: Hierarchy, rows: int, cols: int) -> CoclusterModel:
    I0, J0 = hierarchy.base_model.I, hierarchy.base_model.J
    if not (1 <= rows <= I0 and 1 <= cols <= J0):
        raise DataError(f"requested {rows}x{cols} grid outside 1..{I0} x 1..{J0}")
    for k in range(hierarchy.n_levels):
        I, J = hierarchy.shape_at(k)
        if I <= rows and J <= cols:
            return hierarchy.model_at(k)
    raise AssertionError("hierarchy does not end at the 1x1 grid")

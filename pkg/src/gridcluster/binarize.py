"""Binarization: every variable is cut into at most ``k`` parts.

Numeric variables get equal-frequency intervals rendered as ``]a;b]``;
categorical variables keep their ``k-1`` most frequent values and pool the
rest.  The resulting parts are then flattened into the two-column
(IdInstance, IdVarPart) pair table consumed by the co-clustering step.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np

from .dataset import CATEGORICAL, NUMERIC, DataError, Dataset, Schema, format_number

logger = logging.getLogger(__name__)

MISSING_LABEL = "<missing>"
OTHER_LABEL = "*"
DEDICATED = "dedicated-part"
DROP_ROWS = "drop-rows"
POLICIES = (DEDICATED, DROP_ROWS)


@dataclass(frozen=True)
class NumericBinning:
    boundaries: tuple[float, ...]

    @property
    def n_parts(self) -> int:
        return len(self.boundaries) + 1

    def part_of(self, values: np.ndarray) -> np.ndarray:
        # right-closed intervals: a value equal to a cut goes to the lower part
        return np.searchsorted(np.asarray(self.boundaries, dtype=float), values, side="left")

    def interval_names(self) -> list[str]:
        edges = ["-∞"] + [format_number(b) for b in self.boundaries] + ["+∞"]
        names = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            names.append(f"]{lo};{hi}[" if hi == "+∞" else f"]{lo};{hi}]")
        return names


@dataclass(frozen=True)
class CategoricalGrouping:
    kept_values: tuple[str, ...]
    has_other: bool

    @property
    def n_parts(self) -> int:
        return len(self.kept_values) + int(self.has_other)

    def part_of(self, values) -> np.ndarray:
        index = {v: i for i, v in enumerate(self.kept_values)}
        other = len(self.kept_values) if self.has_other else -1
        out = np.empty(len(values), dtype=np.int64)
        for i, v in enumerate(values):
            out[i] = index.get(v, other)
        return out

    def group_names(self) -> list[str]:
        names = [f"{{{v}}}" for v in self.kept_values]
        if self.has_other:
            names.append(f"{{{OTHER_LABEL}}}")
        return names


def _midpoint(lo: float, hi: float) -> float:
    mid = float((Decimal(repr(float(lo))) + Decimal(repr(float(hi)))) / 2)
    if not lo < mid < hi:
        mid = lo + (hi - lo) / 2
        if not lo < mid < hi:
            mid = float(np.nextafter(lo, hi))
    return mid


def discretize_numeric(values, k: int) -> NumericBinning:
    """Equal-frequency cuts that never split a run of tied values.

    For each target rank ``floor(b*n/k)`` (b = 1..k-1) the cut is placed at the
    first gap between distinct sorted values whose cumulative count reaches
    the target.  Cuts that coincide are merged, so heavily tied data yields
    fewer than ``k`` parts.  Each cut value is the decimal midpoint of the two
    values it separates.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    v = np.asarray(values, dtype=float)
    v = np.sort(v[~np.isnan(v)])
    n = len(v)
    if n == 0:
        raise DataError("all values are missing")
    gaps = np.flatnonzero(v[1:] > v[:-1]) + 1  # admissible lower-part sizes
    if len(gaps) == 0:
        logger.warning("all values identical (%s); single part", format_number(v[0]))
        return NumericBinning(())
    positions = []
    for b in range(1, k):
        target = (b * n) // k
        at = np.searchsorted(gaps, target, side="left")
        if at < len(gaps) and (not positions or gaps[at] != positions[-1]):
            positions.append(int(gaps[at]))
    return NumericBinning(tuple(_midpoint(v[p - 1], v[p]) for p in positions))


def group_categorical(values, k: int) -> CategoricalGrouping:
    if k < 2:
        raise ValueError("k must be at least 2")
    counts = Counter(v for v in values if v is not None)
    if not counts:
        raise DataError("all values are missing")
    ranked = sorted(counts, key=lambda tok: (-counts[tok], tok))
    if len(ranked) <= k:
        return CategoricalGrouping(tuple(ranked), False)
    return CategoricalGrouping(tuple(ranked[: k - 1]), True)


@dataclass(frozen=True)
class BinningModel:
    k: int
    schema: Schema
    per_variable: tuple[NumericBinning | CategoricalGrouping, ...]
    missing_part: tuple[bool, ...]
    missing_policy: str = DEDICATED

    def n_parts(self, j: int) -> int:
        return self.per_variable[j].n_parts + int(self.missing_part[j])

    @property
    def part_labels(self) -> list[list[str]]:
        out = []
        for spec, binning, has_missing in zip(self.schema.variables, self.per_variable,
                                              self.missing_part):
            if isinstance(binning, NumericBinning):
                names = binning.interval_names()
            else:
                names = binning.group_names()
            if has_missing:
                names.append(f"{{{MISSING_LABEL}}}")
            out.append([spec.name + s for s in names])
        return out

    @property
    def flat_labels(self) -> list[str]:
        return [label for labels in self.part_labels for label in labels]

    @property
    def offsets(self) -> np.ndarray:
        sizes = [self.n_parts(j) for j in range(len(self.schema))]
        return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    def to_dict(self) -> dict:
        variables = []
        for spec, binning, has_missing in zip(self.schema.variables, self.per_variable,
                                              self.missing_part):
            d = {"name": spec.name, "kind": spec.kind, "missing_part": has_missing}
            if isinstance(binning, NumericBinning):
                d["boundaries"] = [repr(float(b)) for b in binning.boundaries]
            else:
                d["kept_values"] = list(binning.kept_values)
                d["has_other"] = binning.has_other
            variables.append(d)
        return {"k": self.k, "missing_policy": self.missing_policy, "variables": variables}

    @classmethod
    def from_dict(cls, d: dict) -> "BinningModel":
        try:
            schema = Schema.of((v["name"], v["kind"]) for v in d["variables"])
            per_variable = []
            for v in d["variables"]:
                if v["kind"] == NUMERIC:
                    per_variable.append(NumericBinning(tuple(float(b) for b in v["boundaries"])))
                else:
                    per_variable.append(CategoricalGrouping(tuple(v["kept_values"]),
                                                            bool(v["has_other"])))
            return cls(int(d["k"]), schema, tuple(per_variable),
                       tuple(bool(v["missing_part"]) for v in d["variables"]),
                       d.get("missing_policy", DEDICATED))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed binning document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path) -> "BinningModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_binning(dataset: Dataset, k: int, missing_policy: str = DEDICATED) -> BinningModel:
    if k < 2:
        raise ValueError("k must be at least 2")
    if missing_policy not in POLICIES:
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    if missing_policy == DROP_ROWS:
        complete = np.ones(dataset.n, dtype=bool)
        for j in range(dataset.m):
            complete &= ~dataset.missing_mask(j)
        if not complete.any():
            raise DataError("no complete rows left after dropping missing values")
        dataset = dataset.take(np.flatnonzero(complete))

    per_variable = []
    missing_part = []
    for j, spec in enumerate(dataset.schema.variables):
        col = dataset.columns[j]
        try:
            if spec.kind == NUMERIC:
                per_variable.append(discretize_numeric(col, k))
            else:
                per_variable.append(group_categorical(col, k))
        except DataError as exc:
            raise DataError(f"variable {spec.name!r}: {exc}") from exc
        missing_part.append(missing_policy == DEDICATED and bool(dataset.missing_mask(j).any()))
    return BinningModel(k, dataset.schema, tuple(per_variable), tuple(missing_part),
                        missing_policy)


@dataclass
class BinnedDataset:
    """n x m table of per-variable part indices (local to each variable)."""

    codes: np.ndarray
    model: BinningModel
    instance_ids: list[str]

    @property
    def n(self) -> int:
        return self.codes.shape[0]

    @property
    def m(self) -> int:
        return self.codes.shape[1]

    def labels(self) -> list[list[str]]:
        names = self.model.part_labels
        return [[names[j][c] for j, c in enumerate(row)] for row in self.codes]

    def save(self, path, id_column: str = "IdInstance") -> None:
        names = self.model.part_labels
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([id_column] + self.model.schema.names)
            for iid, row in zip(self.instance_ids, self.codes):
                writer.writerow([iid] + [names[j][c] for j, c in enumerate(row)])

    @classmethod
    def load(cls, path, model: BinningModel) -> "BinnedDataset":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"{path}: no such file")
        lookup = [{label: c for c, label in enumerate(labels)} for labels in model.part_labels]
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or header[1:] != model.schema.names:
                raise DataError(f"{path}: header does not match binning schema")
            ids, codes = [], []
            for row in reader:
                if not row:
                    continue
                try:
                    codes.append([lookup[j][lab] for j, lab in enumerate(row[1:])])
                except (KeyError, IndexError) as exc:
                    raise DataError(f"{path}: unknown part label {exc}") from exc
                ids.append(row[0])
        if not ids:
            raise DataError(f"{path}: empty table")
        return cls(np.array(codes, dtype=np.int64).reshape(len(ids), -1), model, ids)


def apply_binning(dataset: Dataset, model: BinningModel) -> BinnedDataset:
    if [(v.name, v.kind) for v in dataset.schema.variables] != \
            [(v.name, v.kind) for v in model.schema.variables]:
        raise DataError("dataset schema does not match binning model")
    if model.missing_policy == DROP_ROWS:
        complete = np.ones(dataset.n, dtype=bool)
        for j in range(dataset.m):
            complete &= ~dataset.missing_mask(j)
        dataset = dataset.take(np.flatnonzero(complete))
        if dataset.n == 0:
            raise DataError("no complete rows")

    codes = np.empty((dataset.n, dataset.m), dtype=np.int64)
    for j, binning in enumerate(model.per_variable):
        col = dataset.columns[j]
        miss = dataset.missing_mask(j)
        if isinstance(binning, NumericBinning):
            part = binning.part_of(np.where(miss, 0.0, col))
        else:
            part = binning.part_of(col)
            unknown = (part < 0) & ~miss
            if unknown.any():
                bad = sorted({col[i] for i in np.flatnonzero(unknown)})
                raise DataError(f"variable {model.schema.names[j]!r}: values {bad[:5]} "
                                "match no part and there is no catch-all part")
        if miss.any():
            if not model.missing_part[j]:
                raise DataError(f"variable {model.schema.names[j]!r} has missing cells "
                                "but the model has no missing part")
            part = np.where(miss, binning.n_parts, part)
        codes[:, j] = part
    return BinnedDataset(codes, model, list(dataset.instance_ids))


@dataclass
class PairTable:
    """N records (instance, variable part); ``rows``/``cols`` index the label lists."""

    instance_ids: list[str]
    part_labels: list[str]
    rows: np.ndarray
    cols: np.ndarray

    @property
    def N(self) -> int:
        return len(self.rows)

    @property
    def V(self) -> int:
        return len(self.instance_ids)

    @property
    def W(self) -> int:
        return len(self.part_labels)

    def records(self):
        for r, c in zip(self.rows, self.cols):
            yield self.instance_ids[r], self.part_labels[c]

    def save(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["IdInstance", "IdVarPart"])
            writer.writerows(self.records())

    @classmethod
    def from_records(cls, records) -> "PairTable":
        ids: dict[str, int] = {}
        labels: dict[str, int] = {}
        rows, cols = [], []
        for iid, label in records:
            rows.append(ids.setdefault(iid, len(ids)))
            cols.append(labels.setdefault(label, len(labels)))
        return cls(list(ids), list(labels), np.array(rows, dtype=np.int64),
                   np.array(cols, dtype=np.int64))

    @classmethod
    def load(cls, path) -> "PairTable":
        path = Path(path)
        if not path.is_file():
            raise DataError(f"{path}: no such file")
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty pair file")
            if len(header) != 2:
                raise DataError(f"{path}: expected 2 columns, found {len(header)}")
            records = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 2:
                    raise DataError(f"{path}: line {lineno} does not have 2 cells")
                records.append((row[0], row[1]))
        if not records:
            raise DataError(f"{path}: pair file has no records")
        return cls.from_records(records)


def to_pair_table(binned: BinnedDataset) -> PairTable:
    """One record per (instance, variable), instance-major in schema order."""
    n, m = binned.codes.shape
    offsets = binned.model.offsets
    flat = (binned.codes + offsets[:-1][None, :]).ravel()
    used = np.unique(flat)
    remap = np.full(offsets[-1], -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    labels = binned.model.flat_labels
    return PairTable(list(binned.instance_ids), [labels[u] for u in used],
                     np.repeat(np.arange(n, dtype=np.int64), m), remap[flat])

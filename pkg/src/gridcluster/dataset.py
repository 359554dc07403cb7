"""Typed loading of mixed numeric/categorical CSV tables."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, CATEGORICAL)
DEFAULT_MISSING_TOKENS = frozenset({"?", ""})


class DataError(ValueError):
    """Raised when input data cannot be used (as opposed to a usage error)."""


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"variable {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Schema:
    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        if len(self.variables) < 1:
            raise DataError("schema needs at least one variable")
        names = [v.name for v in self.variables]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise DataError(f"duplicate variable names: {dup}")

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, str]]) -> "Schema":
        return cls(tuple(VariableSpec(n, k) for n, k in pairs))

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.variables]

    def __len__(self):
        return len(self.variables)

    def to_dict(self) -> dict:
        return {"variables": [{"name": v.name, "kind": v.kind} for v in self.variables]}

    @classmethod
    def from_dict(cls, d: dict) -> "Schema":
        try:
            return cls.of((v["name"], v["kind"]) for v in d["variables"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed schema document: {exc}") from exc

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Schema":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not a JSON schema ({exc})") from exc


@dataclass
class Dataset:
    """n instances x m variables.

    Numeric columns are float arrays with NaN for missing cells; categorical
    columns are object arrays of str with None for missing cells.
    """

    schema: Schema
    columns: list[np.ndarray]
    instance_ids: list[str]
    coerced_missing: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.instance_ids)
        if n < 1:
            raise DataError("empty table")
        if len(set(self.instance_ids)) != n:
            raise DataError("instance identifiers are not unique")
        if len(self.columns) != len(self.schema):
            raise DataError("column count does not match schema")
        for spec, col in zip(self.schema.variables, self.columns):
            if len(col) != n:
                raise DataError(f"column {spec.name!r} has {len(col)} cells, expected {n}")

    @property
    def n(self) -> int:
        return len(self.instance_ids)

    @property
    def m(self) -> int:
        return len(self.schema)

    def column(self, name: str) -> np.ndarray:
        return self.columns[self.schema.names.index(name)]

    def missing_mask(self, j: int) -> np.ndarray:
        col = self.columns[j]
        if self.schema.variables[j].kind == NUMERIC:
            return np.isnan(col)
        return np.array([c is None for c in col], dtype=bool)

    def rows(self):
        for i in range(self.n):
            yield [col[i] for col in self.columns]

    def take(self, index: Sequence[int]) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(
            self.schema,
            [col[index] for col in self.columns],
            [self.instance_ids[i] for i in index],
        )


def format_number(x: float) -> str:
    """Shortest round-trip decimal; integral values drop the trailing '.0'."""
    x = float(x)
    if math.isfinite(x) and x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def _parse_float(token: str) -> float | None:
    try:
        value = float(token)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def _read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [[c.strip() for c in row] for row in reader if row]
    return header, rows


def infer_schema(path, sample_rows: int | None = None, *, id_column: str | None = None,
                 missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> Schema:
    """A column is numeric iff every non-missing sampled cell parses as a number."""
    header, rows = _read_csv(path)
    dup = sorted({h for h in header if header.count(h) > 1})
    if dup:
        raise DataError(f"{path}: duplicate header names {dup}")
    if sample_rows is not None:
        rows = rows[:sample_rows]
    missing = set(missing_tokens)
    pairs = []
    for j, name in enumerate(header):
        if name == id_column:
            continue
        cells = (row[j] for row in rows if j < len(row))
        numeric = all(_parse_float(c) is not None for c in cells if c not in missing)
        pairs.append((name, NUMERIC if numeric else CATEGORICAL))
    return Schema.of(pairs)


def load_dataset(path, schema: Schema, *, id_column: str | None = None,
                 missing_tokens: Iterable[str] = DEFAULT_MISSING_TOKENS) -> Dataset:
    header, rows = _read_csv(path)
    if not rows:
        raise DataError(f"{path}: empty table")
    wanted = set(schema.names)
    present = set(header) - ({id_column} if id_column else set())
    if wanted != present:
        msg = []
        if wanted - present:
            msg.append(f"missing columns {sorted(wanted - present)}")
        if present - wanted:
            msg.append(f"unexpected columns {sorted(present - wanted)}")
        raise DataError(f"{path}: header does not match schema: " + "; ".join(msg))
    if id_column is not None and id_column not in header:
        raise DataError(f"{path}: id column {id_column!r} not found")

    width = len(header)
    for lineno, row in enumerate(rows, start=2):
        if len(row) != width:
            raise DataError(f"{path}: line {lineno} has {len(row)} cells, expected {width}")

    missing = set(missing_tokens)
    columns = []
    coerced = {}
    for spec in schema.variables:
        j = header.index(spec.name)
        raw = [row[j] for row in rows]
        if spec.kind == NUMERIC:
            col = np.full(len(raw), np.nan)
            bad = 0
            for i, tok in enumerate(raw):
                if tok in missing:
                    continue
                value = _parse_float(tok)
                if value is None:
                    bad += 1
                else:
                    col[i] = value
            if bad:
                coerced[spec.name] = bad
                logger.warning("%s: %d unparseable cell(s) in numeric column %r set missing",
                               path, bad, spec.name)
        else:
            col = np.array([None if tok in missing else tok for tok in raw], dtype=object)
        columns.append(col)

    if id_column is not None:
        ids = [row[header.index(id_column)] for row in rows]
    else:
        ids = [str(i) for i in range(1, len(rows) + 1)]
    return Dataset(schema, columns, ids, coerced)


def write_dataset(dataset: Dataset, path, *, id_column: str | None = None,
                  missing_token: str = "") -> None:
    names = dataset.schema.names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(([id_column] if id_column else []) + names)
        kinds = [v.kind for v in dataset.schema.variables]
        for i, row in enumerate(dataset.rows()):
            out = []
            for kind, cell in zip(kinds, row):
                if kind == NUMERIC:
                    out.append(missing_token if np.isnan(cell) else repr(float(cell)))
                else:
                    out.append(missing_token if cell is None else cell)
            writer.writerow(([dataset.instance_ids[i]] if id_column else []) + out)

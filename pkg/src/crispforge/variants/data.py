"""In-memory tabular datasets and CSV ingestion."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DataError

HASH_ALGORITHM = "sha256"


class ColumnKind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind


@dataclass(frozen=True)
class Dataset:
    columns: tuple[Column, ...]
    rows: tuple[tuple, ...]
    target: str
    source: str = "<memory>"

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "rows", tuple(tuple(r) for r in self.rows))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("BAD_DATASET", "duplicate column names")
        if self.target not in names:
            raise DataError("BAD_DATASET", f"target column {self.target!r} not found")
        width = len(self.columns)
        for i, r in enumerate(self.rows):
            if len(r) != width:
                raise DataError("BAD_DATASET", f"row {i} has {len(r)} values, expected {width}")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def row_ids(self) -> range:
        return range(len(self.rows))

    @property
    def target_index(self) -> int:
        return [c.name for c in self.columns].index(self.target)

    @property
    def target_kind(self) -> ColumnKind:
        return self.columns[self.target_index].kind

    @property
    def feature_columns(self) -> tuple[Column, ...]:
        return tuple(c for c in self.columns if c.name != self.target)

    def features(self, ids: Iterable[int] | None = None) -> list[tuple]:
        t = self.target_index
        rows = self.rows if ids is None else [self.rows[i] for i in ids]
        return [r[:t] + r[t + 1:] for r in rows]

    def labels(self, ids: Iterable[int] | None = None) -> list:
        t = self.target_index
        rows = self.rows if ids is None else [self.rows[i] for i in ids]
        return [r[t] for r in rows]

    def classes(self) -> list:
        return sorted(set(self.labels()))

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "columns": [[c.name, c.kind.value] for c in self.columns],
                "rows": [list(r) for r in self.rows],
                "target": self.target,
            },
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.new(HASH_ALGORITHM, payload.encode("utf-8")).hexdigest()

    def digest(self) -> dict:
        return {
            "path": self.source,
            "rows": len(self.rows),
            "columns": len(self.columns),
            "column_kinds": {c.name: c.kind.value for c in self.columns},
            "target": self.target,
            "hash_algorithm": HASH_ALGORITHM,
            "content_hash": self.content_hash(),
        }


def _as_number(text: str) -> float | None:
    try:
        v = float(text)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def read_csv(
    source: str | Path | io.TextIOBase,
    target: str,
    numeric: Sequence[str] = (),
    categorical: Sequence[str] = (),
) -> Dataset:
    """Load an RFC 4180 CSV with a header row.

    A column is NUMERIC when every cell parses as a finite number, otherwise
    CATEGORICAL; ``numeric``/``categorical`` force the kind of named columns.
    """
    if isinstance(source, (str, Path)):
        name = str(source)
        with open(source, newline="", encoding="utf-8") as fh:
            records = list(csv.reader(fh))
    else:
        name = getattr(source, "name", "<stream>")
        records = list(csv.reader(source))
    if not records:
        raise DataError("BAD_DATASET", f"{name}: empty file")
    header, body = records[0], [r for r in records[1:] if r]
    for col in list(numeric) + list(categorical):
        if col not in header:
            raise DataError("BAD_DATASET", f"{name}: no column {col!r}")
    kinds = []
    for j, col in enumerate(header):
        cells = [r[j] if j < len(r) else "" for r in body]
        if col in categorical:
            kinds.append(ColumnKind.CATEGORICAL)
        elif col in numeric or (cells and all(_as_number(c) is not None for c in cells)):
            kinds.append(ColumnKind.NUMERIC)
        else:
            kinds.append(ColumnKind.CATEGORICAL)
    rows = []
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise DataError("BAD_DATASET", f"{name}: record {i + 2} has {len(r)} fields")
        row = []
        for cell, kind in zip(r, kinds):
            if kind is ColumnKind.NUMERIC:
                v = _as_number(cell)
                if v is None:
                    raise DataError("BAD_DATASET", f"{name}: non-numeric value {cell!r} in record {i + 2}")
                row.append(v)
            else:
                row.append(cell)
        rows.append(tuple(row))
    return Dataset(tuple(Column(h, k) for h, k in zip(header, kinds)), tuple(rows), target, name)

"""Covariate schemas, survival datasets, standardization and VIF screening."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

KINDS = ("continuous", "binary", "categorical")
RESERVED = ("duration", "event")


class LoadError(ValueError):
    """Raised when a CSV file or schema does not validate."""


@dataclass(frozen=True)
class Covariate:
    name: str
    kind: str
    levels: tuple[str, ...] | None = None
    unit: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"covariate {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if self.levels is None or len(self.levels) < 2:
                raise ValueError(f"categorical covariate {self.name!r} needs at least 2 levels")
            if len(set(self.levels)) != len(self.levels):
                raise ValueError(f"categorical covariate {self.name!r} has repeated levels")
            object.__setattr__(self, "levels", tuple(str(v) for v in self.levels))

    @property
    def baseline(self) -> str | None:
        return self.levels[0] if self.kind == "categorical" else None

    @property
    def columns(self) -> tuple[str, ...]:
        if self.kind == "categorical":
            return tuple(f"{self.name}={lvl}" for lvl in self.levels[1:])
        return (self.name,)


@dataclass(frozen=True)
class CovariateSchema:
    """Ordered covariate declarations; categorical levels one-hot encode
    against the first declared level."""

    entries: tuple[Covariate, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        names = [c.name for c in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("covariate names must be unique")
        clash = set(names) & set(RESERVED)
        if clash:
            raise ValueError(f"reserved column names used as covariates: {sorted(clash)}")

    @classmethod
    def from_list(cls, items: Iterable[Mapping]) -> "CovariateSchema":
        entries = []
        for item in items:
            levels = item.get("levels")
            entries.append(Covariate(
                name=item["name"],
                kind=item["kind"],
                levels=tuple(str(v) for v in levels) if levels is not None else None,
                unit=item.get("unit"),
            ))
        return cls(tuple(entries))

    @classmethod
    def from_json(cls, path) -> "CovariateSchema":
        with open(path, encoding="utf-8") as fh:
            return cls.from_list(json.load(fh))

    def to_list(self) -> list[dict]:
        out = []
        for c in self.entries:
            item = {"name": c.name, "kind": c.kind}
            if c.levels is not None:
                item["levels"] = list(c.levels)
            if c.unit is not None:
                item["unit"] = c.unit
            out.append(item)
        return out

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_list(), indent=2) + "\n", encoding="utf-8")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.entries)

    @property
    def columns(self) -> tuple[str, ...]:
        return tuple(col for c in self.entries for col in c.columns)

    @property
    def column_kinds(self) -> tuple[str, ...]:
        kinds = []
        for c in self.entries:
            kinds.extend(["continuous" if c.kind == "continuous" else "binary"] * len(c.columns))
        return tuple(kinds)

    @property
    def width(self) -> int:
        return len(self.columns)

    def __getitem__(self, name: str) -> Covariate:
        for c in self.entries:
            if c.name == name:
                return c
        raise KeyError(name)

    def encode(self, record: Mapping[str, object]) -> list[float]:
        """Encode one record of raw values (labels for categoricals)."""
        row: list[float] = []
        for c in self.entries:
            value = record[c.name]
            if c.kind == "continuous":
                x = float(value)
                if not math.isfinite(x):
                    raise ValueError(f"{c.name}: non-finite value {value!r}")
                row.append(x)
            elif c.kind == "binary":
                x = float(value)
                if x not in (0.0, 1.0):
                    raise ValueError(f"{c.name}: binary value must be 0 or 1, got {value!r}")
                row.append(x)
            else:
                label = str(value)
                if label not in c.levels:
                    raise ValueError(f"{c.name}: undeclared level {label!r}")
                row.extend(1.0 if label == lvl else 0.0 for lvl in c.levels[1:])
        return row

    def decode(self, row: Sequence[float]) -> dict[str, object]:
        """Inverse of :meth:`encode` for one encoded row."""
        out: dict[str, object] = {}
        pos = 0
        for c in self.entries:
            if c.kind == "categorical":
                block = np.asarray(row[pos:pos + len(c.levels) - 1])
                hot = np.flatnonzero(block == 1.0)
                if len(hot) > 1 or np.any((block != 0.0) & (block != 1.0)):
                    raise ValueError(f"{c.name}: invalid one-hot block {block.tolist()}")
                out[c.name] = c.levels[hot[0] + 1] if len(hot) else c.levels[0]
                pos += len(c.levels) - 1
            elif c.kind == "binary":
                out[c.name] = int(row[pos])
                pos += 1
            else:
                out[c.name] = float(row[pos])
                pos += 1
        return out


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded survival data.

    ``X`` holds the encoded covariates (one column per entry of ``columns``),
    ``duration`` the observed wait times and ``event`` 1 for an observed event,
    0 for right-censoring. Arrays are read-only.
    """

    X: np.ndarray
    duration: np.ndarray
    event: np.ndarray
    columns: tuple[str, ...]
    kinds: tuple[str, ...]
    schema: CovariateSchema | None = None
    standardization: dict[str, tuple[float, float]] | None = None
    ids: np.ndarray | None = field(default=None)

    def __post_init__(self):
        X = _readonly(self.X)
        if X.ndim != 2:
            X = _readonly(X.reshape(len(self.duration), -1))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "duration", _readonly(self.duration))
        object.__setattr__(self, "event", _readonly(self.event))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        ids = np.arange(len(self.duration)) if self.ids is None else np.asarray(self.ids)
        ids = ids.copy()
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)
        n = len(self.duration)
        if X.shape != (n, len(self.columns)):
            raise ValueError(f"X has shape {X.shape}, expected ({n}, {len(self.columns)})")
        if len(self.kinds) != len(self.columns):
            raise ValueError("kinds and columns differ in length")
        if len(self.event) != n or len(ids) != n:
            raise ValueError("duration, event and ids must have equal length")
        if np.any(self.duration < 0) or not np.all(np.isfinite(self.duration)):
            raise ValueError("durations must be finite and nonnegative")
        if not np.all(np.isin(self.event, (0.0, 1.0))):
            raise ValueError("event must be 0 or 1")

    @classmethod
    def from_arrays(cls, X, duration, event, columns=None, kinds=None, schema=None, ids=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if schema is not None:
            columns = schema.columns if columns is None else columns
            kinds = schema.column_kinds if kinds is None else kinds
        if columns is None:
            columns = tuple(f"x{i}" for i in range(X.shape[1]))
        if kinds is None:
            kinds = ("continuous",) * X.shape[1]
        return cls(X, np.asarray(duration, float), np.asarray(event, float),
                   tuple(columns), tuple(kinds), schema=schema, ids=ids)

    @property
    def n(self) -> int:
        return len(self.duration)

    @property
    def width(self) -> int:
        return len(self.columns)

    @property
    def n_events(self) -> int:
        return int(self.event.sum())

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.columns.index(name)]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return replace(self, X=self.X[rows], duration=self.duration[rows],
                       event=self.event[rows], ids=self.ids[rows])

    def select(self, names: Sequence[str]) -> "Dataset":
        """Keep only the named encoded columns, in the order given."""
        idx = [self.columns.index(nm) for nm in names]
        std = None
        if self.standardization is not None:
            std = {k: v for k, v in self.standardization.items() if k in names}
        schema = self.schema if tuple(names) == (self.schema.columns if self.schema else None) else None
        return replace(self, X=self.X[:, idx], columns=tuple(names),
                       kinds=tuple(self.kinds[i] for i in idx), schema=schema,
                       standardization=std)

    def require_events(self) -> None:
        if self.n_events < 1:
            raise ValueError("at least one instance with event = 1 is required")

    def records(self) -> list[dict[str, object]]:
        if self.schema is None or self.columns != self.schema.columns:
            raise ValueError("decoding requires the full schema column set")
        X = self.X
        if self.standardization:
            X = unstandardize(self).X
        out = []
        for i in range(self.n):
            rec = self.schema.decode(X[i])
            rec["duration"] = float(self.duration[i])
            rec["event"] = int(self.event[i])
            out.append(rec)
        return out


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(ds: Dataset, path) -> None:
    """Write ``ds`` in the load_csv layout (decoded labels, reserved columns last)."""
    header = list(ds.schema.names) + list(RESERVED)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rec in ds.records():
            w.writerow([_fmt(rec[h]) for h in header])


def load_csv(path, schema: CovariateSchema) -> Dataset:
    """Read a UTF-8 CSV file with a header row into an encoded :class:`Dataset`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise LoadError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        expected = set(schema.names) | set(RESERVED)
        missing = sorted(expected - set(header))
        if missing:
            raise LoadError(f"{path}: missing column(s) {missing}")
        extra = sorted(set(header) - expected)
        if extra:
            raise LoadError(f"{path}: unexpected column(s) {extra}")
        if len(set(header)) != len(header):
            raise LoadError(f"{path}: duplicated header names")
        pos = {h: i for i, h in enumerate(header)}
        X, dur, ev = [], [], []
        for i, row in enumerate(reader):
            if not row:
                continue
            if len(row) != len(header):
                raise LoadError(f"row {i}: expected {len(header)} cells, got {len(row)}")
            cells = {h: row[pos[h]].strip() for h in header}
            for h, v in cells.items():
                if v == "":
                    raise LoadError(f"row {i}: blank cell in column {h!r}")
            try:
                d = float(cells["duration"])
            except ValueError:
                raise LoadError(f"row {i}: unparseable duration {cells['duration']!r}") from None
            if not math.isfinite(d) or d < 0:
                raise LoadError(f"row {i}: negative or non-finite duration {cells['duration']!r}")
            if cells["event"] not in ("0", "1"):
                raise LoadError(f"row {i}: event must be 0 or 1, got {cells['event']!r}")
            try:
                X.append(schema.encode(cells))
            except ValueError as exc:
                raise LoadError(f"row {i}: {exc}") from None
            dur.append(d)
            ev.append(float(cells["event"]))
    X = np.asarray(X, dtype=float).reshape(len(dur), schema.width)
    return Dataset.from_arrays(X, dur, ev, schema=schema)


def standardize(ds: Dataset, fit_rows=None) -> Dataset:
    """Rescale continuous columns to zero mean and unit population sd.

    Statistics come from ``fit_rows`` only (all rows by default) and are
    recorded, composed with any earlier record, in ``standardization`` so
    the raw-to-standard map can be replayed with :func:`apply_standardization`.
    """
    rows = np.arange(ds.n) if fit_rows is None else np.asarray(fit_rows)
    if rows.size == 0:
        raise ValueError("fit_rows must be nonempty")
    X = np.array(ds.X)
    prev = ds.standardization or {}
    record = {}
    for j, (name, kind) in enumerate(zip(ds.columns, ds.kinds)):
        if kind != "continuous":
            continue
        col = X[rows, j]
        mu = col.mean()
        sd = col.std()
        if not sd > 0:
            raise ValueError(f"column {name!r} has zero standard deviation over fit rows")
        X[:, j] = (X[:, j] - mu) / sd
        m0, s0 = prev.get(name, (0.0, 1.0))
        record[name] = (m0 + s0 * mu, s0 * sd)
    return replace(ds, X=X, standardization=record)


def apply_standardization(ds: Dataset, record: Mapping[str, tuple[float, float]]) -> Dataset:
    """Apply a recorded raw-to-standard transform to unstandardized data."""
    X = np.array(ds.X)
    for name, (mu, sd) in record.items():
        j = ds.columns.index(name)
        X[:, j] = (X[:, j] - mu) / sd
    return replace(ds, X=X, standardization=dict(record))


def unstandardize(ds: Dataset) -> Dataset:
    X = np.array(ds.X)
    for name, (mu, sd) in (ds.standardization or {}).items():
        j = ds.columns.index(name)
        X[:, j] = X[:, j] * sd + mu
    return replace(ds, X=X, standardization=None)


def vif(ds: Dataset) -> dict[str, float]:
    """Variance inflation factor of every column.

    Exactly collinear columns (R² within 1e-12 of 1) get ``math.inf``.
    """
    X = ds.X
    n, p = X.shape
    if n < p + 1:
        raise ValueError(f"VIF needs at least {p + 1} instances, got {n}")
    for j, name in enumerate(ds.columns):
        if np.ptp(X[:, j]) == 0:
            raise ValueError(f"column {name!r} is constant")
    out = {}
    ones = np.ones((n, 1))
    for j, name in enumerate(ds.columns):
        y = X[:, j]
        A = np.hstack([ones, np.delete(X, j, axis=1)])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        ss_tot = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum(resid ** 2) / ss_tot
        out[name] = math.inf if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2)
    return out


def vif_filter(ds: Dataset, threshold: float = 10.0):
    """Drop the highest-VIF column repeatedly until all are <= ``threshold``.

    Returns the reduced dataset and the list of ``(name, vif)`` removals in
    order. Ties go to the column that comes first.
    """
    removed = []
    cur = ds
    while cur.width > 1:
        values = vif(cur)
        name = max(cur.columns, key=lambda c: (values[c], -cur.columns.index(c)))
        if values[name] <= threshold:
            break
        removed.append((name, values[name]))
        cur = cur.select([c for c in cur.columns if c != name])
    if removed:
        warnings.warn(f"VIF screening removed {[r[0] for r in removed]}", stacklevel=2)
    return cur, removed

"""Spatial and spatio-temporal datasets, CSV ingestion and train/test splits.

Locations are plain float arrays: a single location is a length-``d`` vector
and a set of ``n`` locations is an ``(n, d)`` array whose rows follow dataset
row order. Coordinates are treated as planar Euclidean values.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataError",
    "SpatialDataset",
    "StDataset",
    "CsvSchema",
    "SplitSpec",
    "as_location",
    "as_locations",
    "distance",
    "load_csv",
    "save_csv",
    "load_st_csv",
    "save_st_csv",
    "split",
    "split_indices",
]


class DataError(ValueError):
    """Raised for malformed datasets or unreadable input files."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def as_location(s) -> np.ndarray:
    """Return ``s`` as a finite 1-D float vector."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if s.ndim != 1 or s.size == 0:
        raise DataError(f"a location must be a non-empty vector, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise DataError("location coordinates must be finite")
    return s


def as_locations(locs, d: int | None = None) -> np.ndarray:
    """Return ``locs`` as an ``(n, d)`` float array.

    A 1-D input is read as ``n`` points in one dimension unless ``d`` says
    otherwise.
    """
    a = np.asarray(locs, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(1, -1) if (d is not None and d > 1 and a.size == d) else a.reshape(-1, 1)
    if a.ndim != 2:
        raise DataError(f"locations must be a 2-D array, got shape {a.shape}")
    if d is not None and a.shape[1] != d:
        raise DataError(f"expected {d}-dimensional locations, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise DataError("location coordinates must be finite")
    return a


def distance(a, b) -> float:
    """Euclidean distance between two locations of equal dimension."""
    a = as_location(a)
    b = as_location(b)
    if a.shape != b.shape:
        raise DataError(f"dimension mismatch: {a.size} vs {b.size}")
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class SpatialDataset:
    """Observations ``z`` at ``locations`` with optional covariates ``X``.

    Arrays are copied and made read-only on construction.
    """

    locations: np.ndarray
    z: np.ndarray
    covariates: np.ndarray | None = None

    def __post_init__(self):
        locs = as_locations(self.locations)
        z = np.asarray(self.z, dtype=float).reshape(-1)
        if locs.shape[0] < 1:
            raise DataError("a dataset needs at least one row")
        if z.shape[0] != locs.shape[0]:
            raise DataError(f"{locs.shape[0]} locations but {z.shape[0]} observations")
        if not np.all(np.isfinite(z)):
            raise DataError("observations must be finite")
        X = self.covariates
        if X is not None:
            X = np.asarray(X, dtype=float)
            if X.ndim == 1:
                X = X.reshape(-1, 1)
            if X.shape[0] != z.shape[0]:
                raise DataError(f"{z.shape[0]} observations but {X.shape[0]} covariate rows")
            if not np.all(np.isfinite(X)):
                raise DataError("covariates must be finite")
            X = _frozen(X)
        object.__setattr__(self, "locations", _frozen(locs))
        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "covariates", X)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def d(self) -> int:
        return self.locations.shape[1]

    @property
    def p(self) -> int:
        return 0 if self.covariates is None else self.covariates.shape[1]

    @property
    def X(self) -> np.ndarray:
        """Covariate matrix, ``(n, 0)`` when the dataset has none."""
        if self.covariates is None:
            return np.zeros((self.n, 0))
        return self.covariates

    def subset(self, idx) -> "SpatialDataset":
        idx = np.asarray(idx)
        X = None if self.covariates is None else self.covariates[idx]
        return SpatialDataset(self.locations[idx], self.z[idx], X)

    def __len__(self) -> int:
        return self.n


@dataclass(frozen=True)
class StDataset:
    """Spatial datasets indexed by time ``t = 1..T``; ``slices[t-1]`` holds time ``t``.

    A slice may be ``None`` when nothing was observed at that time.
    """

    slices: tuple

    def __post_init__(self):
        sl = tuple(self.slices)
        if len(sl) < 1:
            raise DataError("a spatio-temporal dataset needs T >= 1")
        dims = {s.d for s in sl if s is not None}
        if len(dims) > 1:
            raise DataError(f"slices disagree on spatial dimension: {sorted(dims)}")
        object.__setattr__(self, "slices", sl)

    @property
    def T(self) -> int:
        return len(self.slices)

    def n_t(self, t: int) -> int:
        s = self.slices[t - 1]
        return 0 if s is None else s.n

    def flatten(self) -> SpatialDataset:
        """Stack all slices into one dataset over ``(s, t)`` coordinates, time last."""
        locs, zs, Xs = [], [], []
        has_x = any(s is not None and s.covariates is not None for s in self.slices)
        for t, s in enumerate(self.slices, start=1):
            if s is None or s.n == 0:
                continue
            locs.append(np.column_stack([s.locations, np.full(s.n, float(t))]))
            zs.append(s.z)
            if has_x:
                if s.covariates is None:
                    raise DataError("covariates must be present in every slice or none")
                Xs.append(s.covariates)
        if not zs:
            raise DataError("no observations in any slice")
        return SpatialDataset(np.vstack(locs), np.concatenate(zs), np.vstack(Xs) if has_x else None)

    def __iter__(self):
        return iter(self.slices)


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping for CSV ingestion.

    ``intercept`` prepends an all-ones column to the covariates; it is not a
    file column.
    """

    coords: Sequence[str]
    value: str = "z"
    covariates: Sequence[str] = ()
    intercept: bool = False
    time: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(self.coords))
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if not self.coords:
            raise DataError("schema needs at least one coordinate column")


def _read_rows(path, required: Sequence[str]):
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = []
        # header is line 1
        for lineno, rec in enumerate(reader, start=2):
            vals = []
            for c in required:
                cell = rec.get(c)
                if cell is None or cell.strip() == "":
                    raise DataError(f"{path}: row {lineno}: missing value in column '{c}'")
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {lineno}: non-numeric value {cell!r} in column '{c}'"
                    ) from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {lineno}: non-finite value in column '{c}'")
                vals.append(v)
            rows.append(vals)
    if not rows:
        return np.empty((0, len(required)))
    return np.asarray(rows, dtype=float)


def _dataset_from_block(block: np.ndarray, schema: CsvSchema) -> SpatialDataset:
    nc = len(schema.coords)
    locs = block[:, :nc]
    z = block[:, nc]
    X = block[:, nc + 1:nc + 1 + len(schema.covariates)]
    if schema.intercept:
        X = np.column_stack([np.ones(block.shape[0]), X])
    return SpatialDataset(locs, z, X if X.shape[1] else None)


def load_csv(path, schema: CsvSchema) -> SpatialDataset:
    """Read a dataset from a headed CSV file, keeping file row order."""
    cols = [*schema.coords, schema.value, *schema.covariates]
    block = _read_rows(path, cols)
    if block.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    return _dataset_from_block(block, schema)


def _fmt(v: float) -> str:
    # repr round-trips float64 exactly
    return repr(float(v))


def save_csv(ds: SpatialDataset, path, schema: CsvSchema) -> None:
    """Write ``ds`` with the column names of ``schema`` (inverse of :func:`load_csv`)."""
    X = ds.X[:, 1:] if schema.intercept else ds.X
    if len(schema.coords) != ds.d or len(schema.covariates) != X.shape[1]:
        raise DataError("schema does not match dataset shape")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*schema.coords, schema.value, *schema.covariates])
        for i in range(ds.n):
            w.writerow([*map(_fmt, ds.locations[i]), _fmt(ds.z[i]), *map(_fmt, X[i])])


def load_st_csv(path, schema: CsvSchema) -> StDataset:
    """Read a spatio-temporal dataset; ``schema.time`` names an integer column ``t >= 1``."""
    if schema.time is None:
        raise DataError("schema.time must name the time column")
    cols = [*schema.coords, schema.value, *schema.covariates, schema.time]
    block = _read_rows(path, cols)
    if block.shape[0] == 0:
        raise DataError(f"{path}: no data rows")
    t = block[:, -1]
    if np.any(t != np.round(t)) or np.any(t < 1):
        raise DataError(f"{path}: time column must hold integers >= 1")
    t = t.astype(int)
    slices = []
    for tt in range(1, int(t.max()) + 1):
        rows = block[t == tt, :-1]
        slices.append(_dataset_from_block(rows, schema) if rows.shape[0] else None)
    return StDataset(tuple(slices))


def save_st_csv(st: StDataset, path, schema: CsvSchema) -> None:
    if schema.time is None:
        raise DataError("schema.time must name the time column")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([*schema.coords, schema.value, *schema.covariates, schema.time])
        for t, s in enumerate(st.slices, start=1):
            if s is None:
                continue
            X = s.X[:, 1:] if schema.intercept else s.X
            for i in range(s.n):
                w.writerow([*map(_fmt, s.locations[i]), _fmt(s.z[i]), *map(_fmt, X[i]), str(t)])


@dataclass(frozen=True)
class SplitSpec:
    fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.fraction < 1.0:
            raise DataError(f"held-out fraction must lie in (0, 1), got {self.fraction}")
        if self.seed < 0:
            raise DataError("seed must be a non-negative integer")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    """Sorted (train, test) row indices; ``len(test) == round(fraction * n)``.

    The test size is clipped to ``[1, n - 1]`` so neither part is empty.
    """
    if n < 2:
        raise DataError("need at least two rows to split")
    n_test = int(math.floor(spec.fraction * n + 0.5))
    n_test = min(max(n_test, 1), n - 1)
    perm = np.random.default_rng(spec.seed).permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split(ds: SpatialDataset, spec: SplitSpec) -> tuple[SpatialDataset, SpatialDataset]:
    """Deterministic random partition of ``ds`` into (train, test), row order kept."""
    tr, te = split_indices(ds.n, spec)
    return ds.subset(tr), ds.subset(te)

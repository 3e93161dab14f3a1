"""Bisquare basis functions, multiresolution layouts and design matrices.

A bisquare function with centre ``c`` and aperture ``w`` is

    phi(s) = (1 - (|s - c| / w)**2)**2   if |s - c| <= w, else 0

which is compactly supported, continuous, and takes values in [0, 1].
Space-time functions are tensor products of a spatial and a temporal
bisquare; for those the time coordinate is the last column of a location.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from .data import DataError, SpatialDataset, as_location, as_locations

__all__ = [
    "BisquareFn",
    "TensorStFn",
    "BasisSet",
    "Resolution",
    "MultiResSpec",
    "bisquare_eval",
    "build_multires",
    "design_matrix",
    "tensor_st_basis",
    "save_basis",
    "load_basis",
]


@dataclass(frozen=True, eq=False)
class BisquareFn:
    center: np.ndarray
    aperture: float
    resolution: int = 0

    def __post_init__(self):
        c = as_location(self.center).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not (np.isfinite(self.aperture) and self.aperture > 0):
            raise ValueError(f"aperture must be positive, got {self.aperture}")
        object.__setattr__(self, "aperture", float(self.aperture))

    @property
    def dim(self) -> int:
        return self.center.size

    def __call__(self, s) -> float:
        return bisquare_eval(self, s)


@dataclass(frozen=True, eq=False)
class TensorStFn:
    """Product of a spatial bisquare and a temporal (1-D) bisquare."""

    spatial: BisquareFn
    temporal: BisquareFn

    def __post_init__(self):
        if self.temporal.dim != 1:
            raise ValueError("the temporal factor must be one-dimensional")

    @property
    def dim(self) -> int:
        return self.spatial.dim + 1

    @property
    def resolution(self) -> int:
        return self.spatial.resolution

    @property
    def center(self) -> np.ndarray:
        return np.concatenate([self.spatial.center, self.temporal.center])

    def __call__(self, s) -> float:
        s = as_location(s)
        if s.size != self.dim:
            raise DataError(f"dimension mismatch: {s.size} vs {self.dim}")
        return self.spatial(s[:-1]) * self.temporal(s[-1:])


BasisFn = Union[BisquareFn, TensorStFn]


def bisquare_eval(f: BisquareFn, s) -> float:
    s = as_location(s)
    if s.size != f.dim:
        raise DataError(f"dimension mismatch: {s.size} vs {f.dim}")
    d = np.linalg.norm(s - f.center)
    if d > f.aperture:
        return 0.0
    return float((1.0 - (d / f.aperture) ** 2) ** 2)


def _bisquare_block(centers: np.ndarray, apertures: np.ndarray, locs: np.ndarray) -> sparse.csc_matrix:
    """Sparse ``(n, m)`` matrix of bisquare values for columns sharing no structure."""
    n, m = locs.shape[0], centers.shape[0]
    rows, cols, vals = [], [], []
    tree_x = cKDTree(locs)
    for w in np.unique(apertures):
        (idx,) = np.nonzero(apertures == w)
        pairs = cKDTree(centers[idx]).sparse_distance_matrix(tree_x, w, output_type="ndarray")
        if pairs.size == 0:
            continue
        u = pairs["v"] / w
        keep = u < 1.0
        rows.append(pairs["j"][keep])
        cols.append(idx[pairs["i"][keep]])
        vals.append((1.0 - u[keep] ** 2) ** 2)
    if not rows:
        return sparse.csc_matrix((n, m))
    out = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, m)
    )
    return out.tocsc()


class BasisSet:
    """Ordered, immutable collection of ``r`` basis functions.

    All functions are either spatial bisquares or space-time tensor products;
    mixing the two kinds is not supported.
    """

    def __init__(self, functions: Sequence[BasisFn]):
        fns = tuple(functions)
        if not fns:
            raise ValueError("a basis needs at least one function")
        kinds = {type(f) for f in fns}
        if len(kinds) != 1:
            raise ValueError("cannot mix spatial and space-time functions in one basis")
        dims = {f.dim for f in fns}
        if len(dims) != 1:
            raise ValueError(f"functions disagree on dimension: {sorted(dims)}")
        self._fns = fns
        self.dim = dims.pop()
        self.is_tensor = kinds.pop() is TensorStFn
        if self.is_tensor:
            sp = [f.spatial for f in fns]
            tm = [f.temporal for f in fns]
            self._sp = (np.array([f.center for f in sp]), np.array([f.aperture for f in sp]))
            self._tm = (np.array([f.center for f in tm]), np.array([f.aperture for f in tm]))
        else:
            self._sp = (np.array([f.center for f in fns]), np.array([f.aperture for f in fns]))
            self._tm = None
        self.resolutions = np.array([f.resolution for f in fns], dtype=int)
        self.resolutions.setflags(write=False)

    @property
    def r(self) -> int:
        return len(self._fns)

    def __len__(self) -> int:
        return len(self._fns)

    def __getitem__(self, j) -> BasisFn:
        return self._fns[j]

    def __iter__(self):
        return iter(self._fns)

    @property
    def functions(self) -> tuple:
        return self._fns

    @property
    def centers(self) -> np.ndarray:
        """``(r, dim)`` centres; space-time centres append the temporal centre."""
        if self.is_tensor:
            return np.column_stack([self._sp[0], self._tm[0]])
        return self._sp[0]

    @property
    def apertures(self) -> np.ndarray:
        return self._sp[1]

    def evaluate(self, locs) -> sparse.csr_matrix:
        """Sparse ``(n, r)`` matrix with entry ``[i, j] = phi_j(locs[i])``."""
        locs = as_locations(locs, self.dim)
        if not self.is_tensor:
            return _bisquare_block(*self._sp, locs).tocsr()
        ps = _bisquare_block(*self._sp, locs[:, :-1])
        pt = _bisquare_block(*self._tm, locs[:, -1:])
        return ps.multiply(pt).tocsr()

    def phi(self, s) -> np.ndarray:
        """Dense vector ``phi(s)`` for a single location."""
        s = as_location(s)
        return self.evaluate(s.reshape(1, -1)).toarray().ravel()

    def __repr__(self) -> str:
        kind = "tensor" if self.is_tensor else "bisquare"
        return f"BasisSet(r={self.r}, dim={self.dim}, kind={kind})"


def design_matrix(basis: BasisSet, ds: SpatialDataset | np.ndarray) -> sparse.csr_matrix:
    """The ``(n, r)`` basis matrix for a dataset (or raw location array)."""
    locs = ds.locations if isinstance(ds, SpatialDataset) else ds
    return basis.evaluate(locs)


@dataclass(frozen=True)
class Resolution:
    """One regular grid of centres: ``counts[a]`` centres along axis ``a``."""

    counts: tuple
    ratio: float = 1.5

    def __post_init__(self):
        counts = tuple(int(c) for c in np.atleast_1d(self.counts))
        if not counts or min(counts) < 1:
            raise ValueError(f"grid counts must be >= 1, got {counts}")
        if not self.ratio > 0:
            raise ValueError("aperture ratio must be positive")
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class MultiResSpec:
    """Multiresolution layout over the box ``[lower, upper]``.

    Centres of a resolution sit at the midpoints of a regular grid of cells;
    with ``extend`` one extra centre is placed beyond each side of the box.
    """

    resolutions: tuple
    lower: tuple
    upper: tuple
    extend: bool = False

    def __post_init__(self):
        res = tuple(
            r if isinstance(r, Resolution) else Resolution(**r) if isinstance(r, dict) else Resolution(r)
            for r in self.resolutions
        )
        if not res:
            raise ValueError("at least one resolution is required")
        lo = tuple(float(x) for x in np.atleast_1d(self.lower))
        hi = tuple(float(x) for x in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise ValueError("bounding box corners differ in dimension")
        if any(not (h > l) for l, h in zip(lo, hi)):
            raise ValueError(f"empty bounding box: lower={lo}, upper={hi}")
        for r in res:
            if len(r.counts) != len(lo):
                raise ValueError(f"grid counts {r.counts} do not match dimension {len(lo)}")
        object.__setattr__(self, "resolutions", res)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def build_multires(spec: MultiResSpec) -> BasisSet:
    """Bisquares on regular grids, ordered coarse to fine then by grid index.

    The aperture of a resolution is ``ratio`` times its smallest per-axis
    centre spacing.
    """
    lo = np.array(spec.lower)
    hi = np.array(spec.upper)
    fns = []
    for level, res in enumerate(spec.resolutions):
        h = (hi - lo) / np.array(res.counts)
        axes = []
        for a, m in enumerate(res.counts):
            k = np.arange(-1, m + 1) if spec.extend else np.arange(m)
            axes.append(lo[a] + h[a] * (k + 0.5))
        w = res.ratio * h.min()
        for c in itertools.product(*axes):
            fns.append(BisquareFn(np.array(c), w, level))
    return BasisSet(fns)


def tensor_st_basis(spatial: BasisSet, temporal: BasisSet) -> BasisSet:
    """Tensor product basis ordered ``a1 b1, ..., a1 bl, ..., ak bl``."""
    if spatial.is_tensor or temporal.is_tensor:
        raise ValueError("tensor factors must be plain bisquare bases")
    if temporal.dim != 1:
        raise ValueError("the temporal basis must be one-dimensional")
    return BasisSet([TensorStFn(a, b) for a in spatial for b in temporal])


def _fn_record(f: BisquareFn) -> dict:
    return {"type": "bisquare", "resolution": int(f.resolution),
            "center": [float(x) for x in f.center], "aperture": f.aperture}


def _fn_from_record(rec: dict) -> BisquareFn:
    return BisquareFn(np.array(rec["center"], dtype=float), rec["aperture"], rec.get("resolution", 0))


def save_basis(basis: BasisSet, path) -> None:
    """One JSON record per line: type, resolution, centre, aperture."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for f in basis:
            if isinstance(f, TensorStFn):
                rec = {"type": "tensor", "resolution": int(f.resolution),
                       "spatial": _fn_record(f.spatial), "temporal": _fn_record(f.temporal)}
            else:
                rec = _fn_record(f)
            fh.write(json.dumps(rec) + "\n")


def load_basis(path) -> BasisSet:
    fns = []
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            kind = rec.get("type")
            if kind == "bisquare":
                fns.append(_fn_from_record(rec))
            elif kind == "tensor":
                fns.append(TensorStFn(_fn_from_record(rec["spatial"]), _fn_from_record(rec["temporal"])))
            else:
                raise DataError(f"{path}: line {lineno}: unknown basis type {kind!r}")
    return BasisSet(fns)

"""Rectangular tensor grids, multilinear interpolation and gradients.

A :class:`RectGrid` is a uniform tensor grid on a box in 1-3 dimensions.
A :class:`ValueField` holds one value per node (row-major, last axis fastest)
together with the discount rate it was solved for.  Value fields can be
persisted in a small little-endian binary format (magic ``HJBV1``).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from . import _backend

__all__ = [
    "RectGrid",
    "ValueField",
    "interpolate",
    "interpolate_many",
    "gradient",
    "gradient_many",
    "clamp_to_box",
    "save_value_field",
    "load_value_field",
    "read_value_header",
    "DEFAULT_NODE_CAP",
    "MAGIC",
]

DEFAULT_NODE_CAP = 20_000_000
MAGIC = b"HJBV1"
# Points this far (relative to the box width) outside the box are still
# accepted and treated as boundary points; this absorbs round-off only.
_BOX_SLACK = 1e-12


@dataclass(frozen=True)
class RectGrid:
    """Uniform tensor grid on the box ``[lower, upper]``.

    Parameters
    ----------
    lower, upper : sequences of float
        Box bounds per axis (``lower[i] < upper[i]``).
    nodes : sequence of int
        Node count per axis, at least 3.
    node_cap : int
        Upper bound on the total node count.
    """

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    nodes: Tuple[int, ...]
    node_cap: int = DEFAULT_NODE_CAP

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        nd = tuple(int(v) for v in np.atleast_1d(self.nodes))
        if not (len(lo) == len(hi) == len(nd)):
            raise ValueError("lower, upper and nodes must have the same length")
        if not 1 <= len(lo) <= 3:
            raise ValueError("grids are supported in dimensions 1-3")
        if any(not (a < b) for a, b in zip(lo, hi)):
            raise ValueError("each axis needs lower < upper")
        if any(not np.isfinite(v) for v in lo + hi):
            raise ValueError("box bounds must be finite")
        if any(n < 3 for n in nd):
            raise ValueError("each axis needs at least 3 nodes")
        if int(np.prod(nd, dtype=np.int64)) > self.node_cap:
            raise ValueError(f"grid has more than {self.node_cap} nodes")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "nodes", nd)

    @property
    def dim(self) -> int:
        return len(self.nodes)

    @property
    def h(self) -> np.ndarray:
        """Spacing per axis."""
        return np.array([(b - a) / (n - 1) for a, b, n in zip(self.lower, self.upper, self.nodes)])

    @property
    def h_max(self) -> float:
        return float(np.max(self.h))

    @property
    def h_min(self) -> float:
        return float(np.min(self.h))

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.upper) - np.asarray(self.lower)

    def axes(self):
        """List of 1-D node coordinate arrays."""
        return [np.linspace(a, b, n) for a, b, n in zip(self.lower, self.upper, self.nodes)]

    def points(self) -> np.ndarray:
        """All node coordinates, shape (size, dim), row-major order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def interior_mask(self, cells: int = 3) -> np.ndarray:
        """Boolean mask of nodes at least ``cells`` cells from every face."""
        masks = []
        for n in self.nodes:
            i = np.arange(n)
            masks.append((i >= cells) & (i <= n - 1 - cells))
        mesh = np.meshgrid(*masks, indexing="ij")
        out = np.ones(self.shape, dtype=bool)
        for m in mesh:
            out &= m
        return out.ravel()

    def contains(self, x, slack_cells: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        tol = self.widths * _BOX_SLACK + slack_cells * self.h
        return bool(np.all(x >= np.asarray(self.lower) - tol) and np.all(x <= np.asarray(self.upper) + tol))

    def halved(self) -> "RectGrid":
        """Grid with (roughly) half the resolution per axis."""
        return RectGrid(self.lower, self.upper, tuple(max(3, (n - 1) // 2 + 1) for n in self.nodes),
                        self.node_cap)

    def _params(self):
        return (np.ascontiguousarray(self.lower, dtype=float), self.h,
                np.ascontiguousarray(self.nodes, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class ValueField:
    """Grid samples of a value function.

    ``values`` is stored flat in row-major order and made read-only, so a
    field can be shared between threads.  ``meta`` records provenance
    (objective name, iterations, achieved tolerance, ...).
    """

    grid: RectGrid
    values: np.ndarray
    lam: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, copy=True).ravel()
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("value field contains non-finite entries")
        if not self.lam > 0:
            raise ValueError("discount rate must be positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lam", float(self.lam))

    @property
    def dim(self) -> int:
        return self.grid.dim

    def as_array(self) -> np.ndarray:
        """Values reshaped to the grid shape (read-only view)."""
        return self.values.reshape(self.grid.shape)

    def __call__(self, x):
        return interpolate(self, x)


def clamp_to_box(grid: RectGrid, x) -> np.ndarray:
    """Componentwise clamp of ``x`` (single point or batch) to the grid box."""
    return np.clip(np.asarray(x, dtype=float), np.asarray(grid.lower), np.asarray(grid.upper))


def _check_inside(grid: RectGrid, X: np.ndarray):
    lo, hi = np.asarray(grid.lower), np.asarray(grid.upper)
    tol = grid.widths * _BOX_SLACK
    if np.any(X < lo - tol) or np.any(X > hi + tol) or not np.all(np.isfinite(X)):
        bad = X[np.any((X < lo - tol) | (X > hi + tol) | ~np.isfinite(X), axis=1)][0]
        raise ValueError(f"point {bad.tolist()} lies outside the grid box")
    return np.clip(X, lo, hi)


def _batch(vf, x):
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    X = np.ascontiguousarray(X.reshape(1, -1) if single else X)
    if X.shape[1] != vf.dim:
        raise ValueError("point dimension does not match the grid")
    return X, single


def interpolate_many(vf: ValueField, X) -> np.ndarray:
    """Multilinear interpolation at a batch of points (shape (N, dim))."""
    X, _ = _batch(vf, X)
    X = _check_inside(vf.grid, X)
    lo, h, nodes = vf.grid._params()
    return _backend.kernels.interp_many(vf.values, lo, h, nodes, X)


def interpolate(vf: ValueField, x):
    """Multilinear interpolation at a point; raises outside the box.

    Accepts a single point (returns a float) or a batch (returns an array).
    """
    X, single = _batch(vf, x)
    out = interpolate_many(vf, X)
    return float(out[0]) if single else out


def gradient_many(vf: ValueField, X) -> np.ndarray:
    """Finite-difference gradient of the interpolant at a batch of points.

    Central differences with step ``h_i`` along axis ``i``; within ``h_i`` of
    a face the difference is one-sided (pointing into the box).
    """
    X, _ = _batch(vf, X)
    X = _check_inside(vf.grid, X)
    lo = np.asarray(vf.grid.lower)
    hi = np.asarray(vf.grid.upper)
    h = vf.grid.h
    N, d = X.shape
    G = np.empty((N, d))
    for i in range(d):
        xp = X.copy()
        xm = X.copy()
        fwd = X[:, i] + h[i]
        bwd = X[:, i] - h[i]
        near_lo = bwd < lo[i]
        near_hi = fwd > hi[i]
        xp[:, i] = np.where(near_hi, X[:, i], fwd)
        xm[:, i] = np.where(near_lo, X[:, i], bwd)
        # Degenerate (a single cell axis) cannot happen: nodes >= 3.
        vals = interpolate_many(vf, np.concatenate([xp, xm], axis=0))
        span = xp[:, i] - xm[:, i]
        G[:, i] = (vals[:N] - vals[N:]) / span
    return G


def gradient(vf: ValueField, x):
    """Gradient of the interpolated field at ``x`` (see :func:`gradient_many`)."""
    X, single = _batch(vf, x)
    G = gradient_many(vf, X)
    return G[0] if single else G


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _header_bytes(grid: RectGrid, lam: float) -> bytes:
    parts = [MAGIC, struct.pack("<B", grid.dim)]
    for a, b, n in zip(grid.lower, grid.upper, grid.nodes):
        parts.append(struct.pack("<ddQ", a, b, n))
    parts.append(struct.pack("<d", lam))
    return b"".join(parts)


def save_value_field(path, vf: ValueField) -> None:
    """Write ``vf`` in the HJBV1 binary format."""
    with open(path, "wb") as fh:
        fh.write(_header_bytes(vf.grid, vf.lam))
        fh.write(np.ascontiguousarray(vf.values, dtype="<f8").tobytes())


def read_value_header(path):
    """Read only the header: returns ``(RectGrid, lam, header_size)``."""
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != MAGIC:
            raise ValueError("not an HJBV1 value file (bad magic)")
        raw = fh.read(1)
        if len(raw) != 1:
            raise ValueError("truncated value file")
        (dim,) = struct.unpack("<B", raw)
        if not 1 <= dim <= 3:
            raise ValueError(f"invalid dimension {dim} in value file")
        lo, hi, nd = [], [], []
        for _ in range(dim):
            raw = fh.read(24)
            if len(raw) != 24:
                raise ValueError("truncated value file")
            a, b, n = struct.unpack("<ddQ", raw)
            lo.append(a)
            hi.append(b)
            nd.append(n)
        raw = fh.read(8)
        if len(raw) != 8:
            raise ValueError("truncated value file")
        (lam,) = struct.unpack("<d", raw)
    grid = RectGrid(tuple(lo), tuple(hi), tuple(nd))
    return grid, lam, 5 + 1 + 24 * dim + 8


def load_value_field(path) -> ValueField:
    """Read a value field written by :func:`save_value_field`."""
    grid, lam, offset = read_value_header(path)
    with open(path, "rb") as fh:
        fh.seek(offset)
        raw = fh.read()
    if len(raw) != 8 * grid.size:
        raise ValueError("value file payload size does not match its header")
    values = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return ValueField(grid, values, lam, meta={"source": str(path)})

"""Built-in objectives with exact minimizer-set geometry.

Every objective carries a :class:`MinimizerSet` that knows how to compute the
Euclidean distance from a point to the set of global minimizers, a nearest
point (projection) and the subgradient of the squared distance.  The sets are
always clipped to the computational box, so they are compact.

All distance routines are vectorised: they accept either a single point of
shape ``(n,)`` or a batch of shape ``(N, n)``.

Projection ties (points that are equidistant from several nearest points) are
broken by choosing the lexicographically smallest candidate, which keeps all
downstream computations deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

__all__ = [
    "MinimizerSet",
    "FinitePoints",
    "AffineDiagonal",
    "AxisLattice",
    "ProductHyperbola",
    "ObjectiveSpec",
    "distance",
    "sq_dist_subgradient",
    "builtin_objective",
    "estimate_quadratic_growth",
    "growth_ratio_scan",
    "BUILTIN_NAMES",
]

# Relative tolerance used to decide that two candidate distances are tied.
_TIE_RTOL = 1e-12
_TIE_ATOL = 1e-14


def _as_batch(x, dim):
    """Return ``(X, single)`` with ``X`` of shape (N, dim)."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim <= 1
    X = np.atleast_2d(arr.reshape(1, -1) if single else arr)
    if X.shape[1] != dim:
        raise ValueError(f"point dimension {X.shape[1]} does not match set dimension {dim}")
    return X, single


def _lex_pick(cand_d, cand_p):
    """Choose, per row, the nearest candidate with lexicographic tie-break.

    Parameters
    ----------
    cand_d : (N, m) array of candidate distances (``inf`` for invalid ones)
    cand_p : (N, m, n) array of candidate points

    Returns
    -------
    (d, p) with shapes (N,) and (N, n)
    """
    N, m, n = cand_p.shape
    dmin = cand_d.min(axis=1)
    tied = cand_d <= dmin[:, None] * (1.0 + _TIE_RTOL) + _TIE_ATOL
    # Sort candidates lexicographically (first coordinate most significant) and
    # pick the first tied one.
    keys = [cand_p[:, :, k] for k in range(n - 1, -1, -1)]
    order = np.lexsort(keys, axis=1) if n > 0 else np.zeros((N, m), dtype=int)
    tied_sorted = np.take_along_axis(tied, order, axis=1)
    first = np.argmax(tied_sorted, axis=1)
    idx = order[np.arange(N), first]
    p = cand_p[np.arange(N), idx]
    return dmin, p


class MinimizerSet:
    """Base class for minimizer-set geometries.

    Subclasses implement :meth:`project_batch`, returning the distances and
    the (tie-broken) projections of a batch of points.
    """

    dim: int

    def project_batch(self, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def project(self, x):
        """Distance and projection for a single point or a batch."""
        X, single = _as_batch(x, self.dim)
        if not np.all(np.isfinite(X)):
            raise ValueError("points must be finite")
        d, p = self.project_batch(X)
        if single:
            return float(d[0]), p[0]
        return d, p

    def dist(self, x):
        """Distance only (single point or batch)."""
        return self.project(x)[0]

    def representatives(self) -> np.ndarray:
        """A finite list of points of the set (shape (m, dim))."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class FinitePoints(MinimizerSet):
    """A finite collection of points ``{p_1, ..., p_m}``."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ValueError("FinitePoints needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        # Store lexicographically sorted so ties resolve to the smallest point.
        order = np.lexsort(pts.T[::-1])
        pts = np.ascontiguousarray(pts[order])
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def project_batch(self, X):
        diff = X[:, None, :] - self.points[None, :, :]
        d = np.sqrt(np.einsum("nmk,nmk->nm", diff, diff))
        dmin = d.min(axis=1)
        tied = d <= dmin[:, None] * (1.0 + _TIE_RTOL) + _TIE_ATOL
        idx = np.argmax(tied, axis=1)
        return dmin, self.points[idx].copy()

    def representatives(self):
        return self.points.copy()

    def to_dict(self):
        return {"kind": "points", "points": self.points.tolist()}


@dataclass(frozen=True, eq=False)
class AffineDiagonal(MinimizerSet):
    """The diagonal line ``{x1 = x2}`` in the plane, clipped to a box."""

    lower: Tuple[float, float] = (-2.0, -2.0)
    upper: Tuple[float, float] = (2.0, 2.0)

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != 2 or len(hi) != 2:
            raise ValueError("AffineDiagonal lives in the plane")
        s0, s1 = max(lo), min(hi)
        if s0 > s1:
            raise ValueError("diagonal does not meet the box")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    dim = 2

    @property
    def segment(self) -> Tuple[float, float]:
        return max(self.lower), min(self.upper)

    def project_batch(self, X):
        s0, s1 = self.segment
        m = np.clip(0.5 * (X[:, 0] + X[:, 1]), s0, s1)
        p = np.stack([m, m], axis=1)
        d = np.linalg.norm(X - p, axis=1)
        return d, p

    def representatives(self):
        s0, s1 = self.segment
        t = np.linspace(s0, s1, 9)
        return np.stack([t, t], axis=1)

    def to_dict(self):
        return {"kind": "diagonal", "lower": list(self.lower), "upper": list(self.upper)}


@dataclass(frozen=True, eq=False)
class AxisLattice(MinimizerSet):
    """Product lattice ``(period * Z)^n`` restricted to a box."""

    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    period: float = 2.0 * math.pi

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or not lo:
            raise ValueError("lower/upper length mismatch")
        if self.period <= 0:
            raise ValueError("period must be positive")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        for a, b in zip(lo, hi):
            if self._axis_points(a, b).size == 0:
                raise ValueError("lattice has no point inside the box")

    def _axis_points(self, a, b):
        k0 = math.ceil(a / self.period - 1e-12)
        k1 = math.floor(b / self.period + 1e-12)
        return self.period * np.arange(k0, k1 + 1, dtype=float)

    @property
    def dim(self) -> int:
        return len(self.lower)

    def project_batch(self, X):
        P = np.empty_like(X)
        for k in range(self.dim):
            pts = self._axis_points(self.lower[k], self.upper[k])
            dk = np.abs(X[:, k][:, None] - pts[None, :])
            dmin = dk.min(axis=1)
            tied = dk <= dmin[:, None] * (1.0 + _TIE_RTOL) + _TIE_ATOL
            # pts is increasing, so the first tied entry is the smallest.
            P[:, k] = pts[np.argmax(tied, axis=1)]
        d = np.linalg.norm(X - P, axis=1)
        return d, P

    def representatives(self):
        axes = [self._axis_points(a, b) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def to_dict(self):
        return {"kind": "lattice", "lower": list(self.lower), "upper": list(self.upper),
                "period": self.period}


@dataclass(frozen=True, eq=False)
class ProductHyperbola(MinimizerSet):
    """The hyperbola ``{x1 * x2 = 1}`` clipped to a planar box.

    Points of the set are parametrised as ``(t, 1/t)``.  The squared distance
    ``(t - x1)^2 + (1/t - x2)^2`` is stationary where
    ``t^4 - x1 t^3 + x2 t - 1 = 0``; its real roots on each admissible branch
    interval, together with the interval endpoints, are the candidates.
    """

    lower: Tuple[float, float] = (-2.0, -2.0)
    upper: Tuple[float, float] = (2.0, 2.0)
    t_min: float = 1e-3
    t_max: float = 1e3

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not self.branches:
            raise ValueError("hyperbola does not meet the box")

    dim = 2

    @property
    def branches(self):
        """Admissible parameter intervals ``[a, b]`` (one per branch)."""
        out = []
        (l1, l2), (u1, u2) = self.lower, self.upper
        # positive branch: t > 0 and 1/t > 0
        if u1 > 0 and u2 > 0:
            a = max(l1, self.t_min, 1.0 / u2)
            b = min(u1, self.t_max, (1.0 / l2) if l2 > 0 else math.inf)
            if a <= b:
                out.append((a, b))
        # negative branch: t < 0 and 1/t < 0, i.e. s = -t > 0 with -1/s in [l2, u2]
        if l1 < 0 and l2 < 0:
            # t in [l1, min(u1, 0)], 1/t in [l2, min(u2, 0)]
            # 1/t >= l2  <=> t <= 1/l2 ; 1/t <= u2 (<0) <=> t >= 1/u2
            a = max(l1, -self.t_max, (1.0 / u2) if u2 < 0 else -math.inf)
            b = min(u1, -self.t_min, 1.0 / l2)
            if a <= b:
                out.append((a, b))
        return out

    def project_batch(self, X):
        N = X.shape[0]
        x1, x2 = X[:, 0], X[:, 1]
        # Companion matrices for t^4 - x1 t^3 + 0 t^2 + x2 t - 1.
        comp = np.zeros((N, 4, 4))
        comp[:, 0, 0] = x1
        comp[:, 0, 1] = 0.0
        comp[:, 0, 2] = -x2
        comp[:, 0, 3] = 1.0
        comp[:, 1, 0] = 1.0
        comp[:, 2, 1] = 1.0
        comp[:, 3, 2] = 1.0
        roots = np.linalg.eigvals(comp)
        real = np.abs(roots.imag) <= 1e-7 * (1.0 + np.abs(roots.real))
        r = roots.real
        cands = [r]
        valid = [real]
        for a, b in self.branches:
            cands.append(np.full((N, 1), a))
            cands.append(np.full((N, 1), b))
            valid.append(np.ones((N, 1), bool))
            valid.append(np.ones((N, 1), bool))
        T = np.concatenate(cands, axis=1)
        V = np.concatenate(valid, axis=1)
        inside = np.zeros_like(V)
        for a, b in self.branches:
            inside |= (T >= a) & (T <= b)
        V &= inside
        # One Newton polish step on the stationarity equation for accuracy.
        with np.errstate(divide="ignore", invalid="ignore"):
            Tsafe = np.where(V, T, 1.0)
            g = Tsafe ** 4 - x1[:, None] * Tsafe ** 3 + x2[:, None] * Tsafe - 1.0
            dg = 4 * Tsafe ** 3 - 3 * x1[:, None] * Tsafe ** 2 + x2[:, None]
            step = np.where(np.abs(dg) > 1e-300, g / dg, 0.0)
            Tn = Tsafe - step
        ok = V & np.isfinite(Tn)
        ok[:, 4:] = False  # branch endpoints are exact candidates; never move them
        inside_n = np.zeros_like(ok)
        for a, b in self.branches:
            inside_n |= (Tn >= a) & (Tn <= b)
        T = np.where(ok & inside_n, Tn, Tsafe)
        P = np.stack([T, 1.0 / T], axis=2)
        D = np.sqrt((P[:, :, 0] - x1[:, None]) ** 2 + (P[:, :, 1] - x2[:, None]) ** 2)
        D = np.where(V, D, np.inf)
        return _lex_pick(D, P)

    def representatives(self):
        pts = []
        for a, b in self.branches:
            t = np.linspace(a, b, 9)
            pts.append(np.stack([t, 1.0 / t], axis=1))
        return np.concatenate(pts, axis=0)

    def to_dict(self):
        return {"kind": "hyperbola", "lower": list(self.lower), "upper": list(self.upper)}


def distance(set_: MinimizerSet, x):
    """Return ``(dist, proj)`` from ``x`` to the set.

    Works on a single point (returns a float and a vector) or a batch of
    points of shape (N, n) (returns two arrays).
    """
    return set_.project(x)


def sq_dist_subgradient(set_: MinimizerSet, x):
    """Subgradient ``x - proj(x)`` of ``0.5 * dist(x)^2``."""
    arr = np.asarray(x, dtype=float)
    _, p = set_.project(arr)
    return arr - p


# ---------------------------------------------------------------------------
# Objectives
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ObjectiveSpec:
    """An objective on a box, with its minimum value and minimizer set.

    ``func`` is the raw vectorised formula (rows are points); evaluation
    through :meth:`__call__` truncates at ``f_max``.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    f_min: float
    f_max: float
    minimizers: MinimizerSet
    lower: Tuple[float, ...]
    upper: Tuple[float, ...]
    known_growth: Optional[Tuple[float, float, Optional[float]]] = None
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        X, single = _as_batch(x, self.dim)
        v = np.minimum(np.asarray(self.func(X), dtype=float), self.f_max)
        return float(v[0]) if single else v

    evaluate = __call__

    def shifted(self, x):
        """``f(x) - f_min``."""
        return self(x) - self.f_min

    @property
    def sup_norm(self) -> float:
        """``||f||_inf`` on the box (after truncation)."""
        return max(abs(self.f_min), abs(self.f_max))

    def box_contains(self, x, slack=0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.asarray(self.lower) - slack)
                    and np.all(x <= np.asarray(self.upper) + slack))


def _box_scan_max(func, lower, upper, per_axis):
    axes = [np.linspace(a, b, per_axis) for a, b in zip(lower, upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    return float(np.max(func(pts)))


def _make(name, func, lower, upper, f_min, minimizers, f_max=None,
          known_growth=None, params=None):
    lower = tuple(float(v) for v in np.atleast_1d(lower))
    upper = tuple(float(v) for v in np.atleast_1d(upper))
    if len(lower) != len(upper):
        raise ValueError("lower/upper length mismatch")
    if any(a >= b for a, b in zip(lower, upper)):
        raise ValueError("box must satisfy lower < upper")
    dim = len(lower)
    if not 1 <= dim <= 3:
        raise ValueError("objectives are supported in dimensions 1-3")
    if minimizers.dim != dim:
        raise ValueError("minimizer set dimension mismatch")
    reps = minimizers.representatives()
    lo, hi = np.asarray(lower), np.asarray(upper)
    if np.any(reps < lo - 1e-12) or np.any(reps > hi + 1e-12):
        raise ValueError("minimizers must lie inside the box")
    if f_max is None:
        per_axis = {1: 20001, 2: 401, 3: 61}[dim]
        f_max = _box_scan_max(func, lower, upper, per_axis)
        f_max = max(f_max, f_min)
    f_max = float(f_max)
    if f_max < f_min:
        raise ValueError("truncation level below the minimum")
    return ObjectiveSpec(name=name, func=func, dim=dim, f_min=float(f_min), f_max=f_max,
                         minimizers=minimizers, lower=lower, upper=upper,
                         known_growth=known_growth, params=dict(params or {}))


def minimizer_set_from_dict(spec: dict, lower, upper) -> MinimizerSet:
    """Build a minimizer set from a plain mapping (used by configs)."""
    kind = spec.get("kind", "points")
    if kind == "points":
        return FinitePoints(np.asarray(spec["points"], dtype=float))
    if kind == "diagonal":
        return AffineDiagonal(tuple(lower), tuple(upper))
    if kind == "lattice":
        return AxisLattice(tuple(lower), tuple(upper), float(spec.get("period", 2 * math.pi)))
    if kind == "hyperbola":
        return ProductHyperbola(tuple(lower), tuple(upper))
    raise ValueError(f"unknown minimizer set kind {kind!r}")


def _box(params, default_lo, default_hi):
    lo = params.get("lower", default_lo)
    hi = params.get("upper", default_hi)
    return tuple(float(v) for v in np.atleast_1d(lo)), tuple(float(v) for v in np.atleast_1d(hi))


def _quadratic(params):
    Q = np.asarray(params.get("Q", [[2.0, 0.5], [0.5, 1.0]]), dtype=float)
    n = Q.shape[0]
    b = np.asarray(params.get("b", np.zeros(n)), dtype=float).reshape(n)
    c0 = float(params.get("c0", 0.0))
    if Q.shape != (n, n) or not np.allclose(Q, Q.T):
        raise ValueError("Q must be a symmetric square matrix")
    eig = np.linalg.eigvalsh(Q)
    if eig.min() <= 0:
        raise ValueError("Q must be positive definite")
    lower, upper = _box(params, [-2.0] * n, [2.0] * n)
    xstar = -np.linalg.solve(Q, b)
    f_min = c0 - 0.5 * float(b @ np.linalg.solve(Q, b))

    def func(X):
        return 0.5 * np.einsum("ni,ij,nj->n", X, Q, X) + X @ b + c0

    return _make("quadratic", func, lower, upper, f_min, FinitePoints(xstar[None, :]),
                 known_growth=(float(eig.min()), float(eig.max()), None), params=params)


def _flat_quadratic(params):
    lower, upper = _box(params, [-2.0, -2.0], [2.0, 2.0])

    def func(X):
        return 0.5 * (X[:, 0] - X[:, 1]) ** 2

    # Stated constants for this example are c1 = c2 = 1; the measured ones are 2.
    return _make("flat_quadratic", func, lower, upper, 0.0, AffineDiagonal(lower, upper),
                 known_growth=(1.0, 1.0, None), params=params)


def _double_well(params):
    lower, upper = _box(params, [-2.0], [2.0])

    def func(X):
        return (X[:, 0] ** 2 - 1.0) ** 2

    # Stated bound 2 d^2 <= f <= 5 d^2 on the 0.4-tube, i.e. (c1, c2) = (4, 10).
    return _make("double_well", func, lower, upper, 0.0,
                 FinitePoints(np.array([[-1.0], [1.0]])),
                 known_growth=(4.0, 10.0, 0.4), params=params)


def _cosine(params):
    dim = int(params.get("dim", 1))
    lower, upper = _box(params, [-7.0] * dim, [7.0] * dim)

    def func(X):
        return np.sum(1.0 - np.cos(X), axis=1)

    return _make("cosine", func, lower, upper, 0.0, AxisLattice(lower, upper, 2 * math.pi),
                 params=params)


def _ridge_ls(params):
    A = np.asarray(params.get("A", [[1.0, 0.0], [1.0, 1.0], [0.0, 2.0]]), dtype=float)
    y = np.asarray(params.get("y", [1.0, 0.5, -0.5]), dtype=float)
    reg = float(params.get("reg", 0.1))
    if reg <= 0:
        raise ValueError("ridge parameter must be positive")
    n = A.shape[1]
    H = A.T @ A + reg * np.eye(n)
    xstar = np.linalg.solve(H, A.T @ y)
    lower, upper = _box(params, [-2.0] * n, [2.0] * n)

    def func(X):
        r = X @ A.T - y
        return 0.5 * np.sum(r * r, axis=1) + 0.5 * reg * np.sum(X * X, axis=1)

    f_min = float(func(xstar[None, :])[0])
    eig = np.linalg.eigvalsh(H)
    return _make("ridge_ls", func, lower, upper, f_min, FinitePoints(xstar[None, :]),
                 known_growth=(float(eig.min()), float(eig.max()), None), params=params)


def _product_well(params):
    lower, upper = _box(params, [-2.0, -2.0], [2.0, 2.0])

    def func(X):
        return 0.5 * (X[:, 0] * X[:, 1] - 1.0) ** 2

    return _make("product_well", func, lower, upper, 0.0, ProductHyperbola(lower, upper),
                 params=params)


def _resolve_set(params, lower, upper, default):
    s = params.get("set", default)
    if isinstance(s, MinimizerSet):
        return s
    if isinstance(s, dict):
        return minimizer_set_from_dict(s, lower, upper)
    return FinitePoints(np.asarray(s, dtype=float).reshape(-1, len(lower)))


def _riccati_dist(params):
    c = float(params.get("c", 1.0))
    if not c > 0:
        raise ValueError("riccati_dist requires c > 0")
    dim = int(params.get("dim", 1))
    lower, upper = _box(params, [-2.0] * dim, [2.0] * dim)
    mset = _resolve_set(params, lower, upper, [[0.0] * len(lower)])

    def func(X):
        d = mset.dist(X)
        return 0.5 * c * np.asarray(d) ** 2

    corners = np.stack([m.ravel() for m in np.meshgrid(*zip(lower, upper), indexing="ij")], axis=1)
    f_max = max(float(np.max(func(corners))),
                _box_scan_max(func, lower, upper, {1: 4001, 2: 201, 3: 41}[len(lower)]))
    return _make("riccati_dist", func, lower, upper, 0.0, mset, f_max=f_max,
                 known_growth=(c, c, None), params=params)


def _flat(params):
    dim = int(params.get("dim", 1))
    level = float(params.get("level", 0.0))
    lower, upper = _box(params, [-2.0] * dim, [2.0] * dim)
    center = 0.5 * (np.asarray(lower) + np.asarray(upper))

    def func(X):
        return np.full(X.shape[0], level)

    # Every point is a minimizer; the box centre serves as a representative.
    return _make("flat", func, lower, upper, level, FinitePoints(center[None, :]),
                 f_max=level, params=params)


def _cone(params):
    dim = int(params.get("dim", 1))
    lower, upper = _box(params, [-2.0] * dim, [2.0] * dim)
    mset = _resolve_set(params, lower, upper, [[0.0] * len(lower)])

    def func(X):
        return np.asarray(mset.dist(X), dtype=float)

    f_max = params.get("f_max")
    return _make("cone", func, lower, upper, 0.0, mset,
                 f_max=None if f_max is None else float(f_max), params=params)


_BUILDERS = {
    "quadratic": _quadratic,
    "flat_quadratic": _flat_quadratic,
    "double_well": _double_well,
    "cosine": _cosine,
    "ridge_ls": _ridge_ls,
    "product_well": _product_well,
    "riccati_dist": _riccati_dist,
    "flat": _flat,
    "cone": _cone,
}

BUILTIN_NAMES = tuple(_BUILDERS)


def builtin_objective(name: str, **params) -> ObjectiveSpec:
    """Construct one of the built-in objectives.

    Parameters
    ----------
    name : str
        One of :data:`BUILTIN_NAMES`.
    **params
        Variant parameters. All variants accept ``lower`` and ``upper`` for
        the box; ``riccati_dist`` takes ``c`` and ``set``; ``cone`` takes
        ``set`` and optionally ``f_max``; ``flat`` takes ``level``.

    Examples
    --------
    >>> obj = builtin_objective("riccati_dist", c=1.0, set=[[0.0]])
    >>> round(obj([0.3]), 12)
    0.045
    """
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; expected one of {BUILTIN_NAMES}") from None
    return builder(params)


def _tensor_points(lower, upper, step):
    axes = []
    for a, b in zip(lower, upper):
        n = int(round((b - a) / step)) + 1
        axes.append(np.linspace(a, b, max(n, 2)))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def growth_ratio_scan(obj: ObjectiveSpec, r: float, step: float):
    """Scan ``(f - f_min) / dist^2`` over the punctured ``r``-tube.

    Returns ``(points, dists, ratios)`` for all scanned grid points with
    ``0 < dist <= r``.
    """
    if not r > 0 or not step > 0:
        raise ValueError("r and step must be positive")
    pts = _tensor_points(obj.lower, obj.upper, step)
    d = np.asarray(obj.minimizers.dist(pts))
    # Exclude points that are numerically on the set (ratio 0/0).
    mask = (d > 1e-9) & (d <= r)
    pts, d = pts[mask], d[mask]
    ratios = (obj(pts) - obj.f_min) / d ** 2
    return pts, d, ratios


def estimate_quadratic_growth(obj: ObjectiveSpec, r: float, step: float) -> Tuple[float, float]:
    """Estimate the two-sided quadratic growth constants ``(c1, c2)``.

    ``c1/2 * dist^2 <= f - f_min <= c2/2 * dist^2`` on ``0 < dist <= r``,
    using a full tensor-grid scan with spacing ``step``.
    """
    pts, d, ratios = growth_ratio_scan(obj, r, step)
    if ratios.size == 0:
        raise ValueError("no scan point in the punctured neighbourhood; decrease step")
    if ratios.size < 100:
        raise ValueError(f"only {ratios.size} scan points in the neighbourhood; decrease step")
    if np.min(ratios) <= 0:
        raise ValueError("nonpositive growth ratio: f_min or the minimizer set is mis-specified")
    return 2.0 * float(np.min(ratios)), 2.0 * float(np.max(ratios))

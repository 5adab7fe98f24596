"""Semi-Lagrangian value iteration for ``lam * u + 0.5 |Du|^2 = f``.

The discrete dynamic-programming update at node ``x_i`` is

    u_{k+1}(x_i) = min_a  dtau * (0.5 |a|^2 + f(x_i))
                          + exp(-lam * dtau) * I[u_k](clamp(x_i + dtau * a))

where ``I`` is multilinear interpolation and ``a`` ranges over a sampled
control ball of radius ``M``.  The map is a sup-norm contraction with factor
``exp(-lam * dtau)``; iteration starts from ``f / lam`` and stops once the
update size guarantees a fixed-point gap below ``tol``.

In 1-D the sampled ladder is supplemented by the exact minimiser of the
update over each reachable grid cell, so the minimisation over the control
interval is exact for the piecewise-linear interpolant.

The module also provides the closed-form Riccati oracle: for
``f = (c/2) dist(x, S)^2`` the value function is ``C dist(x, S)^2`` with
``C = (-lam + sqrt(lam^2 + 4c)) / 4``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _backend
from .grid import RectGrid, ValueField, gradient_many
from .objectives import MinimizerSet, ObjectiveSpec

__all__ = [
    "SolverOptions",
    "SolverError",
    "ResidualReport",
    "solve",
    "residual",
    "riccati_constant",
    "riccati_reference",
    "control_set",
    "write_solver_log",
    "field_from_function",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Value iteration failed (non-convergence or non-finite values)."""


@dataclass(frozen=True)
class SolverOptions:
    """Parameters of the value iteration.

    Attributes
    ----------
    dtau : float
        Pseudo time step of the discrete dynamic programming principle.
    tol : float
        Target sup-norm distance to the discrete fixed point.
    max_iters : int
        Sweep limit.
    control_magnitudes : int
        Number ``k`` of nonzero speeds on the ladder ``{0, M/k, ..., M}``.
    control_directions : int or None
        Number of sampled directions (ignored in 1-D where it is ``{-1, +1}``);
        ``None`` selects 32 in 2-D and 128 in 3-D.
    M : float or None
        Control bound; ``None`` selects ``1.1 * sqrt(6 ||f||_inf)``.
    exact_cells : bool
        In 1-D, also minimise exactly over each reachable cell.
    threads : int or None
        Worker threads of the compiled sweep (``None``: ``HJBOPT_THREADS``).
    """

    dtau: float = 0.005
    tol: float = 1e-6
    max_iters: int = 200_000
    control_magnitudes: int = 16
    control_directions: Optional[int] = None
    M: Optional[float] = None
    exact_cells: bool = True
    threads: Optional[int] = None

    def resolved(self, obj: ObjectiveSpec, grid: RectGrid) -> "SolverOptions":
        """Fill in automatic values and validate against ``obj`` and ``grid``."""
        M = self.M
        bound = math.sqrt(6.0 * obj.sup_norm)
        if M is None:
            M = max(1.1 * bound, 1.0)
        dirs = self.control_directions
        if dirs is None:
            dirs = {1: 2, 2: 32, 3: 128}[grid.dim]
        opts = replace(self, M=float(M), control_directions=int(dirs))
        opts.validate(obj, grid)
        return opts

    def validate(self, obj: ObjectiveSpec, grid: RectGrid) -> None:
        if not (self.dtau > 0 and math.isfinite(self.dtau)):
            raise ValueError("dtau must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.control_magnitudes < 1:
            raise ValueError("control_magnitudes must be at least 1")
        if self.M is None:
            raise ValueError("M is unresolved; call resolved() first")
        bound = math.sqrt(6.0 * obj.sup_norm)
        if not self.M > bound:
            raise ValueError(f"control bound M={self.M} must exceed sqrt(6 ||f||_inf)={bound:.6g}")
        if self.dtau * self.M > float(np.min(grid.widths)) / 4.0:
            raise ValueError("dtau * M must not exceed a quarter of the smallest box width")
        if grid.dim > 1 and (self.control_directions or 0) < 2 * grid.dim:
            raise ValueError("too few control directions for the dimension")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be positive")


def _directions(dim: int, count: int) -> np.ndarray:
    if dim == 1:
        return np.array([[-1.0], [1.0]])
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # Fibonacci sphere
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def control_set(dim: int, M: float, magnitudes: int, directions: int) -> np.ndarray:
    """Sampled controls: the origin plus ``magnitudes`` speeds per direction."""
    speeds = M * np.arange(1, magnitudes + 1) / magnitudes
    dirs = _directions(dim, directions)
    ctrl = (speeds[:, None, None] * dirs[None, :, :]).reshape(-1, dim)
    return np.ascontiguousarray(np.concatenate([np.zeros((1, dim)), ctrl], axis=0))


def solve(obj: ObjectiveSpec, grid: RectGrid, lam: float,
          opts: Optional[SolverOptions] = None, backend: Optional[str] = None) -> ValueField:
    """Solve the discounted HJB equation on ``grid`` by value iteration.

    Parameters
    ----------
    obj : ObjectiveSpec
        Running cost ``f`` (evaluated with truncation).
    grid : RectGrid
        Computational grid; its dimension must match ``obj``.
    lam : float
        Discount rate, positive.
    opts : SolverOptions, optional
        Iteration parameters (defaults are tuned for 1-D problems).
    backend : {'cython', 'python'}, optional
        Kernel implementation; defaults to the one selected at import.

    Returns
    -------
    ValueField
        The converged field; ``meta`` holds the iteration history.

    Raises
    ------
    SolverError
        If the iteration does not converge in ``max_iters`` sweeps or produces
        non-finite values.
    """
    if not (lam > 0 and math.isfinite(lam)):
        raise ValueError("lambda must be positive")
    if grid.dim != obj.dim:
        raise ValueError("grid and objective dimensions differ")
    opts = (opts or SolverOptions()).resolved(obj, grid)
    kern = _backend.kernels if backend is None else _backend.load(backend)
    nthreads = opts.threads or _backend.threads()

    disc = math.exp(-lam * opts.dtau)
    # The kernels charge dtau * f per step; rescale f so the charge equals the
    # exact discounted integral (1 - e^{-lam dtau}) / lam * f.  Constant costs
    # then have the exact fixed point f / lam.
    fx = np.asarray(obj(grid.points()), dtype=float)
    fx = np.ascontiguousarray(fx * ((1.0 - disc) / (lam * opts.dtau)))
    stop = opts.tol * (1.0 - disc)
    lo, h, nodes = grid._params()
    hi = np.ascontiguousarray(grid.upper, dtype=float)

    use_1d = grid.dim == 1 and opts.exact_cells
    if use_1d:
        mags = opts.M * np.arange(0, opts.control_magnitudes + 1) / opts.control_magnitudes
        ladder = np.ascontiguousarray(np.concatenate([-mags[:0:-1], mags]))
    else:
        controls = control_set(grid.dim, opts.M, opts.control_magnitudes, opts.control_directions)

    u = np.asarray(obj(grid.points()), dtype=float) / lam
    history = []
    t0 = time.perf_counter()
    converged = False
    sup = math.inf
    it = 0
    for it in range(1, opts.max_iters + 1):
        if use_1d:
            unew, sup = kern.sweep_1d(u, fx, float(lo[0]), float(h[0]), opts.dtau, disc,
                                      ladder, opts.M, nthreads)
        else:
            unew, sup = kern.sweep_nd(u, fx, lo, hi, h, nodes, opts.dtau, disc, controls, nthreads)
        history.append((it, float(sup), time.perf_counter() - t0))
        if not math.isfinite(sup) or not np.all(np.isfinite(unew)):
            raise SolverError(f"non-finite values at sweep {it}")
        u = unew
        if sup <= stop:
            converged = True
            break
    if not converged:
        raise SolverError(f"no convergence in {opts.max_iters} sweeps (last change {sup:.3e})")
    log.info("solved %s on %s nodes in %d sweeps (%.2fs, backend %s)", obj.name, grid.size, it,
             history[-1][2], kern.NAME)
    meta = {
        "objective": obj.name,
        "iterations": it,
        "tol": opts.tol,
        "achieved": float(sup) / (1.0 - disc),
        "dtau": opts.dtau,
        "M": opts.M,
        "backend": kern.NAME,
        "history": history,
    }
    return ValueField(grid, u, lam, meta=meta)


def write_solver_log(path, vf: ValueField) -> None:
    """Write the iteration history as CSV ``iter,sup_change,seconds``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "sup_change", "seconds"])
        for it, sup, sec in vf.meta.get("history", []):
            w.writerow([it, repr(float(sup)), f"{sec:.6f}"])


def field_from_function(grid: RectGrid, lam: float, func, **meta) -> ValueField:
    """Sample a vectorised function on the grid nodes as a value field."""
    return ValueField(grid, np.asarray(func(grid.points()), dtype=float), lam, meta=dict(meta))


@dataclass
class ResidualReport:
    """Node-wise HJB residual ``|lam u + 0.5 |Du|^2 - f|``.

    ``max``/``mean`` are over interior nodes (at least 3 cells from the box
    faces).  ``max_smooth`` further excludes nodes whose difference stencil
    touches a detected kink of ``u`` (a downward jump of the one-sided
    slopes), where a central difference cannot represent the gradient.
    """

    field: np.ndarray
    interior: np.ndarray
    kinks: np.ndarray
    max: float
    mean: float
    max_smooth: float


def _kink_mask(vf: ValueField, threshold: float) -> np.ndarray:
    U = vf.as_array()
    h = vf.grid.h
    near = np.zeros(vf.grid.shape, dtype=bool)
    for k in range(vf.dim):
        d = np.diff(U, axis=k) / h[k]
        # jump of one-sided slopes at interior nodes along axis k
        sl_p = [slice(None)] * vf.dim
        sl_m = [slice(None)] * vf.dim
        sl_p[k] = slice(1, None)
        sl_m[k] = slice(None, -1)
        jump = d[tuple(sl_p)] - d[tuple(sl_m)]
        kink = np.zeros(vf.grid.shape, dtype=bool)
        core = [slice(None)] * vf.dim
        core[k] = slice(1, -1)
        kink[tuple(core)] = jump < -threshold
        grown = kink.copy()
        grown |= np.roll(kink, 1, axis=k)
        grown |= np.roll(kink, -1, axis=k)
        near |= grown
    return near.ravel()


def residual(vf: ValueField, obj: ObjectiveSpec, kink_threshold: Optional[float] = None) -> ResidualReport:
    """HJB residual of ``vf`` using the finite-difference gradient.

    ``kink_threshold`` is the size of a downward slope jump classified as a
    kink; by default one tenth of ``sqrt(2 (f_max - f_min))``, the scale of the
    gradient bound.
    """
    pts = vf.grid.points()
    G = gradient_many(vf, pts)
    res = np.abs(vf.lam * vf.values + 0.5 * np.sum(G * G, axis=1) - obj(pts))
    interior = vf.grid.interior_mask(3)
    if kink_threshold is None:
        kink_threshold = 0.1 * math.sqrt(2.0 * max(obj.f_max - obj.f_min, 1e-300))
    kinks = _kink_mask(vf, kink_threshold)
    smooth = interior & ~kinks
    return ResidualReport(
        field=res,
        interior=interior,
        kinks=kinks,
        max=float(res[interior].max()) if interior.any() else 0.0,
        mean=float(res[interior].mean()) if interior.any() else 0.0,
        max_smooth=float(res[smooth].max()) if smooth.any() else 0.0,
    )


def riccati_constant(lam: float, c: float) -> float:
    """``C = (-lam + sqrt(lam^2 + 4c)) / 4``; ``2C`` solves ``p^2 + lam p - c = 0``."""
    if not c > 0:
        raise ValueError("c must be positive")
    if not lam >= 0:
        raise ValueError("lambda must be nonnegative")
    # Rationalised form avoids cancellation when lam^2 >> c.
    return c / (lam + math.sqrt(lam * lam + 4.0 * c))


def riccati_reference(lam: float, c: float, set_: MinimizerSet, x):
    """Closed-form value ``C dist(x, set)^2`` (single point or batch)."""
    C = riccati_constant(lam, c)
    d = set_.dist(x)
    return C * np.asarray(d) ** 2 if np.ndim(d) else C * d * d

"""Constants and convergence-rate checks.

This module estimates the constants that enter the exponential convergence
estimates (value/objective ratio ``K``, quadratic-growth constants, gap
function of the objective, linear-growth constant) and checks each decay
inequality pointwise along trajectories.

Conventions
-----------
* ``u~ = u - f_min / lam`` and ``f~ = f - f_min`` are the shifted value and
  objective; both vanish exactly on the minimizer set.
* All bound checks are one-sided and count *violations*: samples where the
  measured quantity exceeds ``(1 + tol_rate) * bound + tol_add``.  The
  tolerances used are stored in every report.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .grid import ValueField, gradient_many
from .objectives import ObjectiveSpec, _tensor_points, growth_ratio_scan
from .solver import riccati_constant
from .trajectory import Trajectory, sampled_theta, tail_costs

__all__ = [
    "AnalysisError",
    "InsufficientDecayWindow",
    "EntryNotReached",
    "RateReport",
    "AssumptionReport",
    "GrowthAudit",
    "LinearGrowthReport",
    "MetricRegularityReport",
    "DEFAULT_SCHEME_TOL",
    "fit_exponential_rate",
    "noise_floor",
    "estimate_K",
    "check_PL",
    "check_variational_bound",
    "check_pathwise_bound",
    "check_sandwich",
    "entry_time",
    "check_gap_A3",
    "check_linear_growth_F_and_E",
    "check_metric_regularity",
    "verify_assumption_C",
    "audit_growth_claim",
    "pathwise_constants",
    "write_report",
    "write_gamma_table",
]

#: Scheme tolerance used for default floors when no field is at hand.
DEFAULT_SCHEME_TOL = 1e-6


class AnalysisError(ValueError):
    """An analysis precondition failed; ``code`` names the cause."""

    code = "analysis-precondition"


class InsufficientDecayWindow(AnalysisError):
    """Fewer than 10 samples above the noise floor."""

    code = "insufficient-decay-window"


class EntryNotReached(AnalysisError):
    """The trajectory never stays inside the r-tube until the horizon."""

    code = "entry-not-reached"


# ---------------------------------------------------------------------------
# Report types
# ---------------------------------------------------------------------------


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


@dataclass
class RateReport:
    """Outcome of one decay-rate check.

    ``passed`` is true exactly when ``bound_violations == 0``; it is
    serialised under the key ``pass``.
    """

    check: str
    fitted_rate: float
    fitted_amplitude: float
    r_squared: float
    predicted_rate: float
    bound_violations: int
    passed: bool
    tolerances: Dict[str, float] = field(default_factory=dict)
    details: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        self.passed = bool(self.bound_violations == 0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return _jsonable(d)


@dataclass
class AssumptionReport:
    """Estimated constants of the standing assumptions on a box."""

    K_est: float
    gamma_table: List[Tuple[float, float]]
    growth: Tuple[float, float, float]
    linear_growth_C: float
    beta_est: float
    K_tilde: float
    pl_violation_fraction: float
    box: Tuple[Tuple[float, ...], Tuple[float, ...]] = ((), ())
    flags: Dict[str, bool] = field(default_factory=dict)

    def __post_init__(self):
        if not self.K_est > 0:
            raise ValueError("K_est must be positive")
        if self.growth[0] > self.growth[1]:
            raise ValueError("growth constants must satisfy c1 <= c2")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


class GrowthAudit(NamedTuple):
    """Comparison of stated quadratic-growth constants with a scan."""

    claimed: Tuple[float, float]
    measured: Tuple[float, float]
    violated: bool
    worst_point: Tuple[float, ...]
    worst_ratio: float
    side: str

    def to_dict(self) -> dict:
        return _jsonable(self._asdict())


class LinearGrowthReport(NamedTuple):
    """Linear growth constant and the derived exponential constant."""

    C_F: float
    beta: float
    K_tilde: float
    holds: bool


class MetricRegularityReport(NamedTuple):
    max_ratio: float
    bound: float
    passed: bool


def write_report(path, report) -> None:
    """Serialise a report as a JSON document."""
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_gamma_table(path, table: Sequence[Tuple[float, float]]) -> None:
    """CSV with header ``delta,gamma``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta", "gamma"])
        for dlt, g in table:
            w.writerow([repr(float(dlt)), repr(float(g))])


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def fit_exponential_rate(t, v, floor: Optional[float] = None):
    """Least-squares fit ``v ~ A exp(-rate t)`` on samples above ``floor``.

    Returns ``(rate, amplitude, r_squared)``.  ``floor`` defaults to
    ``10 * DEFAULT_SCHEME_TOL``.

    Raises
    ------
    InsufficientDecayWindow
        If fewer than 10 samples lie above the floor.
    """
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    if floor is None:
        floor = 10.0 * DEFAULT_SCHEME_TOL
    mask = (v > floor) & np.isfinite(v)
    if int(mask.sum()) < 10:
        raise InsufficientDecayWindow(
            f"only {int(mask.sum())} samples above the noise floor {floor:.3g}; need 10")
    tt, lv = t[mask], np.log(v[mask])
    A = np.stack([np.ones_like(tt), tt], axis=1)
    coef, *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = lv - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((lv - lv.mean()) ** 2).sum())
    if ss_tot <= 1e-30 * max(1.0, float(lv @ lv)):
        r2 = 1.0 if ss_res <= 1e-20 * max(1.0, float(lv @ lv)) else 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    rate = -float(coef[1])
    if abs(rate) < 1e-14:
        rate = 0.0
    return rate, float(math.exp(coef[0])), r2


def noise_floor(vf: ValueField, obj: ObjectiveSpec, factor: float = 10.0) -> float:
    """Level below which ``u~`` along a trajectory is not resolved by the grid.

    ``factor`` times the larger of the solver tolerance and the largest
    ``u~`` at nodes within one cell of the minimizer set.  Closer than one
    cell the interpolant is dominated by the vertex at the set, so decay
    fits should stop above this level.
    """
    pts, ut, _ = _shifted_field(vf, obj)
    d = np.asarray(obj.minimizers.dist(pts))
    near = d <= vf.grid.h_max * (1.0 + 1e-9)
    cell = float(ut[near].max()) if near.any() else 0.0
    return factor * max(_field_tol(vf), cell)


# ---------------------------------------------------------------------------
# Field-based estimates
# ---------------------------------------------------------------------------


def _shifted_field(vf: ValueField, obj: ObjectiveSpec):
    pts = vf.grid.points()
    ut = vf.values - obj.f_min / vf.lam
    ft = obj(pts) - obj.f_min
    return pts, ut, ft


def _field_tol(vf: ValueField) -> float:
    return float(vf.meta.get("tol", DEFAULT_SCHEME_TOL))


def estimate_K(vf: ValueField, obj: ObjectiveSpec, floor: Optional[float] = None) -> float:
    """Largest ``K`` with ``K u~ <= f~`` on interior nodes where ``u~ >= floor``.

    ``floor`` defaults to 20 times the solver tolerance of ``vf``.
    """
    if floor is None:
        floor = 20.0 * _field_tol(vf)
    if not floor > 0:
        raise ValueError("floor must be positive")
    _, ut, ft = _shifted_field(vf, obj)
    mask = vf.grid.interior_mask(3) & (ut >= floor)
    if not mask.any():
        raise AnalysisError("no interior node has a shifted value above the floor (flat field)")
    return float(np.min(ft[mask] / ut[mask]))


def check_PL(vf: ValueField, obj: ObjectiveSpec, margin: Optional[float] = None,
             K: Optional[float] = None, floor: Optional[float] = None) -> float:
    """Fraction of interior nodes violating ``0.5|Du|^2 >= (K - lam) u~ - margin``.

    ``K`` defaults to :func:`estimate_K`; ``margin`` to ``10 h ||f||_inf``.
    A field with ``u~ == 0`` everywhere satisfies the inequality vacuously.
    """
    pts, ut, _ = _shifted_field(vf, obj)
    interior = vf.grid.interior_mask(3)
    if margin is None:
        margin = 10.0 * vf.grid.h_max * obj.sup_norm
    if K is None:
        if np.all(np.abs(ut[interior]) <= 20.0 * _field_tol(vf)):
            return 0.0
        K = estimate_K(vf, obj, floor)
    G = gradient_many(vf, pts[interior])
    lhs = 0.5 * np.sum(G * G, axis=1)
    viol = lhs < (K - vf.lam) * ut[interior] - margin
    return float(np.mean(viol)) if viol.size else 0.0


# ---------------------------------------------------------------------------
# Trajectory checks
# ---------------------------------------------------------------------------


def _traj_f_min(traj: Trajectory, params: Optional[dict]) -> float:
    if params and "f_min" in params:
        return float(params["f_min"])
    return float(traj.meta.get("f_min", 0.0))


def _traj_h(traj: Trajectory, params: Optional[dict]) -> float:
    if params and "grid_h" in params:
        return float(params["grid_h"])
    return float(traj.meta.get("grid_h", 0.0))


def check_variational_bound(traj: Trajectory, K: float, lam: float, variant: str = "optimal",
                            params: Optional[dict] = None, tol_rate: float = 0.05,
                            tol_add: Optional[float] = None,
                            floor: Optional[float] = None) -> RateReport:
    """Check the exponential decay of ``u~`` along a trajectory.

    Variants and bounds (``u~0 = u~(y(0))``):

    * ``optimal``: ``u~(t) <= exp(-(K - lam) t) u~0``;
    * ``quasi`` (params ``eta``, ``eps0``, optional ``eta0``):
      ``u~(t) <= (1 + eta0) exp(-delta t) u~0 + eps0 (1 + 1/delta)`` with
      ``delta = (1 - eta) K - lam``;
    * ``sampled`` (params ``sigma``, ``delta_min``, ``delta_max``):
      ``u~(t) <= (1 + c) exp(-theta t) u~0`` with ``c = sigma/2 e^{-K delta_max}``
      and ``theta = K - lam - K c - log(1 + c)/delta_min``.

    ``tol_add`` defaults to ``5 h`` (grid spacing from ``params['grid_h']``
    or the trajectory metadata); ``floor`` is the noise floor of the rate fit.
    """
    params = dict(params or {})
    f_min = _traj_f_min(traj, params)
    ut = traj.u_vals - f_min / lam
    t = traj.times
    u0 = float(ut[0])
    if tol_add is None:
        tol_add = 5.0 * _traj_h(traj, params)
    if variant == "optimal":
        rate = K - lam
        bound = np.exp(-rate * t) * u0
    elif variant == "quasi":
        eta = float(params["eta"])
        eps0 = float(params["eps0"])
        eta0 = float(params.get("eta0", eta))
        rate = (1.0 - eta) * K - lam
        if not rate > 0:
            raise AnalysisError("quasi-optimal decay rate is not positive (eta too large)")
        bound = (1.0 + eta0) * np.exp(-rate * t) * u0 + eps0 * (1.0 + 1.0 / rate)
    elif variant == "sampled":
        rate, c = sampled_theta(K, lam, float(params["sigma"]), float(params["delta_min"]),
                                float(params["delta_max"]))
        bound = (1.0 + c) * np.exp(-rate * t) * u0
    else:
        raise ValueError(f"unknown variant {variant!r}")
    viol = ut > (1.0 + tol_rate) * bound + tol_add
    fit_floor = 10.0 * DEFAULT_SCHEME_TOL if floor is None else floor
    if u0 <= fit_floor:
        # starts on the minimizer set: nothing decays, the bound is vacuous
        fr, fa, r2 = math.inf, 0.0, 1.0
    else:
        fr, fa, r2 = fit_exponential_rate(t, ut, floor)
    return RateReport(
        check=f"variational_{variant}",
        fitted_rate=fr, fitted_amplitude=fa, r_squared=r2, predicted_rate=float(rate),
        bound_violations=int(viol.sum()), passed=True,
        tolerances={"tol_rate": tol_rate, "tol_add": float(tol_add),
                    "noise_floor": float(10.0 * DEFAULT_SCHEME_TOL if floor is None else floor)},
        details={"K": K, "lam": lam, "u0": u0,
                 "first_violation_t": float(t[viol][0]) if viol.any() else None})


def pathwise_constants(c1: float, c2: float, lam: float, eta: float = 0.0) -> dict:
    """Constants of the pathwise estimates for growth constants ``(c1, c2)``."""
    C1 = riccati_constant(lam, c1)
    C2 = riccati_constant(lam, c2)
    K = c1 / (2.0 * C2)
    delta = (1.0 - eta) * K - lam
    return {"C1": C1, "C2": C2, "K": K, "delta": delta,
            "a": C2 * (1.0 + eta) / C1, "a_turnpike": (1.0 + c2) * C2 / C1}


def entry_time(traj: Trajectory, set_=None, r: float = 0.4) -> float:
    """Last entry into the ``r``-tube: smallest sample time after which
    ``dist(y(t)) <= r`` for all remaining samples.

    ``set_`` is accepted for symmetry with the distance oracle; when given the
    distances are recomputed from the states, otherwise the stored ones are
    used.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    d = traj.dists if set_ is None else np.asarray(set_.dist(traj.states))
    outside = np.nonzero(d > r)[0]
    if outside.size == 0:
        return float(traj.times[0])
    last = int(outside[-1])
    if last == len(d) - 1:
        raise EntryNotReached(f"trajectory is outside the {r}-tube at the horizon")
    return float(traj.times[last + 1])


def check_pathwise_bound(traj: Trajectory, constants: dict, tau: float, tol_rate: float = 0.05,
                         tol_add: Optional[float] = None, floor: Optional[float] = None) -> RateReport:
    """Check the distance, speed and turnpike bounds after the entry time.

    ``constants`` holds ``c1``, ``c2``, ``lam`` and optionally ``eta`` and
    ``eps0`` (default 0).  For ``t >= tau``:

    (i)   ``dist^2 <= a e^{-delta (t - tau)} dist^2(tau) + O(eps0)`` with
          ``a = C2 (1 + eta)/C1`` and
          ``O(eps0) = eps0/C1 (1 + 1/delta + (2 + eta) e^{-delta (t - tau)})``;
    (ii)  ``|a(t)|^2 <= c2 a e^{-delta (t - tau)} dist^2(tau)``;
    (iii) ``|a(t)|^2 + dist^2 <= (1 + c2) C2/C1 e^{-delta (t - tau)} dist^2(tau)``.

    (ii) and (iii) concern optimal trajectories and are evaluated only when
    ``eta == eps0 == 0``.  ``tol_add`` defaults to ``h^2``.
    """
    c1, c2, lam = float(constants["c1"]), float(constants["c2"]), float(constants["lam"])
    eta = float(constants.get("eta", 0.0))
    eps0 = float(constants.get("eps0", 0.0))
    k = pathwise_constants(c1, c2, lam, eta)
    delta = k["delta"]
    if not delta > 0:
        raise AnalysisError("pathwise decay rate is not positive for these constants")
    j0 = traj.index_of(tau)
    if tol_add is None:
        tol_add = _traj_h(traj, constants) ** 2
    t = traj.times[j0:] - tau
    d2 = traj.dists[j0:] ** 2
    s2 = traj.speed2[j0:]
    d2tau = float(d2[0])
    decay = np.exp(-delta * t)
    b1 = k["a"] * decay * d2tau + eps0 / k["C1"] * (1.0 + 1.0 / delta + (2.0 + eta) * decay)
    v1 = d2 > (1.0 + tol_rate) * b1 + tol_add
    optimal = eta == 0.0 and eps0 == 0.0
    if optimal:
        b2 = c2 * k["a"] * decay * d2tau
        v2 = s2 > (1.0 + tol_rate) * b2 + tol_add
        b3 = k["a_turnpike"] * decay * d2tau
        v3 = s2 + d2 > (1.0 + tol_rate) * b3 + tol_add
    else:
        v2 = v3 = np.zeros_like(v1)
    try:
        fr, fa, r2 = fit_exponential_rate(t + tau, traj.dists[j0:] ** 2, floor)
    except InsufficientDecayWindow:
        if d2tau <= (floor if floor is not None else 10.0 * DEFAULT_SCHEME_TOL):
            # started on the set: nothing to fit, every bound holds trivially
            fr, fa, r2 = math.inf, 0.0, 1.0
        else:
            raise
    total = int(v1.sum() + v2.sum() + v3.sum())
    return RateReport(
        check="pathwise",
        fitted_rate=fr, fitted_amplitude=fa, r_squared=r2, predicted_rate=delta,
        bound_violations=total, passed=True,
        tolerances={"tol_rate": tol_rate, "tol_add": float(tol_add)},
        details={"tau": tau, "dist2_violations": int(v1.sum()),
                 "speed2_violations": int(v2.sum()), "turnpike_violations": int(v3.sum()),
                 "speed_checks_applied": optimal, **k})


def check_sandwich(traj: Trajectory, constants: dict, tau: float, eta_schedule=0.0,
                   eps0: float = 0.0, tol_add: Optional[float] = None,
                   tol_rate: float = 0.0) -> RateReport:
    """Two-sided comparison of ``u~`` with ``dist^2`` after the entry time.

    ``C1 d^2 <= u~ + eps(t) <= C2 d^2 + eps(t) + eps0`` with
    ``eps(t) = eta(t) u~ + eps0``.  (The variant with right-hand side
    ``(1 + eta) C2 d^2 + (2 + eta) eps0`` is implied by this one.)

    ``eta_schedule`` is a constant or an array over the trajectory samples.
    ``tol_add`` defaults to ``5 h`` (the absolute accuracy of the field).
    """
    c1, c2, lam = float(constants["c1"]), float(constants["c2"]), float(constants["lam"])
    C1, C2 = riccati_constant(lam, c1), riccati_constant(lam, c2)
    f_min = _traj_f_min(traj, constants)
    if tol_add is None:
        tol_add = 5.0 * _traj_h(traj, constants)
    j0 = traj.index_of(tau)
    eta = np.broadcast_to(np.asarray(eta_schedule, dtype=float), traj.times.shape)[j0:]
    ut = traj.u_vals[j0:] - f_min / lam
    d2 = traj.dists[j0:] ** 2
    eps_t = eta * ut + eps0
    mid = ut + eps_t
    low_v = C1 * d2 > (1.0 + tol_rate) * mid + tol_add
    high_v = mid > (1.0 + tol_rate) * (C2 * d2 + eps_t + eps0) + tol_add
    n = int(low_v.sum() + high_v.sum())
    # u~/dist^2 is only meaningful where dist resolves above the grid spacing
    h2 = _traj_h(traj, constants) ** 2
    ratio = np.where(d2 > h2, ut / np.where(d2 > h2, d2, 1.0), np.nan)
    finite = ratio[np.isfinite(ratio)]
    return RateReport(
        check="sandwich", fitted_rate=float("nan"), fitted_amplitude=float("nan"), r_squared=0.0,
        predicted_rate=float("nan"), bound_violations=n, passed=True,
        tolerances={"tol_rate": tol_rate, "tol_add": float(tol_add)},
        details={"C1": C1, "C2": C2, "lower_violations": int(low_v.sum()),
                 "upper_violations": int(high_v.sum()),
                 "ratio_min": float(finite.min()) if finite.size else None,
                 "ratio_max": float(finite.max()) if finite.size else None})


def verify_assumption_C(traj: Trajectory, obj: ObjectiveSpec, lam: float, vf: ValueField,
                        floor: Optional[float] = None):
    """A-posteriori quasi-optimality residuals of a trajectory.

    The residual ``r(t)`` is the shifted tail cost from ``t`` minus
    ``u~(y(t))``.  It is split minimally as ``r = eta_hat(t) u~ + eps0_hat``:
    ``eps0_hat`` is the largest residual where ``u~ < floor`` (and 0 if
    there is none or it is negative); ``eta_hat(t) = max(0, (r - eps0_hat)/u~)``
    where ``u~ >= floor`` and 0 elsewhere.  ``floor`` defaults to 20 times the
    solver tolerance of ``vf``.

    Returns ``(eta_hat, eps0_hat)``.
    """
    if floor is None:
        floor = 20.0 * _field_tol(vf)
    tails = tail_costs(traj, obj, lam, vf, shifted=True)
    ut = traj.u_vals - obj.f_min / lam
    r = tails - ut
    low = ut < floor
    eps0_hat = max(0.0, float(r[low].max())) if low.any() else 0.0
    eta_hat = np.zeros_like(r)
    hi = ~low
    eta_hat[hi] = np.maximum(0.0, (r[hi] - eps0_hat) / ut[hi])
    return eta_hat, eps0_hat


# ---------------------------------------------------------------------------
# Objective-based checks
# ---------------------------------------------------------------------------


def _default_step(dim: int) -> float:
    return {1: 1e-3, 2: 1e-2, 3: 5e-2}[dim]


def check_gap_A3(obj: ObjectiveSpec, deltas: Sequence[float], step: Optional[float] = None):
    """Gap table ``[(delta, gamma(delta))]``.

    ``gamma(delta)`` is the scan infimum of ``f~`` over ``{dist > delta}``
    minus ``1e-12``; positive values confirm the gap condition on the box.
    """
    step = _default_step(obj.dim) if step is None else step
    pts = _tensor_points(obj.lower, obj.upper, step)
    d = np.asarray(obj.minimizers.dist(pts))
    ft = obj(pts) - obj.f_min
    table = []
    for dl in deltas:
        if not dl > 0:
            raise ValueError("deltas must be positive")
        mask = d > dl
        if not mask.any():
            raise AnalysisError(f"no scan point farther than {dl} from the minimizer set")
        table.append((float(dl), float(ft[mask].min()) - 1e-12))
    return table


def check_linear_growth_F_and_E(obj: ObjectiveSpec, r: float, M: float,
                                step: Optional[float] = None, lam: Optional[float] = None,
                                slope_threshold: float = -0.5) -> LinearGrowthReport:
    """Linear growth constant ``C_F = max dist / f~`` on ``0 < dist <= r``.

    An unbounded ratio near the set is detected by the log-log slope of the
    per-shell maximum ratio against the distance on the innermost shells: a
    slope below ``slope_threshold`` (quadratic growth gives -1) means the
    linear growth bound fails; then ``C_F = beta = inf`` and ``K_tilde = 0``.
    Otherwise ``beta = C_F / M`` and ``K_tilde = (1/beta) / (M^2/2 + f_max)``.
    """
    if not (r > 0 and M > 0):
        raise ValueError("r and M must be positive")
    step = _default_step(obj.dim) if step is None else step
    pts = _tensor_points(obj.lower, obj.upper, step)
    d = np.asarray(obj.minimizers.dist(pts))
    mask = (d > 1e-9) & (d <= r)
    if not mask.any():
        raise AnalysisError("no scan point in the punctured neighbourhood")
    d = d[mask]
    ft = obj(pts[mask]) - obj.f_min
    with np.errstate(divide="ignore"):
        ratio = np.where(ft > 0, d / ft, np.inf)
    if np.isinf(ratio).any():
        return LinearGrowthReport(math.inf, math.inf, 0.0, False)
    # shell maxima on the inner quarter of the neighbourhood
    edges = np.geomspace(max(d.min(), 1e-9), r, 25)
    mids, maxes = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        sel = (d >= a) & (d < b)
        if sel.any():
            mids.append(np.sqrt(a * b))
            maxes.append(ratio[sel].max())
    holds = True
    if len(mids) >= 4:
        inner = slice(0, max(4, len(mids) // 3))
        x, y = np.log(mids[inner]), np.log(maxes[inner])
        slope = np.polyfit(x, y, 1)[0]
        holds = bool(slope > slope_threshold)
    if not holds:
        return LinearGrowthReport(math.inf, math.inf, 0.0, False)
    C_F = float(ratio.max())
    beta = C_F / M
    K_tilde = (1.0 / beta) / (0.5 * M * M + obj.f_max)
    return LinearGrowthReport(C_F, beta, K_tilde, True)


def check_metric_regularity(obj: ObjectiveSpec, samples, c1: float, tol: float = 1e-3,
                            fd_step: float = 1e-6) -> MetricRegularityReport:
    """Spot-check ``dist(x) <= (2 / c1) |grad f(x)|`` on sample points.

    Gradients are central differences with step ``fd_step``.
    """
    X = np.atleast_2d(np.asarray(samples, dtype=float))
    if X.shape[1] != obj.dim:
        X = X.reshape(-1, obj.dim)
    d = np.asarray(obj.minimizers.dist(X))
    G = np.zeros_like(X)
    for k in range(obj.dim):
        e = np.zeros(obj.dim)
        e[k] = fd_step
        G[:, k] = (obj.func(X + e) - obj.func(X - e)) / (2.0 * fd_step)
    gn = np.linalg.norm(G, axis=1)
    off = d > 1e-9
    if np.any(gn[off] < 1e-12):
        raise AnalysisError("gradient vanishes at a point off the minimizer set")
    ratio = np.where(off, d / np.where(gn > 0, gn, 1.0), 0.0)
    mx = float(ratio.max()) if ratio.size else 0.0
    bound = 2.0 / c1
    return MetricRegularityReport(mx, bound, mx <= bound + tol)


def audit_growth_claim(obj: ObjectiveSpec, claimed: Optional[Tuple[float, float]] = None,
                       r: Optional[float] = None, step: Optional[float] = None) -> GrowthAudit:
    """Compare stated growth constants with a dense scan.

    ``claimed`` defaults to ``obj.known_growth``; ``r`` to its radius (or 1
    when the statement is global).  The audit reports the most violating scan
    point (largest excess over ``c2/2`` or deficit below ``c1/2``); among tied
    points the lexicographically largest is reported.
    """
    if claimed is None:
        if obj.known_growth is None:
            raise ValueError("objective has no stated growth constants")
        c1c, c2c, rr = obj.known_growth
        claimed = (c1c, c2c)
        if r is None:
            r = rr
    r = 1.0 if r is None else r
    step = _default_step(obj.dim) if step is None else step
    pts, d, ratios = growth_ratio_scan(obj, r, step)
    if ratios.size == 0:
        raise AnalysisError("empty scan")
    # symmetric objectives tie: take the lexicographically largest extremal point
    i_max = int(np.nonzero(ratios >= ratios.max() - 1e-12)[0][-1])
    i_min = int(np.nonzero(ratios <= ratios.min() + 1e-12)[0][-1])
    lo_claim, hi_claim = claimed[0] / 2.0, claimed[1] / 2.0
    over = ratios[i_max] - hi_claim
    under = lo_claim - ratios[i_min]
    tol = 1e-9
    if over > tol and over >= under:
        side, i = "upper", i_max
    elif under > tol:
        side, i = "lower", i_min
    else:
        side, i = "none", i_max
    measured = (2.0 * float(ratios.min()), 2.0 * float(ratios.max()))
    return GrowthAudit(tuple(float(v) for v in claimed), measured, side != "none",
                       tuple(float(v) for v in pts[i]), float(ratios[i]), side)

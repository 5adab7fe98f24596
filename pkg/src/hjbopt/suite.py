"""The frozen acceptance matrix.

Each criterion is a function returning :class:`SuiteRow` records
``(case, check, predicted, measured, pass)``.  Solves and trajectories are
shared between criteria through a :class:`SuiteContext` cache, so running the
whole matrix costs one solve per distinct configuration.

Resolutions
-----------
Quick mode halves the resolutions that no criterion pins: the 1-D flow run
(801 -> 401 nodes) and the 2-D field (401^2 -> 201^2).  The oracle matrix
and the double-well field stay at 401 nodes in both modes.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from . import analysis as A
from .grid import RectGrid, ValueField, interpolate_many
from .objectives import (AffineDiagonal, AxisLattice, FinitePoints, MinimizerSet,
                         ObjectiveSpec, ProductHyperbola, builtin_objective,
                         estimate_quadratic_growth, sq_dist_subgradient)
from .solver import SolverOptions, riccati_constant, riccati_reference, solve
from .trajectory import (QuasiOptimalPolicy, SampledPolicy, Trajectory, h_step_tolerance,
                         integrate_gradient_flow, integrate_perturbed,
                         integrate_receding_horizon)

__all__ = ["SuiteRow", "SuiteContext", "CRITERIA", "run_suite", "write_suite_csv",
           "riccati_relative_error", "riccati_matrix", "property_checks", "chain_rule_slopes"]

#: Discount used by every trajectory case.
LAM = 0.1
#: Floor excluding the near-set 0/0 region and the O(h) layer when estimating K.
K_FLOOR = 0.05
#: Radius of the oracle comparison region ``{dist <= REGION}``.
REGION = 1.4


@dataclass
class SuiteRow:
    criterion: int
    case: str
    check: str
    predicted: str
    measured: float
    passed: bool

    def csv_row(self):
        return [self.case, self.check, self.predicted, repr(float(self.measured)),
                "PASS" if self.passed else "FAIL"]


# ---------------------------------------------------------------------------
# Shared computations
# ---------------------------------------------------------------------------


def riccati_relative_error(vf: ValueField, obj: ObjectiveSpec, lam: float, c: float,
                           region: float = REGION) -> float:
    """Normwise relative deviation from ``C dist^2`` on ``{dist <= region}``.

    ``max |u - C d^2| / max C d^2`` over interior nodes of the region.
    """
    pts = vf.grid.points()
    d = np.asarray(obj.minimizers.dist(pts))
    mask = (d <= region) & vf.grid.interior_mask(3)
    ref = riccati_reference(lam, c, obj.minimizers, pts[mask])
    return float(np.max(np.abs(vf.values[mask] - ref)) / np.max(ref))


def riccati_matrix(nodes: int = 401, tol: float = 0.02, budget: float = 10.0):
    """Oracle matrix over ``lam in {0.05, 0.1}``, ``c in {0.5, 1, 2}`` and
    minimizer sets ``{0}`` and ``{-1, 1}`` on ``[-2, 2]``."""
    rows = []
    for lam in (0.05, 0.1):
        for c in (0.5, 1.0, 2.0):
            for label, pts in (("{0}", [[0.0]]), ("{-1,1}", [[-1.0], [1.0]])):
                obj = builtin_objective("riccati_dist", c=c, set=pts, dim=1)
                t0 = time.perf_counter()
                vf = solve(obj, RectGrid(obj.lower, obj.upper, [nodes]), lam)
                secs = time.perf_counter() - t0
                err = riccati_relative_error(vf, obj, lam, c)
                case = f"riccati lam={lam} c={c} M={label}"
                rows.append((case, err, err <= tol, secs, secs <= budget))
    return rows


class SuiteContext:
    """Lazily computed fields and trajectories shared by the criteria."""

    def __init__(self, quick: bool = False, seed: int = 0):
        self.quick = quick
        self.seed = seed
        self._cache: Dict[str, object] = {}

    def _get(self, key, make):
        if key not in self._cache:
            self._cache[key] = make()
        return self._cache[key]

    # resolutions -----------------------------------------------------------
    @property
    def flow_nodes(self) -> int:
        return 401 if self.quick else 801

    @property
    def nodes_2d(self) -> int:
        return 201 if self.quick else 401

    # fields ----------------------------------------------------------------
    def riccati(self):
        def make():
            obj = builtin_objective("riccati_dist", c=1.0, dim=1)
            vf = solve(obj, RectGrid(obj.lower, obj.upper, [self.flow_nodes]), LAM)
            return obj, vf
        return self._get("riccati", make)

    def riccati_401(self):
        def make():
            obj = builtin_objective("riccati_dist", c=1.0, dim=1)
            return obj, solve(obj, RectGrid(obj.lower, obj.upper, [401]), LAM)
        return self._get("riccati_401", make)

    def riccati_2d(self):
        def make():
            obj = builtin_objective("riccati_dist", c=1.0, dim=2)
            n = self.nodes_2d
            vf = solve(obj, RectGrid(obj.lower, obj.upper, [n, n]), LAM, SolverOptions(dtau=0.1))
            return obj, vf
        return self._get("riccati_2d", make)

    def double_well(self):
        def make():
            obj = builtin_objective("double_well")
            return obj, solve(obj, RectGrid(obj.lower, obj.upper, [401]), LAM)
        return self._get("double_well", make)

    def K(self, which: str) -> float:
        obj, vf = getattr(self, which)()
        return self._get(f"K_{which}", lambda: A.estimate_K(vf, obj, floor=K_FLOOR))

    def dw_growth(self):
        obj, _ = self.double_well()
        return self._get("dw_growth", lambda: estimate_quadratic_growth(obj, 0.4, 1e-3))

    # trajectories ------------------------------------------------------------
    def traj_riccati_optimal(self) -> Trajectory:
        obj, vf = self.riccati()
        return self._get("t_ric_opt", lambda: integrate_gradient_flow(vf, obj, [1.0], 20.0, 1e-3))

    def traj_riccati_quasi(self) -> Trajectory:
        obj, vf = self.riccati()
        pol = QuasiOptimalPolicy(eta=0.2, eps0=1e-3, K=self.K("riccati"), seed=self.seed)
        return self._get("t_ric_quasi",
                         lambda: integrate_perturbed(vf, obj, [1.0], 20.0, 1e-3, pol, floor=K_FLOOR))

    def traj_riccati_sampled(self) -> Trajectory:
        obj, vf = self.riccati()
        pol = SampledPolicy(0.5, 0.5, 0.1, seed=self.seed, K=self.K("riccati"))
        return self._get("t_ric_sampled",
                         lambda: integrate_receding_horizon(vf, obj, [1.0], 20.0, 1e-3, pol))

    def traj_dw_optimal(self) -> Trajectory:
        obj, vf = self.double_well()
        return self._get("t_dw_opt", lambda: integrate_gradient_flow(vf, obj, [0.5], 40.0, 1e-3))

    def all_trajectories(self):
        """``(name, objective, field, trajectory, optimal)`` of every suite run."""
        ric_obj, ric_vf = self.riccati()
        dw_obj, dw_vf = self.double_well()
        return [
            ("riccati optimal", ric_obj, ric_vf, self.traj_riccati_optimal(), True),
            ("riccati quasi", ric_obj, ric_vf, self.traj_riccati_quasi(), False),
            ("riccati sampled", ric_obj, ric_vf, self.traj_riccati_sampled(), False),
            ("double_well optimal", dw_obj, dw_vf, self.traj_dw_optimal(), True),
        ]


# ---------------------------------------------------------------------------
# Geometry property checks
# ---------------------------------------------------------------------------


def _random_set(rng) -> MinimizerSet:
    kind = rng.integers(4)
    if kind == 0:
        dim = int(rng.integers(1, 4))
        return FinitePoints(rng.uniform(-2, 2, size=(int(rng.integers(1, 6)), dim)))
    if kind == 1:
        return AffineDiagonal((-2.0, -2.0), (2.0, 2.0))
    if kind == 2:
        dim = int(rng.integers(1, 4))
        return AxisLattice((-7.0,) * dim, (7.0,) * dim, float(rng.uniform(1.0, 2 * math.pi)))
    return ProductHyperbola((-3.0, -3.0), (3.0, 3.0))


def property_checks(n_pairs: int = 10_000, seed: int = 0) -> Dict[str, int]:
    """Violation counts of the distance properties on random ``(set, x)`` pairs.

    Counts: ``subgradient`` (``|q| > dist``), ``projection`` (``|x - p| != dist``
    or ``p`` not in the set), ``lipschitz`` (``|d(x) - d(y)| > |x - y|``).
    """
    rng = np.random.default_rng(seed)
    counts = {"subgradient": 0, "projection": 0, "lipschitz": 0}
    done = 0
    while done < n_pairs:
        S = _random_set(rng)
        m = min(500, n_pairs - done)
        X = rng.uniform(-3, 3, size=(m, S.dim))
        Y = X + rng.normal(scale=rng.choice([1e-3, 0.1, 1.0]), size=X.shape)
        d, P = S.project_batch(X)
        q = sq_dist_subgradient(S, X)
        counts["subgradient"] += int(np.sum(np.linalg.norm(q, axis=1) > d + 1e-12))
        bad_proj = (np.abs(np.linalg.norm(X - P, axis=1) - d) > 1e-9) | (S.dist(P) > 1e-7)
        counts["projection"] += int(np.sum(bad_proj))
        dy = S.dist(Y)
        counts["lipschitz"] += int(np.sum(np.abs(d - dy) > np.linalg.norm(X - Y, axis=1) + 1e-9))
        done += m
    return counts


def chain_rule_slopes(n_curves: int = 100, seed: int = 1):
    """Log-log slopes of the forward-difference error of ``d/dt 0.5 dist(y(t))^2``.

    Curves ``y(t) = x + t v + t^2 w`` are drawn at random; curves whose
    projection jumps on ``[0, 0.02]`` (a tie is crossed) are redrawn.  The
    error against ``<q(y(0)), y'(0)>`` is measured at ``dt = 1e-3 / 2^k``.
    Returns the array of fitted slopes (expected ~1).
    """
    rng = np.random.default_rng(seed)
    dts = 1e-3 / 2.0 ** np.arange(6)
    slopes = []
    while len(slopes) < n_curves:
        S = _random_set(rng)
        x = rng.uniform(-2.5, 2.5, size=S.dim)
        v = rng.normal(size=S.dim)
        w = rng.normal(size=S.dim)
        ts = np.linspace(0.0, 0.02, 41)
        Ycurve = x + ts[:, None] * v + ts[:, None] ** 2 * w
        d, P = S.project_batch(Ycurve)
        if np.max(np.linalg.norm(np.diff(P, axis=0), axis=1)) > 0.05 or d[0] < 1e-3:
            continue  # a projection tie is crossed (or the curve starts on the set)
        q = x - P[0]
        exact = float(q @ v)
        phi0 = 0.5 * d[0] ** 2
        Yd = x + dts[:, None] * v + dts[:, None] ** 2 * w
        fd = (0.5 * S.dist(Yd) ** 2 - phi0) / dts
        err = np.abs(fd - exact)
        if np.any(err < 1e-13):
            continue  # error at round-off level: no slope to measure
        slopes.append(np.polyfit(np.log(dts), np.log(err), 1)[0])
    return np.asarray(slopes)


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def _row(crit, case, check, predicted, measured, ok) -> SuiteRow:
    return SuiteRow(crit, case, check, predicted, float(measured), bool(ok))


def crit_riccati_oracle(ctx: SuiteContext) -> List[SuiteRow]:
    rows = []
    for case, err, ok, secs, fast in riccati_matrix(401):
        rows.append(_row(1, case, "relative_error", "<=0.02", err, ok))
        rows.append(_row(1, case, "solve_seconds", "<=10", secs, fast))
    return rows


def crit_optimal_flow(ctx: SuiteContext) -> List[SuiteRow]:
    tr = ctx.traj_riccati_optimal()
    rho = 2.0 * riccati_constant(LAM, 1.0)
    sel = tr.times <= 3.0 + 1e-12
    err = float(np.max(np.abs(tr.states[sel, 0] - np.exp(-rho * tr.times[sel]))))
    return [_row(2, f"riccati flow x0=1 nodes={ctx.flow_nodes}", "sup_error_[0,3]", "<=5e-3",
                 err, err <= 5e-3)]


def crit_variational(ctx: SuiteContext) -> List[SuiteRow]:
    rows = []
    obj, vf = ctx.riccati()
    r = A.check_variational_bound(ctx.traj_riccati_optimal(), ctx.K("riccati"), LAM,
                                  floor=A.noise_floor(vf, obj))
    rows.append(_row(3, "riccati optimal", "variational_violations", "0", r.bound_violations,
                     r.passed))
    rows.append(_row(3, "riccati optimal", "fitted_rate", "1.90+-0.06", r.fitted_rate,
                     abs(r.fitted_rate - 1.90) <= 0.06))
    rows.append(_row(3, "riccati optimal", "fitted_rate>=K-lam", f">={r.predicted_rate:.6g}",
                     r.fitted_rate, r.fitted_rate >= r.predicted_rate))
    d = A.check_variational_bound(ctx.traj_dw_optimal(), ctx.K("double_well"), LAM)
    rows.append(_row(3, "double_well optimal", "variational_violations", "0",
                     d.bound_violations, d.passed))
    return rows


def crit_quasi(ctx: SuiteContext) -> List[SuiteRow]:
    tr = ctx.traj_riccati_quasi()
    r = A.check_variational_bound(tr, ctx.K("riccati"), LAM, "quasi", {"eta": 0.2, "eps0": 1e-3})
    case = "riccati quasi eta=0.2 eps0=1e-3"
    return [
        _row(4, case, "quasi_violations", "0", r.bound_violations, r.passed),
        _row(4, case, "eta_hat_max", "<=0.2", tr.meta["eta_hat_max"], tr.meta["eta_hat_max"] <= 0.2),
        _row(4, case, "eps0_hat", "<=2e-3", tr.meta["eps0_hat"], tr.meta["eps0_hat"] <= 2e-3),
    ]


def crit_sampled(ctx: SuiteContext) -> List[SuiteRow]:
    tr = ctx.traj_riccati_sampled()
    r = A.check_variational_bound(tr, ctx.K("riccati"), LAM, "sampled",
                                  {"sigma": 0.1, "delta_min": 0.5, "delta_max": 0.5})
    return [_row(5, "riccati sampled delta=0.5 sigma=0.1", "sampled_violations", "0",
                 r.bound_violations, r.passed)]


def crit_dpp(ctx: SuiteContext) -> List[SuiteRow]:
    rows = []
    for name, obj, vf, tr, optimal in ctx.all_trajectories():
        tol = h_step_tolerance(tr, obj, LAM, vf)
        n_dec = int(np.sum(np.diff(tr.h_vals) < -tol))
        rows.append(_row(6, name, "h_decreases", "0", n_dec, n_dec == 0))
        if optimal:
            spread = float(np.max(np.abs(tr.h_vals - tr.h_vals[0])) / tr.h_vals[0])
            bound = 0.02 + 5.0 * vf.grid.h_max
            rows.append(_row(6, name, "h_relative_spread", f"<={bound:.4g}", spread,
                             spread <= bound))
    return rows


def crit_pathwise(ctx: SuiteContext) -> List[SuiteRow]:
    tr = ctx.traj_dw_optimal()
    c1, c2 = ctx.dw_growth()
    tau = A.entry_time(tr, r=0.4)
    rep = A.check_pathwise_bound(tr, {"c1": c1, "c2": c2, "lam": LAM}, tau)
    case = "double_well optimal x0=0.5"
    return [
        _row(7, case, "dist2_violations", "0", rep.details["dist2_violations"],
             rep.details["dist2_violations"] == 0),
        _row(7, case, "speed2_violations", "0", rep.details["speed2_violations"],
             rep.details["speed2_violations"] == 0),
        _row(7, case, "turnpike_violations", "0", rep.details["turnpike_violations"],
             rep.details["turnpike_violations"] == 0),
        _row(7, case, "dist_at_T", "<=1e-2", tr.dists[-1], tr.dists[-1] <= 1e-2),
    ]


def crit_sandwich(ctx: SuiteContext) -> List[SuiteRow]:
    rows = []
    c1, c2 = ctx.dw_growth()
    for name, obj, vf, tr, optimal in ctx.all_trajectories():
        if name.startswith("double_well"):
            consts = {"c1": c1, "c2": c2, "lam": LAM}
        else:
            consts = {"c1": 1.0, "c2": 1.0, "lam": LAM}
        if name == "riccati quasi":
            eta, eps0 = 0.2, 1e-3
        elif name == "riccati sampled":
            eta_hat, eps0 = A.verify_assumption_C(tr, obj, LAM, vf, floor=K_FLOOR)
            eta = eta_hat
        else:
            eta, eps0 = 0.0, 0.0
        tau = A.entry_time(tr, r=0.4)
        rep = A.check_sandwich(tr, consts, tau, eta, eps0)
        rows.append(_row(8, name, "sandwich_violations", "0", rep.bound_violations, rep.passed))
    return rows


def crit_pl(ctx: SuiteContext) -> List[SuiteRow]:
    rows = []
    for name, getter in (("riccati 401", ctx.riccati_401), ("double_well 401", ctx.double_well),
                         (f"riccati 2-D {ctx.nodes_2d}^2", ctx.riccati_2d)):
        obj, vf = getter()
        K = A.estimate_K(vf, obj, floor=K_FLOOR)
        frac = A.check_PL(vf, obj, K=K)
        rows.append(_row(9, name, "pl_violation_fraction", "<=0.01", frac, frac <= 0.01))
    return rows


def crit_properties(ctx: SuiteContext) -> List[SuiteRow]:
    counts = property_checks(10_000, seed=ctx.seed)
    rows = [_row(10, "10^4 random (set, x) pairs", f"{k}_violations", "0", v, v == 0)
            for k, v in counts.items()]
    slopes = chain_rule_slopes(100, seed=ctx.seed + 1)
    rows.append(_row(10, "100 random curves", "chain_rule_min_slope", ">=0.9", slopes.min(),
                     slopes.min() >= 0.9))
    return rows


def crit_audit(ctx: SuiteContext) -> List[SuiteRow]:
    rows = []
    for c in (0.5, 1.0, 2.0):
        obj = builtin_objective("riccati_dist", c=c, dim=1)
        c1, c2 = estimate_quadratic_growth(obj, 1.0, 1e-3)
        dev = max(abs(c1 - c), abs(c2 - c))
        rows.append(_row(11, f"riccati_dist c={c}", "growth_deviation", "<=1e-9", dev, dev <= 1e-9))
    c1, c2 = ctx.dw_growth()
    rows.append(_row(11, "double_well r=0.4", "c1", "5.12+-1%", c1, abs(c1 / 5.12 - 1) <= 0.01))
    rows.append(_row(11, "double_well r=0.4", "c2", "11.52+-1%", c2, abs(c2 / 11.52 - 1) <= 0.01))
    audit = A.audit_growth_claim(builtin_objective("double_well"), claimed=(4.0, 10.0), r=0.4)
    flagged = audit.violated and abs(abs(audit.worst_point[0]) - 1.4) <= 1e-9
    rows.append(_row(11, "double_well claim 2d^2<=f<=5d^2", "violation_ratio_at_1.4", "5.76",
                     audit.worst_ratio, flagged and abs(audit.worst_ratio - 5.76) <= 1e-9))
    return rows


CRITERIA: Dict[int, Callable[[SuiteContext], List[SuiteRow]]] = {
    1: crit_riccati_oracle,
    2: crit_optimal_flow,
    3: crit_variational,
    4: crit_quasi,
    5: crit_sampled,
    6: crit_dpp,
    7: crit_pathwise,
    8: crit_sandwich,
    9: crit_pl,
    10: crit_properties,
    11: crit_audit,
}


def run_suite(quick: bool = False, seed: int = 0, criteria=None,
              ctx: Optional[SuiteContext] = None) -> List[SuiteRow]:
    """Run the selected criteria (default: all) and return their rows."""
    ctx = ctx or SuiteContext(quick=quick, seed=seed)
    rows: List[SuiteRow] = []
    for k in sorted(criteria or CRITERIA):
        rows.extend(CRITERIA[k](ctx))
    return rows


def write_suite_csv(fh, rows: List[SuiteRow]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["case", "check", "predicted", "measured", "pass"])
    for r in rows:
        w.writerow(r.csv_row())

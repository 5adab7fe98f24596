"""Trajectories driven by the value-function feedback.

Three integrators are provided:

* :func:`integrate_gradient_flow` -- classical RK4 on ``y' = -Du(y)``;
* :func:`integrate_perturbed` -- the same flow with a bounded, smooth bias
  ``b(t)`` whose size is calibrated so that the trajectory is quasi-optimal
  with declared constants (checked a posteriori on the tail costs);
* :func:`integrate_receding_horizon` -- feedback sampled at updating times
  and held constant in between (zero-order hold).

Every trajectory records states, controls, value samples, distances to the
minimizer set, squared speeds and the dynamic-programming functional

    h(t) = int_0^t (0.5|a|^2 + f(y)) e^{-lam s} ds + u(y(t)) e^{-lam t},

which is non-decreasing for every control and constant for optimal ones.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .grid import ValueField, clamp_to_box, interpolate_many
from .objectives import ObjectiveSpec

__all__ = [
    "Trajectory",
    "QuasiOptimalPolicy",
    "SampledPolicy",
    "TrajectoryError",
    "CalibrationError",
    "integrate_gradient_flow",
    "integrate_perturbed",
    "integrate_receding_horizon",
    "integrate_constant_control",
    "cost_functional",
    "tail_costs",
    "dpp_h_series",
    "h_step_tolerance",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "sampled_theta",
]


class TrajectoryError(RuntimeError):
    """Integration left the computational box (misconfigured field or step)."""


class CalibrationError(RuntimeError):
    """The perturbation could not be scaled to meet the declared constants."""


@dataclass
class Trajectory:
    """Sampled trajectory.

    ``controls[j]`` is the control applied at ``times[j]``.  When
    ``hold`` is true the control is piecewise constant, held on
    ``[times[j], times[j+1])``; otherwise it is a continuous feedback sampled
    at the grid times.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    u_vals: np.ndarray
    dists: np.ndarray
    speed2: np.ndarray
    h_vals: np.ndarray
    hold: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.times)
        for name in ("states", "controls", "u_vals", "dists", "speed2", "h_vals"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if n == 0 or self.times[0] != 0.0:
            raise ValueError("times must start at 0")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def __len__(self):
        return len(self.times)

    def index_of(self, t: float) -> int:
        """Index of the sample time equal to ``t`` (within round-off)."""
        j = int(np.searchsorted(self.times, t))
        for k in (j - 1, j, j + 1):
            if 0 <= k < len(self.times) and abs(self.times[k] - t) <= 1e-9 * max(1.0, abs(t)):
                return k
        raise ValueError(f"t={t} is not a sample time of the trajectory")


@dataclass(frozen=True)
class QuasiOptimalPolicy:
    """Gradient feedback plus a bounded sinusoidal bias.

    ``b(t) = amplitude * sin(2 pi frequency t + phase) * e`` with a unit
    direction ``e`` and phase drawn from ``seed``.  The declared
    quasi-optimality constants are ``eta`` (either a constant or samples
    ``eta_values`` on ``eta_times``) and ``eps0``; ``K`` is the constant of
    the value/objective comparison used by the decay bound.
    """

    eta: float
    eps0: float
    K: float
    amplitude: float = 0.02
    frequency: float = 0.5
    seed: int = 0
    eta_times: Optional[Sequence[float]] = None
    eta_values: Optional[Sequence[float]] = None
    max_halvings: int = 40

    def __post_init__(self):
        if self.eta < 0 or self.eps0 < 0:
            raise ValueError("eta and eps0 must be nonnegative")
        if self.K <= 0:
            raise ValueError("K must be positive")
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if (self.eta_times is None) != (self.eta_values is None):
            raise ValueError("eta_times and eta_values go together")
        if self.eta_values is not None:
            v = np.asarray(self.eta_values, dtype=float)
            if np.any(v < 0) or v.max() > self.eta + 1e-15:
                raise ValueError("eta samples must be nonnegative and bounded by eta")

    @property
    def eta_sup(self) -> float:
        return float(self.eta)

    def eta_at(self, t):
        """Declared schedule ``eta(t)``."""
        t = np.asarray(t, dtype=float)
        if self.eta_values is None:
            return np.full_like(t, self.eta)
        return np.interp(t, np.asarray(self.eta_times, float), np.asarray(self.eta_values, float))

    def validate(self, lam: float) -> None:
        """Hypothesis of the perturbed decay bound: ``||eta|| < 1 - lam / K``."""
        if not self.eta < 1.0 - lam / self.K:
            raise ValueError(f"eta={self.eta} must be below 1 - lam/K = {1.0 - lam / self.K:.6g}")

    def direction_and_phase(self, dim: int):
        rng = np.random.default_rng(self.seed)
        phase = float(rng.uniform(0.0, 2.0 * math.pi))
        e = rng.normal(size=dim)
        e = e / np.linalg.norm(e)
        return e, phase


def sampled_theta(K: float, lam: float, sigma: float, delta_min: float, delta_max: float):
    """``(theta, c)`` of the sampled-feedback decay bound."""
    c = 0.5 * sigma * math.exp(-K * delta_max)
    theta = K - lam - K * c - math.log1p(c) / delta_min
    return theta, c


@dataclass(frozen=True)
class SampledPolicy:
    """Feedback re-evaluated at updating times with gaps in ``[delta_min, delta_max]``.

    Gaps are drawn uniformly from ``seed`` (and rounded to the integration
    step); equal bounds give a fixed sampling period.
    """

    delta_min: float
    delta_max: float
    sigma: float
    seed: int = 0
    K: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.delta_min <= self.delta_max):
            raise ValueError("need 0 < delta_min <= delta_max")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    def theta(self, lam: float, K: Optional[float] = None):
        K = self.K if K is None else K
        if K is None:
            raise ValueError("K is required")
        return sampled_theta(K, lam, self.sigma, self.delta_min, self.delta_max)

    def validate(self, lam: float, K: Optional[float] = None) -> None:
        theta, _ = self.theta(lam, K)
        if not theta > 0:
            raise ValueError(f"sampled policy makes the decay bound vacuous (theta={theta:.4g} <= 0)")

    def update_steps(self, dt: float, n_steps: int):
        """Update step indices ``0 = k_0 < k_1 < ...`` (multiples of ``dt``)."""
        lo = math.ceil(self.delta_min / dt - 1e-9)
        hi = math.floor(self.delta_max / dt + 1e-9)
        if lo > hi or hi < 1:
            raise ValueError("no multiple of dt lies in [delta_min, delta_max]")
        lo = max(lo, 1)
        rng = np.random.default_rng(self.seed)
        steps = [0]
        while True:
            gap = lo if lo == hi else int(rng.integers(lo, hi + 1))
            if steps[-1] + gap >= n_steps:
                return steps
            steps.append(steps[-1] + gap)


class _Field:
    """Fast gradient/value access to an immutable field."""

    def __init__(self, vf: ValueField):
        self.vf = vf
        self.lo, self.h, self.nodes = vf.grid._params()
        self.hi = np.ascontiguousarray(vf.grid.upper, dtype=float)
        self.k = _backend.kernels

    def grad(self, y):
        return self.k.gradient_many(self.vf.values, self.lo, self.hi, self.h, self.nodes,
                                    np.ascontiguousarray(y, dtype=float).reshape(1, -1))[0]

    def grad_many(self, Y):
        return self.k.gradient_many(self.vf.values, self.lo, self.hi, self.h, self.nodes,
                                    np.ascontiguousarray(Y, dtype=float))

    def clamp(self, y):
        return np.minimum(np.maximum(y, self.lo), self.hi)

    def check(self, y):
        slack = self.h * (1.0 + 1e-9)
        if np.any(y < self.lo - slack) or np.any(y > self.hi + slack) or not np.all(np.isfinite(y)):
            raise TrajectoryError(
                f"state {np.asarray(y).tolist()} left the box by more than one cell")


def _check_start(vf: ValueField, x0):
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != vf.dim:
        raise ValueError("x0 dimension does not match the field")
    if not vf.grid.contains(x0):
        raise ValueError(f"x0={x0.tolist()} lies outside the grid box")
    return clamp_to_box(vf.grid, x0)


def _check_step(vf: ValueField, obj: ObjectiveSpec, T: float, dt: float):
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    if not dt * math.sqrt(6.0 * obj.sup_norm) < 4.0 * vf.grid.h_min:
        raise ValueError("dt too large: a step could skip more than four cells")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * T:
        raise ValueError("T must be a multiple of dt")
    return n


def _finish(vf, obj, times, states, controls, hold, meta):
    states = np.asarray(states)
    controls = np.asarray(controls)
    u_vals = interpolate_many(vf, states)
    dists = np.asarray(obj.minimizers.dist(states), dtype=float)
    speed2 = np.sum(controls * controls, axis=1)
    traj = Trajectory(times=np.asarray(times, dtype=float), states=states, controls=controls,
                      u_vals=u_vals, dists=dists, speed2=speed2,
                      h_vals=np.zeros(len(times)), hold=hold, meta=meta)
    traj.h_vals = dpp_h_series(traj, obj, vf.lam, vf)
    traj.meta.setdefault("lam", vf.lam)
    traj.meta.setdefault("objective", obj.name)
    traj.meta.setdefault("grid_h", vf.grid.h_max)
    traj.meta.setdefault("f_min", obj.f_min)
    return traj


def _gradient_jumps(grads, times, factor=10.0, floor=1e-8):
    mags = np.linalg.norm(grads, axis=1)
    a, b = mags[:-1], mags[1:]
    big = np.maximum(a, b)
    small = np.minimum(a, b)
    idx = np.nonzero((big > floor) & (big > factor * np.maximum(small, floor * 1e-3)))[0]
    return [float(times[i + 1]) for i in idx]


def _rk4(fld: _Field, x0, n, dt, bias=None):
    """Classical RK4 on y' = -Du(y) + bias(t), stages clamped to the box."""
    d = x0.size
    states = np.empty((n + 1, d))
    states[0] = x0
    y = x0.copy()
    for j in range(n):
        t = j * dt
        k1 = -fld.grad(y)
        if bias is not None:
            b0, bm, b1 = bias(t), bias(t + 0.5 * dt), bias(t + dt)
            k1 = k1 + b0
        k2 = -fld.grad(fld.clamp(y + 0.5 * dt * k1))
        if bias is not None:
            k2 = k2 + bm
        k3 = -fld.grad(fld.clamp(y + 0.5 * dt * k2))
        if bias is not None:
            k3 = k3 + bm
        k4 = -fld.grad(fld.clamp(y + dt * k3))
        if bias is not None:
            k4 = k4 + b1
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        fld.check(y)
        y = fld.clamp(y)
        states[j + 1] = y
    return states


def integrate_gradient_flow(vf: ValueField, obj: ObjectiveSpec, x0, T: float, dt: float) -> Trajectory:
    """Integrate the optimal feedback flow ``y' = -Du(y)`` with RK4.

    Parameters
    ----------
    vf : ValueField
        Solved value function.
    obj : ObjectiveSpec
        Objective used for running costs and distances.
    x0 : point
        Start, inside the grid box.
    T, dt : float
        Horizon and step (``T`` a multiple of ``dt``).
    """
    x0 = _check_start(vf, x0)
    n = _check_step(vf, obj, T, dt)
    fld = _Field(vf)
    states = _rk4(fld, x0, n, dt)
    times = dt * np.arange(n + 1)
    controls = -fld.grad_many(states)
    meta = {"policy": "optimal", "dt": dt, "T": T,
            "gradient_jumps": _gradient_jumps(controls, times)}
    return _finish(vf, obj, times, states, controls, False, meta)


def integrate_constant_control(vf: ValueField, obj: ObjectiveSpec, x0, T: float, dt: float,
                               control) -> Trajectory:
    """Move with a fixed velocity ``control`` (clamped at the box faces)."""
    x0 = _check_start(vf, x0)
    n = _check_step(vf, obj, T, dt)
    a = np.asarray(control, dtype=float).reshape(-1)
    times = dt * np.arange(n + 1)
    raw = x0[None, :] + times[:, None] * a[None, :]
    states = clamp_to_box(vf.grid, raw)
    # Once clamped the motion stops along that axis.
    moving = np.isclose(states, raw)
    controls = np.where(moving, a[None, :], 0.0)
    meta = {"policy": "constant", "dt": dt, "T": T, "control": a.tolist()}
    return _finish(vf, obj, times, states, controls, True, meta)


def _bias_fn(policy: QuasiOptimalPolicy, dim: int, amplitude: float):
    e, phase = policy.direction_and_phase(dim)
    w = 2.0 * math.pi * policy.frequency

    def bias(t):
        return amplitude * math.sin(w * t + phase) * e

    return bias


def integrate_perturbed(vf: ValueField, obj: ObjectiveSpec, x0, T: float, dt: float,
                        policy: QuasiOptimalPolicy, floor: Optional[float] = None) -> Trajectory:
    """Integrate ``y' = -Du(y) + b(t)`` with a calibrated bias.

    The bias amplitude starts at ``policy.amplitude`` and is halved until the
    realized quasi-optimality residuals satisfy ``eta_hat(t) <= eta(t)`` and
    ``eps0_hat <= eps0``.  The realized values, the final amplitude and the
    number of halvings are stored in ``traj.meta``.

    Raises
    ------
    CalibrationError
        If no amplitude (down to zero) meets the declared constants.
    """
    from .analysis import verify_assumption_C

    policy.validate(vf.lam)
    x0 = _check_start(vf, x0)
    n = _check_step(vf, obj, T, dt)
    fld = _Field(vf)
    times = dt * np.arange(n + 1)
    amp = float(policy.amplitude)
    eta_decl = policy.eta_at(times)
    for rounds in range(policy.max_halvings + 2):
        last = rounds == policy.max_halvings + 1
        if last:
            amp = 0.0
        bias = _bias_fn(policy, vf.dim, amp) if amp > 0 else None
        states = _rk4(fld, x0, n, dt, bias)
        controls = -fld.grad_many(states)
        if bias is not None:
            controls = controls + np.array([bias(t) for t in times])
        meta = {"policy": "quasi", "dt": dt, "T": T, "amplitude": amp,
                "halvings": rounds, "eta_declared": policy.eta, "eps0_declared": policy.eps0,
                "seed": policy.seed, "gradient_jumps": _gradient_jumps(controls, times)}
        traj = _finish(vf, obj, times, states, controls, False, meta)
        eta_hat, eps0_hat = verify_assumption_C(traj, obj, vf.lam, vf, floor=floor)
        if np.all(eta_hat <= eta_decl + 1e-12) and eps0_hat <= policy.eps0:
            traj.meta["eta_hat"] = eta_hat
            traj.meta["eps0_hat"] = float(eps0_hat)
            traj.meta["eta_hat_max"] = float(np.max(eta_hat)) if eta_hat.size else 0.0
            return traj
        if last:
            break
        amp *= 0.5
    raise CalibrationError(
        f"realized quasi-optimality (eta_hat={float(np.max(eta_hat)):.3g}, eps0_hat={eps0_hat:.3g}) "
        f"exceeds the declared (eta={policy.eta}, eps0={policy.eps0}) even without perturbation")


def integrate_receding_horizon(vf: ValueField, obj: ObjectiveSpec, x0, T: float, dt: float,
                               policy: SampledPolicy) -> Trajectory:
    """Sampled feedback with zero-order hold between updating times.

    At each updating time ``tau_i`` the feedback ``-Du(y(tau_i))`` is
    evaluated and held until ``tau_{i+1}``; the state moves linearly in
    between.  Updating times and the a-posteriori sampled quasi-optimality
    residuals (tail cost minus value at each ``tau_i``) are stored in
    ``traj.meta``.
    """
    if policy.K is not None:
        policy.validate(vf.lam)
    x0 = _check_start(vf, x0)
    n = _check_step(vf, obj, T, dt)
    fld = _Field(vf)
    steps = policy.update_steps(dt, n)
    bounds = steps + [n]
    states = np.empty((n + 1, vf.dim))
    controls = np.empty((n + 1, vf.dim))
    y = x0.copy()
    states[0] = y
    for k0, k1 in zip(bounds[:-1], bounds[1:]):
        a = -fld.grad(y)
        for j in range(k0, k1):
            controls[j] = a
            ynew = states[k0] + (j + 1 - k0) * dt * a
            fld.check(ynew)
            states[j + 1] = fld.clamp(ynew)
        y = states[k1]
    controls[n] = -fld.grad(states[n])
    times = dt * np.arange(n + 1)
    meta = {"policy": "sampled", "dt": dt, "T": T, "update_times": [float(times[k]) for k in steps],
            "delta_min": policy.delta_min, "delta_max": policy.delta_max, "sigma": policy.sigma,
            "seed": policy.seed}
    traj = _finish(vf, obj, times, states, controls, True, meta)
    tails = tail_costs(traj, obj, vf.lam, vf, shifted=True)
    ut = traj.u_vals - obj.f_min / vf.lam
    traj.meta["sampled_residuals"] = [float(tails[k] - ut[k]) for k in steps]
    if policy.K is not None:
        _, c = policy.theta(vf.lam)
        traj.meta["sampled_allowance"] = [float(c * ut[k]) for k in steps]
    return traj


# ---------------------------------------------------------------------------
# Costs and the dynamic-programming functional
# ---------------------------------------------------------------------------


def _discounted_increments(traj: Trajectory, obj: ObjectiveSpec, lam: float):
    """Trapezoid integrals of (0.5|a|^2 + f(y)) e^{-lam s} over each step."""
    t = traj.times
    fy = obj(traj.states)
    disc = np.exp(-lam * t)
    if traj.hold:
        # control a_j held on [t_j, t_{j+1})
        ca = 0.5 * traj.speed2[:-1]
        left = (ca + fy[:-1]) * disc[:-1]
        right = (ca + fy[1:]) * disc[1:]
    else:
        L = (0.5 * traj.speed2 + fy) * disc
        left, right = L[:-1], L[1:]
    return 0.5 * np.diff(t) * (left + right)


def dpp_h_series(traj: Trajectory, obj: ObjectiveSpec, lam: float, vf: ValueField) -> np.ndarray:
    """``h(t_j)`` = running discounted cost up to ``t_j`` + ``u(y(t_j)) e^{-lam t_j}``."""
    inc = _discounted_increments(traj, obj, lam)
    running = np.concatenate([[0.0], np.cumsum(inc)])
    u = interpolate_many(vf, traj.states)
    return running + u * np.exp(-lam * traj.times)


def tail_costs(traj: Trajectory, obj: ObjectiveSpec, lam: float, vf: ValueField,
               shifted: bool = False) -> np.ndarray:
    """Tail cost from every sample time (see :func:`cost_functional`)."""
    inc = _discounted_increments(traj, obj, lam)
    running = np.concatenate([[0.0], np.cumsum(inc)])
    t = traj.times
    uT = float(interpolate_many(vf, traj.states[-1:])[0])
    tails = (running[-1] - running) * np.exp(lam * t) + np.exp(-lam * (t[-1] - t)) * uT
    if shifted:
        tails = tails - obj.f_min / lam
    return tails


def cost_functional(traj: Trajectory, obj: ObjectiveSpec, lam: float, vf: ValueField,
                    t_start: float = 0.0, shifted: bool = False) -> float:
    """Discounted cost of the trajectory from ``t_start`` on.

    Trapezoid quadrature of ``(0.5|a|^2 + f(y)) e^{-lam (s - t_start)}`` over
    ``[t_start, T]`` plus the closure ``e^{-lam (T - t_start)} u(y(T))``.
    With ``shifted=True`` the constant ``f_min / lam`` is subtracted.
    """
    j = traj.index_of(t_start)
    return float(tail_costs(traj, obj, lam, vf, shifted)[j])


def h_step_tolerance(traj: Trajectory, obj: ObjectiveSpec, lam: float, vf: ValueField,
                     base: float = 1e-6) -> np.ndarray:
    """Allowed decrease of ``h`` over each step.

    Three numerical effects can make ``h`` decrease although the exact
    functional never does:

    * the field is not an exact HJB solution: for any control the derivative
      of ``h`` is bounded below by ``-e^{-lam t} |lam u + 0.5|Du|^2 - f|``,
      integrated over the step;
    * interpolation: the increment of the piecewise-multilinear ``u`` over a
      step differs from the one predicted by the difference gradient
      (``Du . dy``, trapezoid in time); the discrepancy is allowed;
    * quadrature: the trapezoid error of the running cost, estimated from
      second differences.

    ``base`` is added to every step.
    """
    fld = _Field(vf)
    G = fld.grad_many(traj.states)
    fy = obj(traj.states)
    res = np.abs(lam * traj.u_vals + 0.5 * np.sum(G * G, axis=1) - fy)
    disc = np.exp(-lam * traj.times)
    dt = np.diff(traj.times)
    hjb = 0.5 * dt * (res[:-1] * disc[:-1] + res[1:] * disc[1:])
    dy = np.diff(traj.states, axis=0)
    predicted = 0.5 * np.sum((G[:-1] + G[1:]) * dy, axis=1)
    interp = np.abs(np.diff(traj.u_vals) - predicted) * disc[:-1]
    if traj.hold:
        # the held control jumps at updating times; the running cost of each
        # step uses the control active on it, so only f varies within a step
        L = fy * disc
    else:
        L = (0.5 * traj.speed2 + fy) * disc
    second = np.zeros_like(L)
    if L.size >= 3:
        second[1:-1] = np.abs(L[2:] - 2.0 * L[1:-1] + L[:-2])
        second[0], second[-1] = second[1], second[-2]
    quad = dt / 12.0 * np.maximum(second[:-1], second[1:])
    return base + hjb + interp + quad


# ---------------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return "%.17g" % v


def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Write ``t,y1..yn,a1..an,u,dist,speed2,h`` with 17 significant digits."""
    n = traj.dim
    header = ["t"] + [f"y{i + 1}" for i in range(n)] + [f"a{i + 1}" for i in range(n)] + [
        "u", "dist", "speed2", "h"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for j in range(len(traj)):
            row = [traj.times[j], *traj.states[j], *traj.controls[j], traj.u_vals[j],
                   traj.dists[j], traj.speed2[j], traj.h_vals[j]]
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_trajectory_csv(path, hold: bool = False) -> Trajectory:
    """Read a trajectory written by :func:`write_trajectory_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in r] for r in reader if r]
    if not header or header[0] != "t" or header[-4:] != ["u", "dist", "speed2", "h"]:
        raise ValueError("not a trajectory CSV (unexpected header)")
    n = (len(header) - 5) // 2
    if header[1:1 + n] != [f"y{i + 1}" for i in range(n)] or len(header) != 2 * n + 5:
        raise ValueError("not a trajectory CSV (unexpected header)")
    A = np.asarray(rows, dtype=float).reshape(-1, len(header))
    return Trajectory(times=A[:, 0], states=A[:, 1:1 + n], controls=A[:, 1 + n:1 + 2 * n],
                      u_vals=A[:, 2 * n + 1], dists=A[:, 2 * n + 2], speed2=A[:, 2 * n + 3],
                      h_vals=A[:, 2 * n + 4], hold=hold, meta={"source": str(path)})

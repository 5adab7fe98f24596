"""Command-line experiment runner.

Subcommands
-----------
``solve``          solve the HJB equation of a configuration -> value file, log
``trajectory``     integrate the configured policy on a value file -> CSV
``rates``          decay-rate and assumption reports for a trajectory
``suite``          run the acceptance matrix -> ``suite.csv``
``riccati-check``  compare solves with the closed-form Riccati value

Every failure prints one line ``hjbopt: error[<cause>]: <message>`` on
stderr and exits with the code of its cause (see :data:`EXIT_CODES`).
Every emitted file is listed with its size and SHA-256 in
``manifest.json`` of the output directory.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time
from typing import Dict, List, Optional

import numpy as np

from . import __version__
from . import analysis as A
from .config import ConfigError, ExperimentConfig, load_config
from .grid import ValueField, load_value_field, read_value_header, save_value_field
from .objectives import estimate_quadratic_growth
from .solver import SolverError, solve, write_solver_log
from .trajectory import (CalibrationError, QuasiOptimalPolicy, SampledPolicy, Trajectory,
                         TrajectoryError, integrate_gradient_flow, integrate_perturbed,
                         integrate_receding_horizon, read_trajectory_csv, write_trajectory_csv)

__all__ = ["main", "EXIT_CODES", "CliError"]

#: Exit code per failure cause.
EXIT_CODES = {
    "internal": 1,
    "config-invalid": 2,
    "input-mismatch": 3,
    "output-not-writable": 4,
    "solver-failed": 5,
    "analysis-precondition": 6,
    "suite-failed": 7,
    "integration-failed": 8,
    "input-unreadable": 9,
}

VALUE_FILE = "value.hjbv"
SOLVER_LOG = "solver_log.csv"
TRAJECTORY_FILE = "trajectory.csv"
MANIFEST = "manifest.json"


class CliError(Exception):
    """A failure with a named cause (key of :data:`EXIT_CODES`)."""

    def __init__(self, cause: str, message: str):
        super().__init__(message)
        self.cause = cause

    @property
    def code(self) -> int:
        return EXIT_CODES[self.cause]


# ---------------------------------------------------------------------------
# Output directory and manifest
# ---------------------------------------------------------------------------


class Output:
    """Writes files into the output directory and records them in the manifest."""

    def __init__(self, path: str):
        self.path = path
        self.files: List[str] = []
        self.stages: Dict[str, float] = {}

    def ensure_writable(self) -> None:
        try:
            os.makedirs(self.path, exist_ok=True)
            probe = os.path.join(self.path, ".hjbopt-write-probe")
            with open(probe, "w"):
                pass
            os.remove(probe)
        except OSError as exc:
            raise CliError("output-not-writable",
                           f"cannot write to {self.path}: {exc.strerror or exc}") from None

    def file(self, name: str) -> str:
        self.files.append(name)
        return os.path.join(self.path, name)

    def write_manifest(self, cfg_hash: Optional[str]) -> None:
        path = os.path.join(self.path, MANIFEST)
        manifest = {"tool_version": __version__, "config_sha256": cfg_hash,
                    "stages": {}, "files": {}}
        if os.path.exists(path):
            try:
                with open(path) as fh:
                    old = json.load(fh)
                if old.get("config_sha256") == cfg_hash:
                    manifest["stages"].update(old.get("stages", {}))
                    manifest["files"].update(old.get("files", {}))
            except (OSError, ValueError):
                pass
        manifest["stages"].update({k: round(v, 6) for k, v in self.stages.items()})
        for name in self.files:
            full = os.path.join(self.path, name)
            with open(full, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            manifest["files"][name] = {"bytes": os.path.getsize(full), "sha256": digest}
        manifest["files"] = {k: v for k, v in manifest["files"].items()
                             if os.path.exists(os.path.join(self.path, k))}
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Stages
# ---------------------------------------------------------------------------


def _load_cfg(args) -> ExperimentConfig:
    if not args.config:
        raise CliError("config-invalid", "--config is required for this command")
    try:
        return load_config(args.config, seed=args.seed)
    except ConfigError as exc:
        raise CliError("config-invalid", str(exc)) from None


def _output(args, cfg: Optional[ExperimentConfig]) -> Output:
    out = Output(args.out or (cfg.output_dir if cfg else "hjbopt_out"))
    out.ensure_writable()
    return out


def _load_value(cfg: ExperimentConfig, path: str) -> ValueField:
    try:
        grid, lam, _ = read_value_header(path)
    except (OSError, ValueError) as exc:
        raise CliError("input-unreadable", f"value file {path}: {exc}") from None
    g = cfg.grid
    same = (grid.dim == g.dim and np.allclose(grid.lower, g.lower, rtol=0, atol=1e-12)
            and np.allclose(grid.upper, g.upper, rtol=0, atol=1e-12)
            and tuple(grid.nodes) == tuple(g.nodes) and abs(lam - cfg.lam) <= 1e-15)
    if not same:
        raise CliError("input-mismatch", f"value file {path} does not match the configured "
                       "domain/nodes/lambda")
    return load_value_field(path)


def _resolve(args, out: Output, attr: str, default: str) -> str:
    path = getattr(args, attr, None)
    return path if path else os.path.join(out.path, default)


def cmd_solve(args) -> int:
    cfg = _load_cfg(args)
    out = _output(args, cfg)
    t0 = time.perf_counter()
    try:
        vf = solve(cfg.objective, cfg.grid, cfg.lam, cfg.solver)
    except SolverError as exc:
        raise CliError("solver-failed", str(exc)) from None
    out.stages["solve"] = time.perf_counter() - t0
    save_value_field(out.file(VALUE_FILE), vf)
    write_solver_log(out.file(SOLVER_LOG), vf)
    out.write_manifest(cfg.digest())
    print(f"solved {cfg.objective.name}: {vf.meta['iterations']} sweeps, "
          f"update {vf.meta['achieved']:.3g} -> {os.path.join(out.path, VALUE_FILE)}")
    return 0


def _integrate(cfg: ExperimentConfig, vf: ValueField) -> Trajectory:
    tcfg = cfg.trajectory
    pol = tcfg["policy"]
    obj, x0, T, dt = cfg.objective, tcfg["x0"], tcfg["T"], tcfg["dt"]
    if not cfg.grid.contains(x0):
        raise CliError("input-mismatch", f"x0={list(x0)} lies outside the domain box")
    floor = cfg.analysis["floor"]
    try:
        if pol["kind"] == "optimal":
            return integrate_gradient_flow(vf, obj, x0, T, dt)
        K = A.estimate_K(vf, obj, floor)
        if pol["kind"] == "quasi":
            extra = {k: pol[k] for k in ("amplitude", "frequency") if k in pol}
            policy = QuasiOptimalPolicy(eta=pol["eta"], eps0=pol["eps0"], K=K, seed=pol["seed"],
                                        **extra)
            return integrate_perturbed(vf, obj, x0, T, dt, policy, floor=floor)
        policy = SampledPolicy(pol["delta_min"], pol["delta_max"], pol["sigma"], seed=pol["seed"],
                               K=K)
        return integrate_receding_horizon(vf, obj, x0, T, dt, policy)
    except A.AnalysisError as exc:
        raise CliError("analysis-precondition", f"{exc.code}: {exc}") from None
    except (TrajectoryError, CalibrationError) as exc:
        raise CliError("integration-failed", str(exc)) from None
    except ValueError as exc:
        raise CliError("config-invalid", str(exc)) from None


def cmd_trajectory(args) -> int:
    cfg = _load_cfg(args)
    if cfg.trajectory is None:
        raise CliError("config-invalid", "configuration has no trajectory section")
    out = _output(args, cfg)
    vf = _load_value(cfg, _resolve(args, out, "value", VALUE_FILE))
    t0 = time.perf_counter()
    traj = _integrate(cfg, vf)
    out.stages["trajectory"] = time.perf_counter() - t0
    write_trajectory_csv(out.file(TRAJECTORY_FILE), traj)
    out.write_manifest(cfg.digest())
    print(f"integrated {len(traj)} samples; dist(y(T)) = {traj.dists[-1]:.3g}")
    return 0


def _rate_reports(cfg, vf, traj, K, growth) -> List[A.RateReport]:
    obj, lam = cfg.objective, cfg.lam
    pol = cfg.trajectory["policy"]
    ana = cfg.analysis
    tol_rate, tol_add = ana["tolerances"]["rate"], ana["tolerances"]["add"]
    fit_floor = ana["floor"] if ana["floor"] is not None else A.noise_floor(vf, obj)
    kind = pol["kind"]
    params = {"f_min": obj.f_min, "grid_h": vf.grid.h_max}
    if kind == "quasi":
        params.update(eta=pol["eta"], eps0=pol["eps0"])
    elif kind == "sampled":
        params.update(sigma=pol["sigma"], delta_min=pol["delta_min"], delta_max=pol["delta_max"])
    reports = [A.check_variational_bound(traj, K, lam, kind, params, tol_rate=tol_rate,
                                         tol_add=tol_add, floor=fit_floor)]
    if growth is None:
        return reports
    c1, c2 = growth
    consts = {"c1": c1, "c2": c2, "lam": lam, "f_min": obj.f_min, "grid_h": vf.grid.h_max}
    tau = A.entry_time(traj, r=ana["r"])
    if kind == "optimal":
        reports.append(A.check_pathwise_bound(traj, consts, tau, tol_rate, floor=fit_floor))
        reports.append(A.check_sandwich(traj, consts, tau, 0.0, 0.0, tol_add))
    elif kind == "quasi":
        q = dict(consts, eta=pol["eta"], eps0=pol["eps0"])
        reports.append(A.check_pathwise_bound(traj, q, tau, tol_rate, floor=fit_floor))
        reports.append(A.check_sandwich(traj, consts, tau, pol["eta"], pol["eps0"], tol_add))
    else:
        eta_hat, eps0_hat = A.verify_assumption_C(traj, obj, lam, vf, ana["floor"])
        reports.append(A.check_sandwich(traj, consts, tau, eta_hat, eps0_hat, tol_add))
    return reports


def _assumptions(cfg, vf):
    """Assumption report plus (K, growth); objective-level failures are recorded."""
    obj, lam, ana = cfg.objective, cfg.lam, cfg.analysis
    flags = {}
    try:
        K = A.estimate_K(vf, obj, ana["floor"])
        flags["B_estimable"] = True
    except A.AnalysisError:
        # u~ vanishes on the whole grid: K u~ <= f~ holds for every K
        K = math.inf
        flags["B_estimable"] = False
    flags["B"] = bool(K > lam)
    gamma = A.check_gap_A3(obj, ana["deltas"])
    flags["A3"] = bool(all(g > 0 for _, g in gamma))
    step = ana["growth_step"] or {1: 1e-3, 2: 1e-2, 3: 5e-2}[obj.dim]
    try:
        c1, c2 = estimate_quadratic_growth(obj, ana["r"], step)
        growth = (c1, c2)
        flags["D"] = True
    except ValueError:
        growth = None
        flags["D"] = False
    M = ana["M"] or cfg.solver.resolved(obj, cfg.grid).M
    try:
        lg = A.check_linear_growth_F_and_E(obj, ana["r"], M)
    except A.AnalysisError:
        lg = A.LinearGrowthReport(math.inf, math.inf, 0.0, False)
    flags["F"] = lg.holds
    flags["E"] = bool(lg.K_tilde > lam)
    pl = A.check_PL(vf, obj, K=K if math.isfinite(K) else None)
    report = A.AssumptionReport(
        K_est=K, gamma_table=gamma,
        growth=(growth[0], growth[1], ana["r"]) if growth else (math.nan, math.nan, ana["r"]),
        linear_growth_C=lg.C_F, beta_est=lg.beta, K_tilde=lg.K_tilde,
        pl_violation_fraction=pl,
        box=(tuple(float(v) for v in cfg.grid.lower), tuple(float(v) for v in cfg.grid.upper)),
        flags=flags)
    return report, K, growth


def _plot_files(out: Output, traj, reports, K, lam, obj, tau) -> None:
    ut = traj.u_vals - obj.f_min / lam
    t = traj.times
    if reports and math.isfinite(K):
        bound_u = np.exp(-reports[0].predicted_rate * t) * ut[0]
    else:
        bound_u = np.full_like(t, np.nan)
    bound_d = np.full_like(t, np.nan)
    path = next((r for r in reports if r.check == "pathwise"), None)
    if path is not None and tau is not None:
        j0 = traj.index_of(tau)
        d = path.details
        bound_d[j0:] = d["a"] * np.exp(-d["delta"] * (t[j0:] - tau)) * traj.dists[j0] ** 2
    with open(out.file("decay.dat"), "w") as fh:
        fh.write("# t u_tilde u_bound dist2 dist2_bound\n")
        for row in zip(t, ut, bound_u, traj.dists ** 2, bound_d):
            fh.write(" ".join("%.10g" % v for v in row) + "\n")
    with open(out.file("decay.gp"), "w") as fh:
        fh.write(
            "# gnuplot -p decay.gp\n"
            "set logscale y\n"
            "set xlabel 't'\n"
            "set key top right\n"
            "plot 'decay.dat' using 1:2 with lines title 'u~(y(t))', \\\n"
            "     'decay.dat' using 1:3 with lines dt 2 title 'value bound', \\\n"
            "     'decay.dat' using 1:4 with lines title 'dist^2', \\\n"
            "     'decay.dat' using 1:5 with lines dt 2 title 'dist^2 bound'\n")


def cmd_rates(args) -> int:
    cfg = _load_cfg(args)
    if cfg.trajectory is None:
        raise CliError("config-invalid", "configuration has no trajectory section")
    out = _output(args, cfg)
    vf = _load_value(cfg, _resolve(args, out, "value", VALUE_FILE))
    tpath = _resolve(args, out, "trajectory", TRAJECTORY_FILE)
    hold = cfg.trajectory["policy"]["kind"] == "sampled"
    try:
        traj = read_trajectory_csv(tpath, hold=hold)
    except (OSError, ValueError) as exc:
        raise CliError("input-unreadable", f"trajectory file {tpath}: {exc}") from None
    if traj.dim != cfg.objective.dim:
        raise CliError("input-mismatch", "trajectory dimension does not match the configuration")
    traj.meta.update(lam=cfg.lam, f_min=cfg.objective.f_min, grid_h=vf.grid.h_max)
    t0 = time.perf_counter()
    try:
        assumptions, K, growth = _assumptions(cfg, vf)
        tau = None
        if math.isfinite(K):
            reports = _rate_reports(cfg, vf, traj, K, growth)
            if growth is not None:
                tau = A.entry_time(traj, r=cfg.analysis["r"])
        else:
            reports = []
    except A.AnalysisError as exc:
        raise CliError("analysis-precondition", f"{exc.code}: {exc}") from None
    out.stages["rates"] = time.perf_counter() - t0
    with open(out.file("rates.json"), "w") as fh:
        json.dump({"reports": [r.to_dict() for r in reports],
                   "all_pass": all(r.passed for r in reports)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    A.write_report(out.file("assumptions.json"), assumptions)
    A.write_gamma_table(out.file("gamma.csv"), assumptions.gamma_table)
    _plot_files(out, traj, reports, K, cfg.lam, cfg.objective, tau)
    out.write_manifest(cfg.digest())
    for r in reports:
        print(f"{r.check}: {'PASS' if r.passed else 'FAILED'} "
              f"(violations={r.bound_violations}, fitted={r.fitted_rate:.4g}, "
              f"predicted={r.predicted_rate:.4g})")
    for name, ok in sorted(assumptions.flags.items()):
        print(f"assumption {name}: {'holds' if ok else 'FAILED'}")
    return 0


def cmd_suite(args) -> int:
    from .suite import run_suite, write_suite_csv

    out = _output(args, None)
    t0 = time.perf_counter()
    rows = run_suite(quick=args.quick, seed=args.seed or 0)
    out.stages["suite"] = time.perf_counter() - t0
    buf = io.StringIO()
    write_suite_csv(buf, rows)
    with open(out.file("suite.csv"), "w") as fh:
        fh.write(buf.getvalue())
    out.write_manifest(None)
    sys.stdout.write(buf.getvalue())
    failed = [r for r in rows if not r.passed]
    if failed:
        raise CliError("suite-failed", f"{len(failed)} of {len(rows)} checks failed")
    return 0


def cmd_riccati_check(args) -> int:
    from .suite import riccati_matrix, riccati_relative_error

    cfg = _load_cfg(args) if args.config else None
    out = _output(args, cfg)
    lines = ["case,check,predicted,measured,pass"]
    ok_all = True
    if cfg is None:
        for case, err, ok, secs, fast in riccati_matrix(401):
            lines.append(f"{case},relative_error,<=0.02,{err!r},{'PASS' if ok else 'FAIL'}")
            lines.append(f"{case},solve_seconds,<=10,{secs!r},{'PASS' if fast else 'FAIL'}")
            ok_all &= ok and fast
    else:
        if cfg.objective.name != "riccati_dist":
            raise CliError("config-invalid", "riccati-check needs a riccati_dist objective")
        try:
            vf = solve(cfg.objective, cfg.grid, cfg.lam, cfg.solver)
        except SolverError as exc:
            raise CliError("solver-failed", str(exc)) from None
        c = cfg.objective.params["c"]
        err = riccati_relative_error(vf, cfg.objective, cfg.lam, c)
        ok_all = err <= 0.02
        lines.append(f"{cfg.objective.name},relative_error,<=0.02,{err!r},"
                     f"{'PASS' if ok_all else 'FAIL'}")
    text = "\n".join(lines) + "\n"
    with open(out.file("riccati_check.csv"), "w") as fh:
        fh.write(text)
    out.write_manifest(cfg.digest() if cfg else None)
    sys.stdout.write(text)
    if not ok_all:
        raise CliError("suite-failed", "closed-form comparison failed")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _seed(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("config-invalid", f"usage: {message}")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # Sub-command copies use SUPPRESS so flags given before the sub-command
    # are not overwritten by the sub-parser defaults.
    d = {"default": argparse.SUPPRESS} if suppress else {}
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML experiment configuration", **d)
    common.add_argument("--out", help="output directory (default: output_dir of the config)", **d)
    common.add_argument("--quick", action="store_true", help="half-resolution suite", **d)
    common.add_argument("--seed", type=_seed, help="seed for stochastic policies (u64)", **d)
    return common


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hjbopt", description="Value-function optimisation experiments.",
                parents=[_common(False)])
    p.add_argument("--version", action="version", version=f"hjbopt {__version__}")
    common = _common(True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("solve", parents=[common], help="solve the HJB equation")
    s.set_defaults(func=cmd_solve)
    s = sub.add_parser("trajectory", parents=[common], help="integrate a policy")
    s.add_argument("value", nargs="?", help="value file (default: <out>/value.hjbv)")
    s.set_defaults(func=cmd_trajectory)
    s = sub.add_parser("rates", parents=[common], help="decay and assumption reports")
    s.add_argument("trajectory", nargs="?", help="trajectory CSV (default: <out>/trajectory.csv)")
    s.add_argument("value", nargs="?", help="value file (default: <out>/value.hjbv)")
    s.set_defaults(func=cmd_rates)
    s = sub.add_parser("suite", parents=[common], help="run the acceptance matrix")
    s.set_defaults(func=cmd_suite)
    s = sub.add_parser("riccati-check", parents=[common], help="closed-form comparison")
    s.set_defaults(func=cmd_riccati_check)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except CliError as exc:
        msg = " ".join(str(exc).split())
        print(f"hjbopt: error[{exc.cause}]: {msg}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # pragma: no cover - defensive: keep the one-line contract
        msg = " ".join(f"{type(exc).__name__}: {exc}".split())
        print(f"hjbopt: error[internal]: {msg}", file=sys.stderr)
        return EXIT_CODES["internal"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

"""Feedback trajectories, discounted costs and the dynamic-programming functional."""

import math

import numpy as np
import pytest

from hjbopt.grid import RectGrid
from hjbopt.objectives import builtin_objective
from hjbopt.solver import field_from_function, riccati_constant, solve
from hjbopt.trajectory import (CalibrationError, QuasiOptimalPolicy, SampledPolicy, Trajectory,
                               TrajectoryError, cost_functional, dpp_h_series, h_step_tolerance,
                               integrate_constant_control, integrate_gradient_flow,
                               integrate_perturbed, integrate_receding_horizon,
                               read_trajectory_csv, sampled_theta, tail_costs,
                               write_trajectory_csv)

LAM = 0.1
K_RICCATI = 1.0512493  # c / (2C) for c = 1, lambda = 0.1
RHO = 2 * riccati_constant(LAM, 1.0)


def analytic_flow(x0, t):
    """Flow of y' = -2C y, the exact optimal feedback of the Riccati problem."""
    return x0 * np.exp(-RHO * t)


class TestGradientFlow:
    def test_riccati_endpoint(self, riccati_obj, riccati_field):
        tr = integrate_gradient_flow(riccati_field, riccati_obj, [1.0], 3.0, 1e-3)
        assert tr.states[-1, 0] == pytest.approx(analytic_flow(1.0, 3.0), abs=5e-3)
        assert tr.states[-1, 0] == pytest.approx(0.0576, abs=5e-3)

    def test_riccati_path(self, riccati_flow):
        t = riccati_flow.times[riccati_flow.times <= 3.0]
        y = riccati_flow.states[: len(t), 0]
        assert np.max(np.abs(y - analytic_flow(1.0, t))) <= 5e-3

    def test_start_on_minimizer(self, dw_obj, dw_field):
        tr = integrate_gradient_flow(dw_field, dw_obj, [1.0], 5.0, 1e-3)
        assert np.max(np.abs(tr.states[:, 0] - 1.0)) <= dw_field.grid.h[0]

    def test_double_well_limit(self, dw_flow):
        assert dw_flow.dists[-1] <= 1e-2
        assert dw_flow.states[-1, 0] == pytest.approx(1.0, abs=1e-2)

    def test_double_well_matches_finer_grid(self, dw_obj, dw_flow):
        fine = solve(dw_obj, RectGrid(dw_obj.lower, dw_obj.upper, (1601,)), LAM)
        ref = integrate_gradient_flow(fine, dw_obj, [0.5], 40.0, 1e-3)
        assert abs(ref.states[-1, 0] - dw_flow.states[-1, 0]) <= 1e-2

    def test_energy_identity(self, riccati_flow, dw_flow):
        for tr in (riccati_flow, dw_flow):
            assert np.all(np.diff(tr.u_vals) <= 1e-9)

    def test_recorded_columns(self, riccati_flow):
        tr = riccati_flow
        np.testing.assert_allclose(tr.speed2, tr.controls[:, 0] ** 2)
        np.testing.assert_allclose(tr.dists, np.abs(tr.states[:, 0]))
        assert tr.meta["policy"] == "optimal" and tr.meta["lam"] == LAM

    def test_h_nearly_constant(self, riccati_flow):
        h = riccati_flow.h_vals
        assert np.max(np.abs(h - h[0])) <= 0.02 * h[0] + 5 * riccati_flow.meta["grid_h"]

    def test_errors(self, dw_obj, dw_field):
        with pytest.raises(ValueError, match="outside"):
            integrate_gradient_flow(dw_field, dw_obj, [2.5], 1.0, 1e-3)
        with pytest.raises(ValueError, match="dt too large"):
            integrate_gradient_flow(dw_field, dw_obj, [0.5], 1.0, 0.1)
        with pytest.raises(ValueError, match="multiple"):
            integrate_gradient_flow(dw_field, dw_obj, [0.5], 1.0005, 1e-3)
        with pytest.raises(ValueError, match="dimension"):
            integrate_gradient_flow(dw_field, dw_obj, [0.5, 0.1], 1.0, 1e-3)


class TestCostFunctional:
    def test_zero_control_on_minimizer(self, dw_obj, dw_field):
        tr = integrate_constant_control(dw_field, dw_obj, [1.0], 10.0, 1e-3, [0.0])
        assert cost_functional(tr, dw_obj, LAM, dw_field) == pytest.approx(dw_obj.f_min / LAM, abs=1e-12)
        assert cost_functional(tr, dw_obj, LAM, dw_field, shifted=True) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(tr.h_vals, dw_obj.f_min / LAM, atol=1e-12)

    def test_zero_control_geometric_sum(self):
        obj = builtin_objective("double_well")
        g = RectGrid(obj.lower, obj.upper, (41,))
        fval = float(obj([0.5]))
        vf = field_from_function(g, LAM, lambda P: obj(P) / LAM)  # exact for resting
        tr = integrate_constant_control(vf, obj, [0.5], 10.0, 1e-2, [0.0])
        exact = fval / LAM  # integral to T plus closure e^{-lam T} f / lam
        assert cost_functional(tr, obj, LAM, vf) == pytest.approx(exact, rel=1e-6)
        mid = cost_functional(tr, obj, LAM, vf, t_start=4.0)
        assert mid == pytest.approx(exact, rel=1e-6)

    def test_optimal_riccati_value(self, riccati_obj, riccati_field_fine, riccati_flow):
        J = cost_functional(riccati_flow, riccati_obj, LAM, riccati_field_fine)
        assert J == pytest.approx(0.4756246, rel=0.02)

    def test_constant_control_is_suboptimal(self, dw_obj, dw_field):
        M = 1.1 * math.sqrt(6 * dw_obj.sup_norm)
        tr = integrate_constant_control(dw_field, dw_obj, [1.0], 1.0, 1e-3, [M])
        assert cost_functional(tr, dw_obj, LAM, dw_field) > dw_obj.f_min / LAM

    def test_h_monotone_constant_control(self, dw_obj, dw_field):
        tr = integrate_constant_control(dw_field, dw_obj, [-1.5], 5.0, 1e-3, [0.5])
        assert np.all(np.diff(tr.h_vals) >= -h_step_tolerance(tr, dw_obj, LAM, dw_field))
        assert tr.h_vals[-1] > tr.h_vals[0]

    def test_tail_costs_consistent(self, riccati_obj, riccati_field_fine, riccati_flow):
        tails = tail_costs(riccati_flow, riccati_obj, LAM, riccati_field_fine)
        j = riccati_flow.index_of(2.0)
        assert tails[j] == cost_functional(riccati_flow, riccati_obj, LAM, riccati_field_fine, 2.0)
        # dpp_h recombines running cost and value
        h = dpp_h_series(riccati_flow, riccati_obj, LAM, riccati_field_fine)
        np.testing.assert_allclose(h, riccati_flow.h_vals)

    def test_start_not_sample_time(self, riccati_obj, riccati_field_fine, riccati_flow):
        with pytest.raises(ValueError, match="sample time"):
            cost_functional(riccati_flow, riccati_obj, LAM, riccati_field_fine, 0.0005)


class TestPerturbed:
    def test_zero_bias_equals_flow(self, riccati_obj, riccati_field_fine, riccati_flow):
        pol = QuasiOptimalPolicy(eta=0.0, eps0=1.0, K=K_RICCATI, amplitude=0.0)
        tr = integrate_perturbed(riccati_field_fine, riccati_obj, [1.0], 20.0, 1e-3, pol)
        np.testing.assert_array_equal(tr.states, riccati_flow.states)

    def test_small_bias_meets_declared_constants(self, riccati_obj, riccati_field_fine):
        pol = QuasiOptimalPolicy(eta=0.2, eps0=5e-3, K=K_RICCATI, amplitude=0.02, seed=1)
        tr = integrate_perturbed(riccati_field_fine, riccati_obj, [1.0], 20.0, 1e-3, pol)
        assert tr.meta["eps0_hat"] <= 5e-3
        assert tr.meta["eta_hat_max"] <= 0.2
        assert tr.meta["amplitude"] <= 0.02
        bound = math.sqrt(6 * riccati_obj.sup_norm) + tr.meta["amplitude"]
        assert np.max(np.abs(tr.controls[:, 0])) <= bound

    def test_policy_arithmetic(self):
        QuasiOptimalPolicy(eta=0.2, eps0=0.0, K=1.0513).validate(LAM)
        assert 0.2 < 1 - LAM / 1.0513
        with pytest.raises(ValueError, match="below"):
            QuasiOptimalPolicy(eta=0.95, eps0=0.0, K=1.0513).validate(LAM)

    @pytest.mark.parametrize("kw", [{"eta": -0.1}, {"eps0": -1.0}, {"K": 0.0},
                                    {"eta_times": [0.0, 1.0]}, {"amplitude": -1.0}])
    def test_invalid_policy(self, kw):
        base = dict(eta=0.1, eps0=0.0, K=1.0)
        base.update(kw)
        with pytest.raises(ValueError):
            QuasiOptimalPolicy(**base)

    def test_schedule(self):
        pol = QuasiOptimalPolicy(eta=0.3, eps0=0.0, K=1.0, eta_times=[0.0, 10.0],
                                 eta_values=[0.3, 0.1])
        assert pol.eta_at(5.0) == pytest.approx(0.2)

    def test_calibration_failure(self, riccati_obj):
        # a badly under-resolved field cannot meet eps0 = 0 even without a bias
        g = RectGrid(riccati_obj.lower, riccati_obj.upper, (41,))
        vf = field_from_function(g, LAM, lambda P: 0.3 * P[:, 0] ** 2)
        pol = QuasiOptimalPolicy(eta=0.0, eps0=0.0, K=K_RICCATI, max_halvings=2)
        with pytest.raises(CalibrationError):
            integrate_perturbed(vf, riccati_obj, [1.0], 5.0, 1e-2, pol)


class TestSampled:
    def test_one_step_hold_is_euler(self, riccati_obj, riccati_field):
        dt = 1e-3
        tr = integrate_receding_horizon(riccati_field, riccati_obj, [1.0], 2.0, dt,
                                        SampledPolicy(dt, dt, 0.1))
        y = np.array([1.0])
        from hjbopt.grid import gradient
        for _ in range(len(tr) - 1):
            y = y - dt * gradient(riccati_field, y)
        assert tr.states[-1, 0] == pytest.approx(y[0], abs=1e-12)

    def test_decay_bound(self, riccati_obj, riccati_field_fine):
        pol = SampledPolicy(0.5, 0.5, 0.1, K=K_RICCATI)
        tr = integrate_receding_horizon(riccati_field_fine, riccati_obj, [1.0], 20.0, 1e-3, pol)
        theta, c = pol.theta(LAM)
        assert theta > 0
        bound = (1 + c) * np.exp(-theta * tr.times) * tr.u_vals[0]
        h = riccati_field_fine.grid.h[0]
        assert np.all(tr.u_vals <= bound + h * h)
        assert tr.meta["update_times"][:3] == [0.0, 0.5, 1.0]
        assert len(tr.meta["sampled_residuals"]) == len(tr.meta["update_times"])

    def test_start_on_minimizer(self, dw_obj, dw_field):
        tr = integrate_receding_horizon(dw_field, dw_obj, [-1.0], 5.0, 1e-3,
                                        SampledPolicy(0.2, 0.4, 0.1, seed=3))
        assert tr.dists.max() <= dw_field.grid.h[0]

    def test_gaps_within_bounds(self):
        pol = SampledPolicy(0.05, 0.2, 0.1, seed=11)
        steps = np.array(pol.update_steps(1e-3, 20000))
        gaps = np.diff(steps) * 1e-3
        assert gaps.min() >= 0.05 - 1e-12 and gaps.max() <= 0.2 + 1e-12
        assert steps.tolist() == pol.update_steps(1e-3, 20000)

    def test_halving_study_converges_to_flow(self, riccati_obj, riccati_field):
        dt = 1e-3
        flow = integrate_gradient_flow(riccati_field, riccati_obj, [1.0], 5.0, dt)
        gaps = []
        for delta in (0.256, 0.128, 0.064, 0.032, 0.016, 0.008):
            tr = integrate_receding_horizon(riccati_field, riccati_obj, [1.0], 5.0, dt,
                                            SampledPolicy(delta, delta, 0.1))
            gaps.append(np.max(np.abs(tr.states - flow.states)))
        assert np.all(np.diff(gaps) < 0)

    def test_theta_formula(self):
        theta, c = sampled_theta(K_RICCATI, LAM, 0.1, 0.5, 0.5)
        c_ref = 0.05 * math.exp(-K_RICCATI * 0.5)
        assert c == pytest.approx(c_ref)
        assert theta == pytest.approx(K_RICCATI - LAM - K_RICCATI * c_ref - math.log1p(c_ref) / 0.5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            SampledPolicy(0.5, 0.2, 0.1)
        with pytest.raises(ValueError):
            SampledPolicy(0.1, 0.2, 0.0)
        with pytest.raises(ValueError, match="vacuous"):
            SampledPolicy(0.01, 0.01, 5.0, K=0.2).validate(LAM)
        with pytest.raises(ValueError, match="multiple"):
            SampledPolicy(0.0101, 0.0109, 0.1).update_steps(1e-3, 100)


class TestHMonotonicity:
    @pytest.mark.parametrize("kind", ["optimal", "sampled", "constant"])
    def test_h_nondecreasing_within_tolerance(self, kind, dw_obj, dw_field):
        if kind == "optimal":
            tr = integrate_gradient_flow(dw_field, dw_obj, [-1.8], 10.0, 1e-3)
        elif kind == "sampled":
            tr = integrate_receding_horizon(dw_field, dw_obj, [-1.8], 10.0, 1e-3,
                                            SampledPolicy(0.1, 0.3, 0.1, seed=2))
        else:
            tr = integrate_constant_control(dw_field, dw_obj, [0.2], 3.0, 1e-3, [-0.4])
        assert np.all(np.diff(tr.h_vals) >= -h_step_tolerance(tr, dw_obj, LAM, dw_field))


class TestCsv:
    def test_round_trip(self, tmp_path, riccati_flow):
        p = tmp_path / "t.csv"
        write_trajectory_csv(p, riccati_flow)
        back = read_trajectory_csv(p)
        for name in ("times", "states", "controls", "u_vals", "dists", "speed2", "h_vals"):
            np.testing.assert_array_equal(getattr(back, name), getattr(riccati_flow, name))
        assert p.read_text().splitlines()[0] == "t,y1,a1,u,dist,speed2,h"

    def test_bad_header(self, tmp_path):
        p = tmp_path / "t.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_trajectory_csv(p)

    def test_trajectory_validation(self):
        z = np.zeros(3)
        with pytest.raises(ValueError):
            Trajectory(np.array([0.0, 1.0, 1.0]), np.zeros((3, 1)), np.zeros((3, 1)), z, z, z, z)
        with pytest.raises(ValueError):
            Trajectory(np.array([0.0, 1.0]), np.zeros((3, 1)), np.zeros((3, 1)), z, z, z, z)

    def test_error_types(self):
        assert issubclass(TrajectoryError, RuntimeError)

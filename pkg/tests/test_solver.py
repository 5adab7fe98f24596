"""Value iteration for the discounted HJB equation and its closed-form oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbopt.grid import RectGrid, gradient_many
from hjbopt.objectives import FinitePoints, builtin_objective
from hjbopt.solver import (SolverError, SolverOptions, control_set, field_from_function,
                           residual, riccati_constant, riccati_reference, solve,
                           write_solver_log)
from hjbopt.suite import riccati_relative_error


class TestRiccatiConstant:
    @pytest.mark.parametrize("lam,c,C", [(0.0, 1.0, 0.5), (0.1, 1.0, 0.4756246),
                                         (0.1, 2.0, (-0.1 + math.sqrt(8.01)) / 4)])
    def test_values(self, lam, c, C):
        assert riccati_constant(lam, c) == pytest.approx(C, abs=5e-8)

    def test_high_precision_value(self):
        from decimal import Decimal, getcontext
        getcontext().prec = 40
        exact = (Decimal("-0.1") + Decimal("8.01").sqrt()) / 4
        assert riccati_constant(0.1, 2.0) == pytest.approx(float(exact), abs=1e-15)
        assert riccati_constant(0.1, 2.0) == pytest.approx(0.6825486, abs=5e-8)

    @settings(max_examples=1000, deadline=None)
    @given(st.floats(0.0, 10.0), st.floats(1e-3, 10.0))
    def test_root_identity(self, lam, c):
        p = 2 * riccati_constant(lam, c)
        assert abs(p * p + lam * p - c) <= 1e-12 * max(1.0, c)

    def test_decreasing_in_lambda(self):
        vals = [riccati_constant(l, 1.0) for l in np.linspace(0, 5, 50)]
        assert np.all(np.diff(vals) < 0)

    @pytest.mark.parametrize("lam,c", [(0.1, 0.0), (0.1, -1.0), (-0.1, 1.0)])
    def test_invalid(self, lam, c):
        with pytest.raises(ValueError):
            riccati_constant(lam, c)

    def test_reference(self):
        assert riccati_reference(0.1, 1.0, FinitePoints([[0.0]]), [1.0]) == pytest.approx(0.4756246, abs=1e-7)
        assert riccati_reference(0.1, 1.0, FinitePoints([[-1.0], [1.0]]), [0.0]) == pytest.approx(0.4756246, abs=1e-7)
        assert riccati_reference(0.1, 1.0, FinitePoints([[-1.0], [1.0]]), [1.0]) == 0.0


class TestSolveExamples:
    def test_riccati(self, riccati_obj, riccati_field):
        assert riccati_relative_error(riccati_field, riccati_obj, 0.1, 1.0) <= 0.02
        x = np.linspace(-1.4, 1.4, 57)[:, None]
        ref = 0.4756246 * x[:, 0] ** 2
        mask = np.abs(x[:, 0]) >= 0.6  # near 0 the reference vanishes; the norm check covers it
        rel = np.abs(riccati_field(x) - ref)[mask] / ref[mask]
        assert rel.max() <= 0.02

    @pytest.mark.parametrize("lam,c,pts", [(0.05, 0.5, [[0.0]]), (0.1, 2.0, [[-1.0], [1.0]])])
    def test_riccati_other_cases(self, lam, c, pts):
        obj = builtin_objective("riccati_dist", c=c, set=pts)
        vf = solve(obj, RectGrid(obj.lower, obj.upper, (401,)), lam)
        assert riccati_relative_error(vf, obj, lam, c) <= 0.02

    @pytest.mark.parametrize("level", [0.0, 0.7])
    def test_flat_objective(self, level):
        obj = builtin_objective("flat", level=level)
        vf = solve(obj, RectGrid(obj.lower, obj.upper, (41,)), 0.1, SolverOptions(tol=1e-8))
        np.testing.assert_allclose(vf.values, level / 0.1, atol=1e-8)

    def test_double_well(self, dw_field):
        h = dw_field.grid.h[0]
        tol = dw_field.meta["tol"]
        for x in (-1.0, 1.0):
            assert abs(dw_field([x])) <= tol + h
        P = dw_field.grid.points()[:, 0]
        far = np.minimum(np.abs(P - 1), np.abs(P + 1)) > 2 * h
        assert np.all(dw_field.values[far] > 0)


class TestSolveProperties:
    def test_contraction_history(self, dw_field):
        sups = np.array([s for _, s, _ in dw_field.meta["history"]])
        assert np.all(np.diff(sups[1:]) <= 1e-15)

    def test_lower_bound(self, dw_obj, dw_field):
        assert dw_field.values.min() >= dw_obj.f_min / 0.1 - dw_field.meta["tol"]

    def test_gradient_bound(self, dw_obj, dw_field):
        g = dw_field.grid
        P = g.points()[g.interior_mask(3)]
        G = gradient_many(dw_field, P)
        assert np.abs(G).max() <= math.sqrt(6 * dw_obj.sup_norm) + 5 * g.h[0]

    def test_symmetry(self, dw_field):
        v = dw_field.values
        assert np.max(np.abs(v - v[::-1])) <= 1e-10

    def test_symmetry_2d(self):
        obj = builtin_objective("riccati_dist", c=1.0, set=[[0.0, 0.0]], dim=2)
        vf = solve(obj, RectGrid(obj.lower, obj.upper, (31, 31)), 0.5,
                   SolverOptions(dtau=0.05, tol=1e-5))
        U = vf.as_array()
        assert np.max(np.abs(U - U[::-1, ::-1])) <= 1e-10

    def test_deterministic(self):
        obj = builtin_objective("cosine")
        g = RectGrid(obj.lower, obj.upper, (201,))
        assert solve(obj, g, 0.1).values.tobytes() == solve(obj, g, 0.1).values.tobytes()

    def test_meta(self, dw_field):
        m = dw_field.meta
        assert m["achieved"] <= m["tol"] and m["iterations"] == len(m["history"])


class TestResidual:
    def test_exact_riccati_field(self):
        obj = builtin_objective("riccati_dist", c=1.0)
        res = []
        for n in (201, 401):
            g = RectGrid(obj.lower, obj.upper, (n,))
            vf = field_from_function(g, 0.1, lambda P: riccati_reference(0.1, 1.0, obj.minimizers, P))
            res.append(residual(vf, obj).max / g.h[0])
        assert max(res) <= 2.0  # O(h) with a constant of order one

    def test_flat_zero(self):
        obj = builtin_objective("flat", level=0.3)
        g = RectGrid(obj.lower, obj.upper, (21,))
        vf = field_from_function(g, 0.1, lambda P: np.full(len(P), 3.0))
        assert residual(vf, obj).max == pytest.approx(0.0, abs=1e-14)

    def test_double_well_regression(self, dw_obj, dw_field):
        rep = residual(dw_field, dw_obj)
        P = dw_field.grid.points()[:, 0]
        away = rep.interior & ~rep.kinks & (np.abs(P) <= 1.5)  # outside the clamping layer
        assert rep.field[away].max() <= 10 * dw_field.grid.h[0]
        assert rep.kinks.sum() <= 8  # only the kink at the origin


class TestOptions:
    def test_defaults_resolved(self, dw_obj):
        g = RectGrid(dw_obj.lower, dw_obj.upper, (101,))
        o = SolverOptions().resolved(dw_obj, g)
        assert o.M == pytest.approx(1.1 * math.sqrt(6 * 9.0))
        assert o.control_directions == 2

    @pytest.mark.parametrize("kw,msg", [({"dtau": 0.0}, "dtau"), ({"tol": -1.0}, "tol"),
                                        ({"M": 1.0}, "must exceed"), ({"dtau": 0.2}, "quarter"),
                                        ({"max_iters": 0}, "max_iters"),
                                        ({"threads": 0}, "threads")])
    def test_invalid(self, dw_obj, kw, msg):
        g = RectGrid(dw_obj.lower, dw_obj.upper, (101,))
        with pytest.raises(ValueError, match=msg):
            SolverOptions(**kw).resolved(dw_obj, g)

    def test_nonconvergence(self, dw_obj):
        with pytest.raises(SolverError, match="no convergence"):
            solve(dw_obj, RectGrid(dw_obj.lower, dw_obj.upper, (51,)), 0.1,
                  SolverOptions(max_iters=3))

    def test_bad_lambda_and_dimension(self, dw_obj):
        g = RectGrid(dw_obj.lower, dw_obj.upper, (51,))
        with pytest.raises(ValueError):
            solve(dw_obj, g, 0.0)
        with pytest.raises(ValueError):
            solve(dw_obj, RectGrid((-1.0, -1.0), (1.0, 1.0), (5, 5)), 0.1)

    def test_control_set(self):
        C = control_set(2, 2.0, 4, 8)
        norms = np.linalg.norm(C, axis=1)
        assert norms.max() == pytest.approx(2.0) and np.any(norms == 0)
        assert len(np.unique(np.round(norms, 12))) == 5


class TestSolverLog:
    def test_format(self, tmp_path, dw_field):
        p = tmp_path / "log.csv"
        write_solver_log(p, dw_field)
        lines = p.read_text().splitlines()
        assert lines[0] == "iter,sup_change,seconds"
        assert len(lines) == dw_field.meta["iterations"] + 1
        it, sup, sec = lines[1].split(",")
        assert int(it) == 1 and float(sup) > 0 and float(sec) >= 0


class TestRiccatiConstantMonotonicity:
    def test_parameter_grid(self):
        lams = np.linspace(0.0, 2.0, 20)
        cs = np.linspace(0.1, 5.0, 20)
        T = np.array([[riccati_constant(l, c) for c in cs] for l in lams])
        assert np.all(np.diff(T, axis=1) > 0)  # increasing in c
        assert np.all(np.diff(T, axis=0) < 0)  # decreasing in lambda

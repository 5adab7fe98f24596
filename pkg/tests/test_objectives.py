"""Minimizer sets, distances and the built-in objectives."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hjbopt.objectives import (AffineDiagonal, AxisLattice, FinitePoints, ProductHyperbola,
                               builtin_objective, distance, estimate_quadratic_growth,
                               growth_ratio_scan, minimizer_set_from_dict, sq_dist_subgradient)

coord = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


class TestDistanceOracles:
    def test_two_points(self):
        d, p = distance(FinitePoints([[-1.0], [1.0]]), [0.5])
        assert d == pytest.approx(0.5)
        assert p.tolist() == [1.0]

    def test_diagonal(self):
        d, p = distance(AffineDiagonal(), [1.0, 0.0])
        assert d == pytest.approx(1 / math.sqrt(2))
        np.testing.assert_allclose(p, [0.5, 0.5])

    def test_lattice(self):
        d, p = distance(AxisLattice((-7.0,), (7.0,)), [6.0])
        assert d == pytest.approx(2 * math.pi - 6.0, abs=1e-12)
        assert p[0] == pytest.approx(2 * math.pi)

    def test_tie_picks_lexicographically_smallest(self):
        S = FinitePoints([[1.0], [-1.0]])
        q = sq_dist_subgradient(S, [0.0])
        assert q.tolist() == [1.0]
        d, p = distance(S, [0.0])
        assert d == 1.0 and p.tolist() == [-1.0]

    def test_subgradient_examples(self):
        np.testing.assert_allclose(sq_dist_subgradient(FinitePoints([[-1.0], [1.0]]), [0.5]), [-0.5])
        np.testing.assert_allclose(sq_dist_subgradient(AffineDiagonal(), [1.0, 0.0]), [0.5, -0.5])

    def test_batch_matches_single(self, rng):
        S = FinitePoints(rng.uniform(-2, 2, size=(4, 2)))
        X = rng.uniform(-3, 3, size=(50, 2))
        d, P = distance(S, X)
        for i in range(5):
            di, pi = distance(S, X[i])
            assert di == d[i]
            np.testing.assert_array_equal(pi, P[i])

    def test_lattice_tie_goes_to_lower_point(self):
        _, p = distance(AxisLattice((-7.0,), (7.0,)), [math.pi])
        assert p[0] == 0.0


class TestHyperbola:
    def brute(self, S, x, n=400001):
        out = []
        for a, b in S.branches:
            t = np.linspace(a, b, n)
            out.append(np.min(np.hypot(t - x[0], 1 / t - x[1])))
        return min(out)

    @pytest.mark.parametrize("x", [(2.0, 2.0), (0.0, 0.0), (-1.5, 0.3), (1.0, 1.0), (0.2, 1.9)])
    def test_matches_dense_parametrisation(self, x):
        S = ProductHyperbola()
        d, ref = S.dist(np.array(x)), self.brute(S, x)
        assert d <= ref + 1e-12 and ref - d <= 1e-5  # dense sampling overestimates slightly

    @pytest.mark.parametrize("x", [(4.32, -0.10), (4.4, -1.87), (5.1, 1.7), (-4.0, 0.2)])
    def test_points_beyond_the_clipped_branch(self, x):
        # nearest point is a branch endpoint; it must not be moved by polishing
        S = ProductHyperbola((-3.0, -3.0), (3.0, 3.0))
        d, ref = S.dist(np.array(x)), self.brute(S, x)
        assert d <= ref + 1e-12 and ref - d <= 1e-5

    def test_points_on_set(self):
        S = ProductHyperbola()
        t = np.array([0.6, 1.0, 1.7, -0.8, -1.9])
        X = np.stack([t, 1 / t], axis=1)
        assert np.max(S.dist(X)) < 1e-9


@st.composite
def set_and_point(draw):
    kind = draw(st.sampled_from(["points", "diagonal", "lattice", "hyperbola"]))
    if kind == "points":
        dim = draw(st.integers(1, 3))
        m = draw(st.integers(1, 4))
        pts = np.array(draw(st.lists(coord, min_size=m * dim, max_size=m * dim))).reshape(m, dim)
        S = FinitePoints(pts)
    elif kind == "diagonal":
        S = AffineDiagonal()
    elif kind == "lattice":
        dim = draw(st.integers(1, 3))
        S = AxisLattice((-7.0,) * dim, (7.0,) * dim, draw(st.floats(0.5, 7.0)))
    else:
        S = ProductHyperbola((-3.0, -3.0), (3.0, 3.0))
    x = np.array(draw(st.lists(coord, min_size=S.dim, max_size=S.dim)))
    y = np.array(draw(st.lists(coord, min_size=S.dim, max_size=S.dim)))
    return S, x, y


class TestDistanceProperties:
    @settings(max_examples=300, deadline=None)
    @given(set_and_point())
    def test_one_lipschitz(self, sxy):
        S, x, y = sxy
        assert abs(S.dist(x) - S.dist(y)) <= np.linalg.norm(x - y) + 1e-9

    @settings(max_examples=300, deadline=None)
    @given(set_and_point())
    def test_subgradient_bounded_by_distance(self, sxy):
        S, x, _ = sxy
        d, p = distance(S, x)
        q = sq_dist_subgradient(S, x)
        assert np.linalg.norm(q) <= d + 1e-12
        assert np.linalg.norm(q) == pytest.approx(d, abs=1e-9)
        assert S.dist(p) <= 1e-7

    def test_random_pairs_bulk(self):
        from hjbopt.suite import property_checks
        assert property_checks(10_000, seed=3) == {"subgradient": 0, "projection": 0,
                                                   "lipschitz": 0}

    def test_chain_rule_order(self):
        from hjbopt.suite import chain_rule_slopes
        slopes = chain_rule_slopes(100, seed=5)
        assert slopes.min() >= 0.9


class TestBuiltins:
    def test_double_well(self):
        obj = builtin_objective("double_well")
        assert obj.f_min == 0.0 and obj.f_max == pytest.approx(9.0)
        assert obj([0.0]) == 1.0
        np.testing.assert_array_equal(obj.minimizers.points.ravel(), [-1.0, 1.0])

    def test_cosine(self):
        obj = builtin_objective("cosine")
        reps = obj.minimizers.representatives().ravel()
        np.testing.assert_allclose(reps, [-2 * math.pi, 0.0, 2 * math.pi])
        assert obj([math.pi / 2]) == pytest.approx(1.0)

    def test_riccati_dist_value(self):
        obj = builtin_objective("riccati_dist", c=1.0, set=[[0.0]])
        assert obj([0.3]) == pytest.approx(0.045, abs=1e-15)

    @pytest.mark.parametrize("name", ["quadratic", "flat_quadratic", "double_well", "cosine",
                                      "ridge_ls", "product_well", "riccati_dist"])
    def test_projection_attains_minimum(self, name, rng):
        obj = builtin_objective(name)
        X = rng.uniform(obj.lower, obj.upper, size=(200, obj.dim))
        _, P = obj.minimizers.project_batch(X)
        assert np.max(np.abs(obj(P) - obj.f_min)) <= 1e-12

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown objective"):
            builtin_objective("nope")

    def test_rejects_nonpositive_c(self):
        with pytest.raises(ValueError):
            builtin_objective("riccati_dist", c=0.0)

    def test_truncation(self):
        obj = builtin_objective("cone", f_max=1.0)
        assert obj([1.7]) == 1.0 and obj.f_max == 1.0

    def test_set_from_dict(self):
        S = minimizer_set_from_dict({"kind": "lattice", "period": 1.0}, (-2.0,), (2.0,))
        assert S.dist(np.array([0.4])) == pytest.approx(0.4)
        with pytest.raises(ValueError):
            minimizer_set_from_dict({"kind": "blob"}, (-1.0,), (1.0,))


class TestQuadraticGrowth:
    def test_double_well(self):
        c1, c2 = estimate_quadratic_growth(builtin_objective("double_well"), 0.4, 1e-3)
        assert c1 == pytest.approx(5.12, rel=1e-3)
        assert c2 == pytest.approx(11.52, rel=1e-3)

    def test_double_well_extremes_location(self):
        pts, _, ratios = growth_ratio_scan(builtin_objective("double_well"), 0.4, 1e-3)
        assert abs(pts[np.argmax(ratios), 0]) == pytest.approx(1.4)
        assert abs(pts[np.argmin(ratios), 0]) == pytest.approx(0.6)

    def test_flat_quadratic_measured_constants(self):
        c1, c2 = estimate_quadratic_growth(builtin_objective("flat_quadratic"), 1.0, 0.02)
        assert (c1, c2) == pytest.approx((2.0, 2.0), rel=1e-9)

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
    def test_riccati_exact(self, c):
        c1, c2 = estimate_quadratic_growth(builtin_objective("riccati_dist", c=c), 1.0, 1e-3)
        assert abs(c1 - c) <= 1e-9 and abs(c2 - c) <= 1e-9

    def test_too_coarse(self):
        with pytest.raises(ValueError):
            estimate_quadratic_growth(builtin_objective("double_well"), 0.4, 0.05)

    def test_misspecified_minimum(self):
        from dataclasses import replace
        obj = replace(builtin_objective("double_well"), f_min=0.5)
        with pytest.raises(ValueError, match="nonpositive"):
            estimate_quadratic_growth(obj, 0.4, 1e-3)

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trackmpc import geometry
from trackmpc.errors import EmptyInput, OriginOutside, ShapeNotPD, Unbounded
from trackmpc.geometry import Ellipsoid, Polytope

from conftest import fixture_path
from trackmpc.config import load_config

UNIT_BOX = Polytope.box([1.0, 1.0])


def interval(upper, lower):
    return Polytope(np.array([[1.0], [-1.0]]), np.array([upper, -lower]))


def random_polytope(rng, dim, rows):
    """Bounded polytope with the origin inside: random normals plus a box."""
    H = rng.normal(size=(rows, dim))
    h = rng.uniform(0.5, 2.0, size=rows)
    P = Polytope(H, h)
    return P.intersect(Polytope.box(3 * np.ones(dim)))


class TestIsEmpty:
    def test_nonempty(self):
        assert not geometry.is_empty(interval(1.0, 0.0))

    def test_contradictory(self):
        assert geometry.is_empty(Polytope([[1.0], [-1.0]], [-1.0, 0.0]))

    def test_eroded_by_inradius(self):
        Z = load_config(fixture_path("helicopter")).plant.Z
        _, radius = geometry.chebyshev_center(Z)
        eroded = geometry.erode_by_ellipsoid_image(Z, np.eye(Z.dim), Ellipsoid(np.eye(Z.dim), radius))
        assert not geometry.is_empty(eroded)
        bigger = geometry.erode_by_ellipsoid_image(Z, np.eye(Z.dim), Ellipsoid(np.eye(Z.dim), 1.01 * radius))
        assert geometry.is_empty(bigger)

    def test_single_point(self):
        assert not geometry.is_empty(interval(0.0, 0.0))


class TestContains:
    def test_origin(self):
        assert geometry.contains(UNIT_BOX, [0, 0])

    def test_outside_corner(self):
        assert not geometry.contains(UNIT_BOX, (1 + 2e-6) * np.ones(2), 1e-9)

    def test_corner_within_tolerance(self):
        assert geometry.contains(UNIT_BOX, np.ones(2), 1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            geometry.contains(UNIT_BOX, [0, 0, 0])


class TestRemoveRedundancy:
    def test_loose_copy_dropped(self):
        P = Polytope([[1.0], [1.0], [-1.0]], [1.0, 2.0, 0.0])
        R = geometry.remove_redundancy(P)
        assert R.n_rows == 2
        assert sorted(R.h.tolist()) == [0.0, 1.0]

    def test_box_unchanged(self):
        assert geometry.remove_redundancy(UNIT_BOX).n_rows == 4

    def test_scalar_moas_rows(self):
        # O_0 and O_1 of x+ = 0.5 x with |x| <= 1
        P = Polytope([[1.0], [-1.0], [0.5], [-0.5]], [1.0, 1.0, 1.0, 1.0])
        R = geometry.remove_redundancy(P)
        assert R.n_rows == 2
        assert geometry.same_set(R, interval(1.0, -1.0))

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            geometry.remove_redundancy(Polytope([[1.0], [-1.0]], [-1.0, 0.0]))

    def test_membership_preserved(self, rng):
        for _ in range(5):
            P = random_polytope(rng, 3, 25)
            R = geometry.remove_redundancy(P)
            assert R.n_rows <= P.n_rows
            pts = rng.uniform(-3.5, 3.5, size=(200, 3))
            inside = geometry.sample_points(P, 800, seed=int(rng.integers(1000)))
            for v in list(pts) + inside:
                assert geometry.contains(P, v, 1e-9) == geometry.contains(R, v, 1e-9)

    def test_near_tie_kept(self):
        # the second row is only just redundant by 1e-7; it must not disappear
        # while the set it defines is still larger than the remainder
        P = Polytope([[1.0, 0.0], [1.0, 1e-7], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                     [1.0, 1.0, 1.0, 1.0, 1.0])
        R = geometry.remove_redundancy(P)
        assert geometry.same_set(P, R)


class TestScale:
    def test_half(self):
        assert geometry.same_set(geometry.scale(UNIT_BOX, 0.5), Polytope.box([0.5, 0.5]))

    def test_identity(self, rng):
        P = random_polytope(rng, 2, 6)
        S = geometry.scale(P, 1.0)
        assert np.array_equal(S.H, P.H) and np.array_equal(S.h, P.h)

    def test_zero_gives_origin(self):
        S = geometry.scale(UNIT_BOX, 0.0)
        assert geometry.contains(S, [0, 0], 0.0)
        assert not geometry.contains(S, [1e-6, 0], 1e-9)

    def test_origin_outside(self):
        with pytest.raises(OriginOutside):
            geometry.scale(interval(2.0, 1.0), 0.5)

    @given(st.floats(0.0, 3.0), st.floats(0.0, 3.0), st.integers(0, 1000))
    def test_composition(self, a, b, seed):
        P = random_polytope(np.random.default_rng(seed), 2, 5)
        lhs = geometry.scale(geometry.scale(P, a), b).canonical()
        rhs = geometry.scale(P, a * b).canonical()
        assert np.allclose(lhs.H, rhs.H) and np.allclose(lhs.h, rhs.h, atol=1e-12)


class TestProduct:
    def test_square(self):
        sq = geometry.product(interval(1.0, -1.0), interval(1.0, -1.0))
        assert geometry.same_set(sq, UNIT_BOX)

    def test_free_padding(self):
        P = geometry.product(UNIT_BOX, Polytope.full_space(2))
        assert P.dim == 4 and P.n_rows == 4
        assert geometry.contains(P, [0.5, -0.5, 1e6, -1e6])

    def test_counts_add(self, rng):
        P1, P2 = random_polytope(rng, 2, 3), random_polytope(rng, 3, 4)
        P = geometry.product(P1, P2)
        assert P.dim == 5 and P.n_rows == P1.n_rows + P2.n_rows


class TestErosion:
    def test_disk(self):
        E = geometry.erode_by_ellipsoid_image(UNIT_BOX, np.eye(2), Ellipsoid(np.eye(2), 0.5))
        assert geometry.same_set(E, Polytope.box([0.5, 0.5]))

    def test_zero_radius(self):
        E = geometry.erode_by_ellipsoid_image(UNIT_BOX, np.eye(2), Ellipsoid(np.eye(2), 0.0))
        assert np.array_equal(E.h, UNIT_BOX.h)

    def test_line_image(self):
        E = geometry.erode_by_ellipsoid_image(UNIT_BOX, np.array([[1.0], [0.0]]), Ellipsoid(np.eye(1), 0.3))
        assert np.allclose(E.h, [0.7, 1.0, 0.7, 1.0])

    def test_shape_not_pd(self):
        with pytest.raises(ShapeNotPD):
            Ellipsoid(np.array([[1.0, 0.0], [0.0, -1.0]]), 1.0)

    def test_minkowski_back_inside(self, rng):
        for _ in range(10):
            P = random_polytope(rng, 3, 8)
            D = rng.normal(size=(3, 2))
            G = rng.normal(size=(2, 2))
            E = Ellipsoid(G @ G.T + np.eye(2), 0.2)
            eroded = geometry.erode_by_ellipsoid_image(P, D, E)
            if geometry.is_empty(eroded):
                continue
            pts = geometry.sample_points(eroded, 10, seed=int(rng.integers(1000)))
            L = np.linalg.cholesky(np.linalg.inv(E.shape))
            for p in pts:
                for _ in range(10):
                    d = rng.normal(size=2)
                    beta = E.radius * L @ d / np.linalg.norm(d)
                    assert abs(E.norm(beta) - E.radius) < 1e-12
                    assert geometry.contains(P, p + D @ beta, 1e-9)

    def test_scaled_containment_chain(self, rng):
        # points of f*Z shifted by D beta stay in Z when |beta| <= upsilon
        from trackmpc.synthesis import upsilon

        Z = Polytope.box([2.0, 1.0, 0.5])
        Pin = np.array([[1.0, 0.2], [0.3, -0.5]])
        Gan = np.array([[0.1, 0.4]])
        Tn = np.array([[2.0, 0.3], [0.3, 1.0]])
        ups = upsilon(Z, Pin, Gan, Tn)
        D = np.vstack([Pin, Gan])
        pts = geometry.sample_points(Z, 100, seed=3)
        for p in pts:
            d = rng.normal(size=2)
            beta = rng.uniform() * ups * d / math.sqrt(d @ Tn @ d)
            f = 1 - math.sqrt(beta @ Tn @ beta) / ups
            assert geometry.contains(Z, f * p + D @ beta, 1e-9)


class TestSampling:
    def test_box(self):
        pts = geometry.sample_points(UNIT_BOX, 10, seed=1)
        assert len(pts) == 10
        assert all(geometry.contains(UNIT_BOX, p, 1e-9) for p in pts)

    def test_determinism(self):
        a = geometry.sample_points(UNIT_BOX, 10, seed=5)
        b = geometry.sample_points(UNIT_BOX, 10, seed=5)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_singleton(self):
        P = Polytope(np.vstack([np.eye(2), -np.eye(2)]), np.zeros(4))
        assert all(np.allclose(p, 0) for p in geometry.sample_points(P, 5))

    def test_unbounded(self):
        with pytest.raises(Unbounded):
            geometry.sample_points(Polytope([[-1.0, 0.0]], [0.0]), 20)

    def test_boundary_points_are_tight(self, rng):
        P = random_polytope(rng, 3, 10)
        for p in geometry.sample_boundary_points(P, 20, seed=2):
            assert abs(geometry.margin(P, p)) < 1e-9


class TestSupportAndCenter:
    def test_support_box(self):
        assert geometry.support(UNIT_BOX, [1.0, 2.0]) == pytest.approx(3.0, abs=1e-9)

    def test_support_unbounded(self):
        assert geometry.support(Polytope([[-1.0]], [0.0]), [1.0]) == math.inf

    def test_is_bounded(self):
        assert geometry.is_bounded(UNIT_BOX)
        assert not geometry.is_bounded(Polytope([[-1.0]], [0.0]))

    def test_helicopter_chebyshev(self):
        Z = load_config(fixture_path("helicopter")).plant.Z
        c, r = geometry.chebyshev_center(Z)
        assert r == pytest.approx(0.2, abs=1e-9)
        assert abs(c[6]) <= 1e-9 and abs(c[7]) <= 1e-9

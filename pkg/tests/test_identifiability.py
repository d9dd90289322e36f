import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from coneembed.errors import DataError, NumericalError
from coneembed.identifiability import (
    Degeneracy,
    HeightRecoveryProblem,
    check_degeneracy,
    recover_heights,
    report,
    residuals,
    tetra_volume_poly,
)


def far_apart_points(n, beta, rng):
    """Planar points with every pairwise distance at least beta / 2."""
    while True:
        z = rng.uniform(0, 1.5 * beta, size=(n, 2))
        d = np.linalg.norm(z[:, None] - z[None], axis=-1)
        if np.all(d[np.triu_indices(n, 1)] >= beta / 2):
            return z


def _apex_angle_instance(phis, t, beta=1.0):
    """Instance whose apex angles are prescribed directly.

    Points on a line at positions beta * phi / pi, so theta_ij = |phi_i - phi_j|.
    """
    z = (beta * np.asarray(phis) / math.pi)[:, None]
    return HeightRecoveryProblem.from_points(z, t, beta)


class TestProblem:
    def test_angles(self):
        p = HeightRecoveryProblem.from_points([[0, 0], [0.5, 0], [3, 0]], [0.2, 0.3, 0.4], 1.0)
        assert_allclose(p.angles[0, 1], math.pi / 2)
        assert_allclose(p.angles[0, 2], math.pi)
        assert np.all((p.angles >= 0) & (p.angles <= math.pi))

    @pytest.mark.parametrize("bad", [np.array([[0, 1], [2, 0]]), np.array([[1.0, 1], [1, 0]]),
                                     np.zeros((2, 3))])
    def test_invalid_matrices(self, bad):
        with pytest.raises(DataError):
            HeightRecoveryProblem(bad, 1.0, np.zeros_like(bad, dtype=float))


class TestResiduals:
    def test_truth_is_zero(self, rng):
        for _ in range(20):
            t = rng.uniform(0, 1, 4)
            p = HeightRecoveryProblem.from_points(rng.uniform(0, 1, (4, 2)), t, 1.0)
            assert np.max(np.abs(residuals(t, p))) < 1e-12

    def test_zero_heights(self, rng):
        p = HeightRecoveryProblem.from_points(rng.uniform(0, 1, (3, 2)), [0.2, 0.5, 0.9], 1.0)
        i, j = np.triu_indices(3, 1)
        assert_allclose(residuals(np.zeros(3), p), -p.chord_sq[i, j])

    def test_right_angles(self):
        t = np.array([0.3, 0.4, 0.5])
        a = np.sqrt(t[:, None] ** 2 + t[None, :] ** 2)
        np.fill_diagonal(a, 0)
        dz = np.full((3, 3), 0.5)
        np.fill_diagonal(dz, 0)
        p = HeightRecoveryProblem(dz, 1.0, a)
        assert np.all(np.abs(residuals(t, p)) < 1e-15)


class TestTetraVolume:
    def test_right_angles(self):
        assert tetra_volume_poly(math.pi / 2, math.pi / 2, math.pi / 2) == 1.0

    def test_pi_zero_pi(self):
        # cosines (-1, 1, -1): 1 + 2 - 3 = 0, on the 2*pi boundary
        assert_allclose(tetra_volume_poly(math.pi, 0.0, math.pi), 0.0, atol=1e-15)

    def test_negative_beyond_two_pi(self):
        assert_allclose(tetra_volume_poly(math.pi, math.pi, math.pi), -4.0)
        assert tetra_volume_poly(2.5, 2.5, 2.5) < 0

    def test_collinear_zero(self, rng):
        for _ in range(100):
            a, b = rng.uniform(0, math.pi / 2, 2)
            assert abs(tetra_volume_poly(a, b, a + b)) < 1e-12


class TestDegeneracy:
    def test_collinear(self):
        p = HeightRecoveryProblem.from_points([[0, 0], [0.2, 0], [0.5, 0]], [0.3, 0.5, 0.7], 1.0)
        assert check_degeneracy(p) is Degeneracy.COLLINEAR

    def test_equilateral(self):
        beta = 1.0
        z = np.array([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]]) * beta / 3
        p = HeightRecoveryProblem.from_points(z, [0.3, 0.5, 0.7], beta)
        assert check_degeneracy(p) is Degeneracy.GENERIC

    def test_saturated(self):
        z = [[0, 0], [5, 0], [0, 5]]
        p = HeightRecoveryProblem.from_points(z, [0.3, 0.5, 0.7], 1.0)
        assert_allclose(sum(p.angles[np.triu_indices(3, 1)]), 3 * math.pi)
        assert check_degeneracy(p) is Degeneracy.SATURATED


class TestRecover:
    def test_generic_triangles(self, rng):
        for _ in range(50):
            t = rng.uniform(0, 1, 3)
            p = HeightRecoveryProblem.from_points(rng.uniform(0, 1, (3, 2)), t, 1.0)
            sols = recover_heights(p)
            assert 1 <= sols.count <= 4
            assert sols.contains(t, 1e-8)
            for s in sols.solutions:
                assert np.all(s >= 0)
                assert np.max(np.abs(residuals(s, p))) < sols.residual_tol

    def test_far_apart_unique(self, rng):
        for _ in range(30):
            t = rng.uniform(0, 1, 3)
            p = HeightRecoveryProblem.from_points(far_apart_points(3, 1.0, rng), t, 1.0)
            sols = recover_heights(p)
            assert sols.count == 1
            assert sols.contains(t, 1e-8)

    @pytest.mark.parametrize("n", [4, 5])
    def test_round_trip_larger(self, n, rng):
        for _ in range(20):
            t = rng.uniform(0, 1, n)
            p = HeightRecoveryProblem.from_points(rng.uniform(0, 1, (n, 2)), t, 1.0)
            sols = recover_heights(p)
            assert sols.contains(t, 1e-8)
            assert sols.count == 1

    def test_solutions_distinct(self, rng):
        for _ in range(30):
            p = HeightRecoveryProblem.from_points(rng.uniform(0, 1, (3, 2)), rng.uniform(0, 1, 3), 1.0)
            s = recover_heights(p).solutions
            for a in range(len(s)):
                for b in range(a):
                    assert np.max(np.abs(s[a] - s[b])) > 1e-6

    def test_inconsistent(self):
        dz = np.array([[0, 0.1, 0.1], [0.1, 0, 0.1], [0.1, 0.1, 0]])
        cone = np.array([[0, 1.9, 0.01], [1.9, 0, 0.01], [0.01, 0.01, 0]])
        with pytest.raises(NumericalError, match="residual"):
            recover_heights(HeightRecoveryProblem(dz, 1.0, cone))

    def test_needs_three(self):
        p = HeightRecoveryProblem(np.array([[0, 1.0], [1.0, 0]]), 1.0, np.array([[0, 0.5], [0.5, 0]]))
        with pytest.raises(ValueError):
            recover_heights(p)

    def test_apex_on_circumcircle(self):
        # apex angles of points on a circle through the apex: every rotation of the
        # apex along that circle reproduces the distances, so solutions form a curve
        c = np.array([0.6, 0.0])
        psi = np.array([2.2, 2.9, 3.6])
        x = c + 0.6 * np.column_stack([np.cos(psi), np.sin(psi)])
        t = np.linalg.norm(x, axis=1)
        phi = np.arctan2(x[:, 1], x[:, 0])
        p = _apex_angle_instance(phi - phi.min(), t)
        assert check_degeneracy(p) is Degeneracy.COLLINEAR
        sols = recover_heights(p)
        print(f"circumcircle instance: {sols.count} refined solutions, "
              f"{sols.low_residual_cells} low-residual grid cells")
        assert sols.count > 4 or sols.low_residual_cells > 100
        for s in sols.solutions:
            assert np.max(np.abs(residuals(s, p))) < sols.residual_tol

    def test_report_fields(self, rng):
        t = rng.uniform(0, 1, 3)
        p = HeightRecoveryProblem.from_points(rng.uniform(0, 1, (3, 2)), t, 1.0)
        r = report(p, recover_heights(p))
        assert set(r) == {"n", "beta", "degeneracy", "solution_count", "solutions", "residuals"}
        assert r["solution_count"] == len(r["solutions"]) == len(r["residuals"])


class TestConeCounterpart:
    def test_heights_pinned_by_distances(self, rng):
        # a base-fixing, distance-preserving change of heights would be a second solution
        for _ in range(20):
            t = rng.uniform(0, 1, 4)
            p = HeightRecoveryProblem.from_points(rng.normal(size=(4, 3)) * 0.4, t, 1.0)
            assert recover_heights(p).count == 1

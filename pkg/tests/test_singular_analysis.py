import math

import numpy as np
import pytest
from scipy.integrate import quad

from src.core.discretization import constant_field, interpolate_field
from src.core.errors import DomainError, FitFailure, SingularEvaluationError, UnsupportedError
from src.core.geometry import Mesh, SectorSpec, mesh_sector, neumann
from src.core.singular_analysis import (
    DEFAULT_QUAD_ORDER,
    ExtractionMethod,
    SingularBasis,
    cutoff_profile,
    eval_dual_ps,
    eval_singular,
    extract_lambda_dual,
    extract_lambda_fit,
    quadrature_points,
)

THETA0 = 3 * math.pi / 4


@pytest.fixture
def basis():
    return SingularBasis.for_sector(THETA0)


@pytest.fixture(scope="module")
def uniform_mesh():
    """Uniform radii so the bisector carries enough nodes inside (0.1, 0.5)."""
    return mesh_sector(SectorSpec(THETA0, 1.0, 0.05, 1.0))


class TestSingularFunctions:
    def test_known_values(self, basis):
        assert basis.alpha == pytest.approx(2.0 / 3.0)
        assert eval_singular(basis, "S*", (0.5, 0.0)) == pytest.approx(0.50527, abs=1e-5)
        assert eval_dual_ps(basis, 1.0, (0.5, 0.0)) == pytest.approx(0.30475, abs=1e-5)

    def test_dual_vanishes_on_boundary(self, basis):
        arc = np.array([[math.cos(t), math.sin(t)] for t in np.linspace(-2.0, 2.0, 9)])
        np.testing.assert_allclose(eval_dual_ps(basis, 1.0, arc), 0.0, atol=1e-15)
        rays = np.array([[0.4 * math.cos(THETA0), 0.4 * math.sin(s * THETA0)] for s in (-1.0, 1.0)])
        np.testing.assert_allclose(eval_dual_ps(basis, 1.0, rays), 0.0, atol=1e-15)

    def test_dual_close_to_s_star_near_corner(self, basis):
        pts = np.array([[0.01, 0.0], [0.0, 0.02], [0.05, -0.03]])
        diff = np.abs(eval_dual_ps(basis, 1.0, pts) - eval_singular(basis, "S*", pts))
        r = np.hypot(pts[:, 0], pts[:, 1])
        assert np.all(diff <= r ** basis.alpha / math.pi + 1e-15)

    def test_rotated_frame(self):
        basis = SingularBasis(2.0 / 3.0, (1.0, 2.0), math.pi / 2)
        assert eval_singular(basis, "S", (1.0, 3.0)) == pytest.approx(1.0)

    def test_errors(self, basis):
        with pytest.raises(SingularEvaluationError):
            eval_singular(basis, "S*", (0.0, 0.0))
        with pytest.raises(DomainError):
            eval_dual_ps(basis, 1.0, (1.5, 0.0))
        with pytest.raises(ValueError):
            eval_singular(basis, "T", (1.0, 0.0))

    def test_cutoff_profile(self):
        r = np.array([0.0, 0.25, 0.5, 0.75, 1.0, 2.0])
        chi, d1, d2 = cutoff_profile(r, 1.0)
        np.testing.assert_allclose(chi, [1.0, 1.0, 1.0, 0.5, 0.0, 0.0])
        assert d1[0] == d1[-1] == 0.0 and d2[0] == d2[-1] == 0.0
        assert np.all(np.diff(chi) <= 0.0)


class TestDualExtraction:
    def test_zero_solution_closed_form(self, basis):
        mesh = mesh_sector(SectorSpec(THETA0, 1.0, 0.05))
        a = basis.alpha
        exact = 4.0 / (math.pi * (4.0 - a * a))
        est = extract_lambda_dual(constant_field(mesh, 0.0), constant_field(mesh, 1.0))
        assert exact == pytest.approx(0.35810, abs=1e-5)
        assert est.lam == pytest.approx(exact, rel=5e-3)
        assert est.method == ExtractionMethod.DUAL
        assert est.bracket[0] <= est.lam <= est.bracket[1]

    def test_convex_sector_unsupported(self):
        mesh = mesh_sector(SectorSpec(math.pi / 3, 1.0, 0.1))
        with pytest.raises(UnsupportedError):
            extract_lambda_dual(constant_field(mesh, 0.0), constant_field(mesh, 1.0))


class TestRayFit:
    def test_recovers_pure_singular_part(self, uniform_mesh, basis):
        u = interpolate_field(uniform_mesh, lambda p: 2.5 * eval_singular(basis, "S", p))
        est = extract_lambda_fit(u, (0.1, 0.5))
        assert est.lam == pytest.approx(2.5, abs=1e-3)
        assert est.method == ExtractionMethod.RAYFIT

    def test_ignores_regular_part(self, uniform_mesh, basis):
        u = interpolate_field(uniform_mesh, lambda p: 2.5 * eval_singular(basis, "S", p) + 0.7 * np.hypot(*p.T))
        assert extract_lambda_fit(u, (0.1, 0.5)).lam == pytest.approx(2.5, abs=5e-3)

    def test_regular_harmonic_on_two_rays(self, uniform_mesh, basis):
        # pi/8 is a mesh line of the uniform sector, so both rays sample nodes
        u = interpolate_field(uniform_mesh, lambda p: 2.5 * eval_singular(basis, "S", p) + 0.7 * p[:, 0])
        est = extract_lambda_fit(u, (0.09, 0.51), rays=[0.0, math.pi / 8])
        assert est.lam == pytest.approx(2.5, abs=1e-3)

    def test_linear_in_data(self, uniform_mesh, basis):
        def field(c):
            return interpolate_field(uniform_mesh, lambda p: c * eval_singular(basis, "S", p) + np.hypot(*p.T) ** 2)

        l1 = extract_lambda_fit(field(1.0), (0.1, 0.5)).lam
        l3 = extract_lambda_fit(field(3.0), (0.1, 0.5)).lam
        assert l3 - l1 == pytest.approx(2.0, abs=1e-6)

    def test_bad_window(self, uniform_mesh):
        u = constant_field(uniform_mesh, 0.0)
        with pytest.raises(FitFailure):
            extract_lambda_fit(u, (0.5, 0.1))
        with pytest.raises(FitFailure):
            extract_lambda_fit(u, (0.1, 0.5), rays=[3.0])

    def test_too_few_samples(self, uniform_mesh):
        with pytest.raises(FitFailure):
            extract_lambda_fit(constant_field(uniform_mesh, 0.0), (2.0, 3.0))


class TestQuadrature:
    @staticmethod
    def _triangle():
        edges = np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int64)
        return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]], dtype=np.int64),
                    edges, (neumann(1), neumann(1), neumann(1)))

    def test_corner_rule_matches_polar_integral(self):
        a = 2.0 / 3.0
        q = quadrature_points(self._triangle(), np.array([0]), 12, corner_node=0, alpha=a)
        r = np.hypot(q.points[:, 0], q.points[:, 1])
        polar, _ = quad(lambda t: (math.cos(t) + math.sin(t)) ** (a - 2.0) / (2.0 - a), 0.0, math.pi / 2)
        assert float(np.sum(q.weights * r ** (-a))) == pytest.approx(polar, rel=1e-7)

    def test_plain_rule_on_polynomial(self):
        q = quadrature_points(self._triangle(), np.array([0]), DEFAULT_QUAD_ORDER)
        value = np.sum(q.weights * (q.points[:, 0] ** 2 + q.points[:, 1]))
        assert value == pytest.approx(0.25, abs=1e-13)
        np.testing.assert_allclose(q.bary.sum(axis=1), 1.0)

import math

import numpy as np
import pytest
from scipy.integrate import dblquad

from src.core.discretization import (
    assemble_operator,
    constant_field,
    energy_functional,
    interpolate_field,
    lumped_mass_integral,
    midpoint_mass_integral,
)
from src.core.errors import AssemblyError, EvaluationError
from src.core.geometry import Mesh, SectorSpec, mesh_sector, neumann
from src.core.nonlinear_solve import solve_semilinear
from src.core.singular_analysis import SingularBasis, eval_singular


def reference_triangle(nodes=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0))) -> Mesh:
    edges = np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int64)
    return Mesh(np.array(nodes, dtype=float), np.array([[0, 1, 2]], dtype=np.int64), edges,
                (neumann(1), neumann(1), neumann(1)))


def test_reference_element_stiffness():
    op = assemble_operator(reference_triangle())
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    np.testing.assert_allclose(op.stiffness.toarray(), expected, atol=1e-15)
    np.testing.assert_allclose(op.lumped_mass, np.full(3, 1.0 / 6.0))
    assert len(op.free) == 3


def test_neumann_load_is_half_edge_lengths():
    op = assemble_operator(reference_triangle())
    load = op.load_vector({neumann(1): 2.0})
    s = math.sqrt(2.0)
    np.testing.assert_allclose(load, 2.0 * np.array([1.0, 0.5 + 0.5 * s, 0.5 + 0.5 * s]))


def test_degenerate_triangle_reported():
    mesh = reference_triangle(((0.0, 0.0), (1.0, 0.0), (2.0, 0.0)))
    with pytest.raises(AssemblyError) as info:
        assemble_operator(mesh)
    assert info.value.triangle == 0


class TestSectorOperator:
    def test_constants_in_kernel(self, reentrant_sector):
        op = assemble_operator(reentrant_sector)
        ones = np.ones(reentrant_sector.n_nodes)
        assert np.max(np.abs(op.stiffness @ ones)) <= 1e-10

    def test_exactly_symmetric(self, reentrant_sector):
        K = assemble_operator(reentrant_sector).stiffness
        assert (K - K.T).count_nonzero() == 0

    def test_free_nodes_are_interior(self, reentrant_sector):
        op = assemble_operator(reentrant_sector)
        assert len(op.free) == reentrant_sector.n_nodes - len(reentrant_sector.boundary_nodes())

    def test_m_matrix_sign_pattern(self, quarter_sector):
        K = assemble_operator(quarter_sector).stiffness.tocoo()
        off = K.row != K.col
        assert np.max(K.data[off]) <= 1e-12 * np.max(np.abs(K.data))

    def test_lumped_mass_sums_to_area(self, reentrant_sector):
        op = assemble_operator(reentrant_sector)
        assert np.sum(op.lumped_mass) == pytest.approx(reentrant_sector.area(), rel=1e-12)


class TestFields:
    def test_singular_function_values(self):
        basis = SingularBasis.for_sector(3 * math.pi / 4)
        assert eval_singular(basis, "S", (1.0, 0.0)) == pytest.approx(1.0)
        edge = np.array([[math.cos(t), math.sin(t)] for t in (3 * math.pi / 4, -3 * math.pi / 4)])
        np.testing.assert_allclose(eval_singular(basis, "S*", edge), 0.0, atol=1e-15)

    def test_interpolation_is_nodal(self, quarter_sector):
        f = interpolate_field(quarter_sector, lambda p: p[:, 0] + 2.0 * p[:, 1])
        np.testing.assert_allclose(f.values, quarter_sector.nodes @ [1.0, 2.0])
        pts = np.array([[0.3, 0.1], [0.5, -0.2]])
        np.testing.assert_allclose(f.evaluate(pts), pts @ [1.0, 2.0], atol=1e-12)

    def test_pointwise_interpolation(self, quarter_sector):
        f = interpolate_field(quarter_sector, lambda p: p[0] * p[1], vectorized=False)
        np.testing.assert_allclose(f.values, quarter_sector.nodes[:, 0] * quarter_sector.nodes[:, 1])

    def test_non_finite_value_names_node(self, reentrant_sector):
        basis = SingularBasis.for_sector(3 * math.pi / 4)

        def s_star(p):
            r = np.hypot(p[:, 0], p[:, 1])
            with np.errstate(divide="ignore"):
                return r ** (-basis.alpha) * np.cos(basis.alpha * np.arctan2(p[:, 1], p[:, 0])) / math.pi

        with pytest.raises(EvaluationError) as info:
            interpolate_field(reentrant_sector, s_star)
        assert info.value.node == reentrant_sector.corner_node

    def test_outside_points(self, quarter_sector):
        f = constant_field(quarter_sector, 1.0)
        assert np.isnan(f.evaluate([[2.0, 0.0]])[0])
        with pytest.raises(EvaluationError):
            f.evaluate([[2.0, 0.0]], outside="raise")

    def test_gradients_of_linear_field(self, reentrant_sector):
        f = interpolate_field(reentrant_sector, lambda p: 3.0 * p[:, 0] - p[:, 1])
        np.testing.assert_allclose(f.gradients(), np.tile([3.0, -1.0], (reentrant_sector.n_triangles, 1)),
                                   atol=1e-8)


class TestEnergy:
    def test_dirichlet_energy_of_singular_function(self):
        theta0, R = 3 * math.pi / 4, 1.0
        mesh = mesh_sector(SectorSpec(theta0, R, 0.05))
        op = assemble_operator(mesh)
        basis = SingularBasis.for_sector(theta0)
        s = interpolate_field(mesh, lambda p: eval_singular(basis, "S", p))
        # integral of |grad S|^2 over the sector is alpha theta0 R^(2 alpha)
        alpha = basis.alpha
        exact = 0.5 * alpha * R ** (2 * alpha) * theta0
        zero = constant_field(mesh, 0.0)
        assert energy_functional(op, s, zero) == pytest.approx(exact, rel=0.02)

    def test_convex_along_segments(self, quarter_sector, rng):
        op = assemble_operator(quarter_sector)
        w = constant_field(quarter_sector, 1.0)
        a = rng.normal(size=quarter_sector.n_nodes)
        b = rng.normal(size=quarter_sector.n_nodes)
        ua, ub = w.with_values(a), w.with_values(b)
        mid = w.with_values(0.5 * (a + b))
        assert energy_functional(op, mid, w) <= 0.5 * (energy_functional(op, ua, w) + energy_functional(op, ub, w))

    def test_solution_lowers_energy(self, quarter_sector):
        w = constant_field(quarter_sector, 1.0)
        u, _ = solve_semilinear(quarter_sector, w)
        op = assemble_operator(quarter_sector)
        assert energy_functional(op, u, w) < energy_functional(op, constant_field(quarter_sector, 0.0), w)

    def test_mass_integrals_agree_for_constants(self, quarter_sector):
        op = assemble_operator(quarter_sector)
        u = constant_field(quarter_sector, 0.5)
        w = constant_field(quarter_sector, 2.0)
        expected = 2.0 * math.exp(-0.5) * quarter_sector.area()
        assert lumped_mass_integral(op, u, w) == pytest.approx(expected, rel=1e-12)
        assert midpoint_mass_integral(op, u, w) == pytest.approx(expected, rel=1e-12)

    def test_mass_integrals_match_quadrature(self, square_mesh):
        op = assemble_operator(square_mesh)
        u = interpolate_field(square_mesh, lambda p: p[:, 0] + p[:, 1])
        w = constant_field(square_mesh, 1.0)
        expected, _ = dblquad(lambda y, x: math.exp(-(x + y)), 0.0, 1.0, 0.0, 1.0)
        assert midpoint_mass_integral(op, u, w) == pytest.approx(expected, rel=1e-3)
        assert lumped_mass_integral(op, u, w) == pytest.approx(expected, rel=5e-3)

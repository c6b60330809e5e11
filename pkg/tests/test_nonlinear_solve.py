import math

import numpy as np
import pytest

from src.core.discretization import constant_field, interpolate_field
from src.core.errors import DivergedError, InvalidSpecError, PreconditionError
from src.core.geometry import DiskSpec, Mesh, SectorSpec, dirichlet, mesh_disk_mixed, mesh_sector, neumann
from src.core.nonlinear_solve import SolveOptions, monotone_iterate, solve_semilinear
from src.core.oracles import disk_closed_form, halfplane_profile

TIGHT = SolveOptions(residual_tol=1e-12)


def independent_residual(mesh: Mesh, u: np.ndarray, w: np.ndarray) -> np.ndarray:
    """K u - M W e^{-u} assembled triangle by triangle with dense local matrices."""
    n = mesh.n_nodes
    K = np.zeros((n, n))
    m = np.zeros(n)
    for tri in mesh.triangles:
        p = mesh.nodes[tri]
        B = np.array([[p[1, 0] - p[0, 0], p[2, 0] - p[0, 0]], [p[1, 1] - p[0, 1], p[2, 1] - p[0, 1]]])
        area = 0.5 * abs(np.linalg.det(B))
        ref = np.array([[-1.0, 1.0, 0.0], [-1.0, 0.0, 1.0]])
        grads = np.linalg.solve(B.T, ref)
        K[np.ix_(tri, tri)] += area * grads.T @ grads
        m[tri] += area / 3.0
    return K @ u - m * w * np.exp(-u)


class TestNewton:
    def test_disk_center_value(self, triangle_lib):
        mesh = mesh_disk_mixed(DiskSpec((0.0, 0.0), 1.0, 0.02))
        u, report = solve_semilinear(mesh, constant_field(mesh, 1.0))
        assert report.converged
        center = u.evaluate([[0.0, 0.0]])[0]
        assert center == pytest.approx(disk_closed_form(1.0, 0.0), abs=2e-3)
        assert center == pytest.approx(0.21301, abs=2e-3)

    def test_disk_nodal_error_converges(self, triangle_lib):
        errors = []
        for h in (0.04, 0.02):
            mesh = mesh_disk_mixed(DiskSpec((0.0, 0.0), 1.0, h))
            u, _ = solve_semilinear(mesh, constant_field(mesh, 1.0), opts=TIGHT)
            r = np.minimum(np.hypot(*mesh.nodes.T), 1.0)
            errors.append(float(np.max(np.abs(u.values - disk_closed_form(1.0, r)))))
        assert errors[1] <= 2e-3
        assert errors[0] / errors[1] >= 3.0

    def test_zero_weight_gives_zero(self, quarter_sector):
        u, report = solve_semilinear(quarter_sector, constant_field(quarter_sector, 0.0))
        assert np.all(u.values == 0.0)
        assert report.iterations == 0

    def test_solution_nonnegative_and_zero_on_boundary(self, reentrant_sector):
        u, _ = solve_semilinear(reentrant_sector, constant_field(reentrant_sector, 1.0))
        assert np.min(u.values) >= -1e-12
        assert np.all(u.values[reentrant_sector.dirichlet_nodes()] == 0.0)

    def test_energy_strictly_decreasing(self, quarter_sector):
        _, report = solve_semilinear(quarter_sector, constant_field(quarter_sector, 50.0))
        assert report.iterations >= 2
        assert np.all(np.diff(report.energy) < 0.0)

    def test_residual_against_independent_assembly(self):
        mesh = mesh_sector(SectorSpec(3 * math.pi / 4, 1.0, 0.25))
        w = interpolate_field(mesh, lambda p: 1.0 + p[:, 0] ** 2)
        u, _ = solve_semilinear(mesh, w, opts=TIGHT)
        free = np.setdiff1d(np.arange(mesh.n_nodes), mesh.dirichlet_nodes())
        r = independent_residual(mesh, u.values, w.values)[free]
        assert np.max(np.abs(r)) <= 1e-10

    def test_comparison_principle(self, quarter_sector):
        low, _ = solve_semilinear(quarter_sector, constant_field(quarter_sector, 1.0))
        high, _ = solve_semilinear(quarter_sector, interpolate_field(quarter_sector, lambda p: 2.0 + p[:, 1]))
        assert np.all(low.values <= high.values + 1e-10)

    def test_dirichlet_data(self, quarter_sector):
        data = {dirichlet(3): 1.0, dirichlet(1): 0.0, dirichlet(2): 0.0}
        u, _ = solve_semilinear(quarter_sector, constant_field(quarter_sector, 1.0), dirichlet=data)
        segments = np.array([t.segment for t in quarter_sector.edge_tags])
        arc = quarter_sector.boundary_edges[segments == 3]
        rays = quarter_sector.boundary_edges[segments != 3]
        inner = np.setdiff1d(np.unique(arc), np.unique(rays))
        assert np.all(u.values[inner] == 1.0)

    def test_cg_matches_direct(self, quarter_sector):
        w = constant_field(quarter_sector, 1.0)
        direct, _ = solve_semilinear(quarter_sector, w, opts=TIGHT)
        cg, report = solve_semilinear(quarter_sector, w, opts=SolveOptions(residual_tol=1e-10, linear_solver="cg"))
        assert report.linear_solver == "cg"
        np.testing.assert_allclose(cg.values, direct.values, atol=1e-7)

    def test_divergence_keeps_last_iterate(self, quarter_sector):
        with pytest.raises(DivergedError) as info:
            solve_semilinear(quarter_sector, constant_field(quarter_sector, 100.0), opts=SolveOptions(max_newton=1))
        err = info.value
        assert err.last is not None and err.last.mesh is quarter_sector
        assert err.report.iterations == 1
        assert not err.report.converged

    def test_negative_weight_rejected(self, quarter_sector):
        with pytest.raises(PreconditionError):
            solve_semilinear(quarter_sector, constant_field(quarter_sector, -1.0))

    def test_neumann_only_rejected(self):
        edges = np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int64)
        mesh = Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]], dtype=np.int64),
                    edges, (neumann(1), neumann(1), neumann(1)))
        with pytest.raises(PreconditionError):
            solve_semilinear(mesh, constant_field(mesh, 1.0))

    @pytest.mark.parametrize("kwargs", [
        {"residual_tol": 0.0},
        {"max_newton": 0},
        {"linear_solver": "gmres"},
    ])
    def test_invalid_options(self, kwargs):
        with pytest.raises(InvalidSpecError):
            SolveOptions(**kwargs)


class TestMonotone:
    def test_agrees_with_newton(self, quarter_sector):
        w = constant_field(quarter_sector, 1.0)
        newton, _ = solve_semilinear(quarter_sector, w, opts=TIGHT)
        mono = monotone_iterate(quarter_sector, w, constant_field(quarter_sector, 0.0), opts=TIGHT)
        np.testing.assert_allclose(mono.values, newton.values, atol=1e-8)

    @pytest.mark.parametrize("sigma", ["max", "nodal"])
    def test_iterates_increase(self, quarter_sector, sigma):
        iterates = []
        monotone_iterate(quarter_sector, constant_field(quarter_sector, 5.0), constant_field(quarter_sector, 0.0),
                         sigma=sigma, callback=lambda n, x: iterates.append(x))
        first = iterates[:5]
        assert np.min(first[0]) >= -1e-14
        for a, b in zip(first[:-1], first[1:]):
            assert np.all(b >= a - 1e-12)

    def test_start_above_boundary_rejected(self, quarter_sector):
        with pytest.raises(PreconditionError):
            monotone_iterate(quarter_sector, constant_field(quarter_sector, 1.0), constant_field(quarter_sector, 5.0))

    def test_unknown_sigma(self, quarter_sector):
        with pytest.raises(InvalidSpecError):
            monotone_iterate(quarter_sector, constant_field(quarter_sector, 1.0), constant_field(quarter_sector, 0.0),
                             sigma="min")


@pytest.mark.slow
def test_half_plane_profile():
    mesh = mesh_sector(SectorSpec(math.pi / 2, 40.0, 0.05))
    u, _ = solve_semilinear(mesh, constant_field(mesh, 1.0))
    x = np.linspace(0.0, 5.0, 21)
    vals = u.evaluate(np.column_stack([x, np.zeros_like(x)]))
    assert np.max(np.abs(vals - halfplane_profile(x))) <= 0.05

import math

import numpy as np
import pytest

from src.core.conformal import (
    DEFAULT_K_SCHEDULE,
    ConformalPair,
    PhiStarEvaluator,
    build_phistar,
    disk_mesh,
    solve_disk_truncated,
    transform_field,
    truncated_datum,
)
from src.core.errors import DomainError, InvalidSpecError, MapSingularityError
from src.core.geometry import BoundaryKind
from src.studies.sector_study import solve_truncated


@pytest.fixture
def pair():
    return ConformalPair()


class TestMaps:
    def test_real_axis_onto_circle(self, pair):
        x = np.linspace(-20.0, 20.0, 41)
        z2 = pair.forward(x)
        np.testing.assert_allclose(np.abs(z2 + 0.5j), 0.5, atol=1e-12)
        assert np.all(z2[x < 0].real < 0.0) and np.all(z2[x > 0].real > 0.0)

    def test_inverse(self, pair, rng):
        z = rng.normal(size=20) + 1j * np.abs(rng.normal(size=20))
        np.testing.assert_allclose(pair.inverse(pair.forward(z)), z, atol=1e-12)
        assert pair.forward(0.0) == pytest.approx(-1j)

    def test_poles(self, pair):
        with pytest.raises(MapSingularityError):
            pair.forward(-1j)
        with pytest.raises(MapSingularityError):
            pair.inverse(0.0)

    def test_transform_round_trip(self, pair):
        w1 = lambda z: np.real(z) ** 2 - np.imag(z)  # noqa: E731
        w2 = transform_field(w1, "1to2", pair)
        back = transform_field(w2, "2to1", pair)
        z = np.array([0.3 + 0.2j, -1.0 + 2.0j, 4.0 + 0.5j])
        np.testing.assert_allclose(back(z), w1(z), atol=1e-12)

    def test_transform_preserves_equation(self, pair):
        # w1 = -log(2 Im z) solves Lap w = 4 e^{2w} on the upper half-plane
        w1 = lambda z: -np.log(2.0 * np.imag(z))  # noqa: E731
        w2 = transform_field(w1, "1to2", pair)
        z0 = np.array([0.1 - 0.4j, -0.2 - 0.6j])
        d = 1e-4
        lap = (w2(z0 + d) + w2(z0 - d) + w2(z0 + 1j * d) + w2(z0 - 1j * d) - 4.0 * w2(z0)) / d ** 2
        np.testing.assert_allclose(lap, 4.0 * np.exp(2.0 * w2(z0)), rtol=1e-4)

    def test_unknown_direction(self):
        with pytest.raises(InvalidSpecError):
            transform_field(np.real, "sideways")

    def test_truncated_datum(self):
        pts = np.array([[0.0, -1.0], [0.0, -0.1], [0.0, 0.0]])
        np.testing.assert_allclose(truncated_datum(pts, 2.0), [0.0, 2.0, 2.0])


@pytest.fixture(scope="module")
def disk_levels():
    pytest.importorskip("triangle")
    mesh = disk_mesh(0.05, 2.0)
    w0 = solve_disk_truncated(0.0, mesh=mesh)
    w2 = solve_disk_truncated(2.0, mesh=mesh, initial=w0)
    return mesh, w0, w2


class TestDiskLevels:
    def test_mesh_tags(self, disk_levels):
        mesh, _, _ = disk_levels
        assert mesh.boundary_length(BoundaryKind.NEUMANN) == pytest.approx(0.5 * math.pi, rel=0.01)
        assert np.all(mesh.nodes[mesh.nodes_of_kind(BoundaryKind.NEUMANN), 0] >= -1e-12)

    def test_monotone_in_level(self, disk_levels):
        _, w0, w2 = disk_levels
        assert np.all(w0.values <= w2.values + 1e-8)

    def test_below_supersolution(self, disk_levels):
        mesh, _, w2 = disk_levels
        with np.errstate(divide="ignore"):
            bound = -np.log(np.hypot(mesh.nodes[:, 0], mesh.nodes[:, 1]) ** 2)
        assert np.all(w2.values <= bound + 1e-6)

    def test_boundary_data(self, disk_levels):
        mesh, _, w2 = disk_levels
        nodes = mesh.nodes_of_kind(BoundaryKind.DIRICHLET)
        np.testing.assert_allclose(w2.values[nodes], truncated_datum(mesh.nodes[nodes], 2.0), atol=1e-12)

    def test_negative_level(self):
        with pytest.raises(InvalidSpecError):
            solve_disk_truncated(-1.0)

    def test_evaluator_bounds(self, disk_levels):
        mesh, w0, w2 = disk_levels
        ev = PhiStarEvaluator({0.0: w0, 2.0: w2}, 2.0, dict(mesh.meta))
        assert ev.m == pytest.approx(float(np.min(w0.values)))
        pts = np.array([[0.0, 1.0], [2.0, 3.0], [-4.0, 1.5]])
        assert np.all(ev(pts) <= ev.upper_bound(pts) + 1e-9)
        assert np.all(ev(pts, level=2.0) <= ev(pts, level=0.0) + 1e-9)
        with pytest.raises(DomainError):
            ev(np.array([[0.0, -1.0]]), reflect=False)
        np.testing.assert_allclose(ev(np.array([[1.0, -1.0]])), ev(np.array([[1.0, 1.0]])))


class TestBuild:
    def test_nonincreasing_in_level(self, triangle_lib):
        pts = np.array([[0.0, 0.5], [1.0, 1.0], [-2.0, 2.0], [3.0, 0.5]])
        result = build_phistar(pts, k_schedule=(0, 2, 4), h=0.05, stop_tol=1e-12)
        assert result.k == 4.0
        levels = sorted(result.history)
        for a, b in zip(levels[:-1], levels[1:]):
            assert np.all(result.history[b] <= result.history[a] + 1e-8)
        np.testing.assert_allclose(result.delta, result.history[4.0] - result.history[2.0])
        assert not result.converged

    def test_lower_half_plane_rejected(self, triangle_lib):
        with pytest.raises(DomainError):
            build_phistar(np.array([[0.0, -1.0]]), h=0.1)


@pytest.fixture(scope="module")
def default_build():
    pytest.importorskip("triangle")
    pts = np.array([[0.0, 0.0], [-0.5, 0.0], [-1.0, 0.0], [-2.0, 0.0], [0.5, 1.0], [2.0, 0.5]])
    return build_phistar(pts)


class TestDefaultSchedule:
    def test_vanishes_at_origin(self, default_build):
        assert default_build.values[0] == pytest.approx(0.0, abs=1e-6)

    def test_vanishes_on_negative_axis(self, default_build):
        np.testing.assert_allclose(default_build.values[1:4], 0.0, atol=5e-3)

    def test_stop_rule(self, default_build):
        levels = list(default_build.history)
        assert levels == [float(k) for k in DEFAULT_K_SCHEDULE[:len(levels)]]
        assert len(levels) >= 2
        assert default_build.k == levels[-1]
        assert default_build.converged == (default_build.max_delta < 1e-3)
        assert default_build.converged or default_build.k == 6.0
        for a, b in zip(levels[:-1], levels[1:]):
            assert np.all(default_build.history[b] <= default_build.history[a] + 1e-8)

    def test_loose_tolerance_stops_after_two_levels(self, triangle_lib):
        result = build_phistar(np.array([[0.5, 1.0]]), h=0.05, stop_tol=10.0)
        assert list(result.history) == [0.0, 2.0]
        assert result.converged and result.k == 2.0


@pytest.mark.slow
def test_above_truncated_slit_solution(triangle_lib):
    radii = np.array([0.5, 1.0, 2.0, 4.0, 6.0])
    angles = np.array([0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4])
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    pts = np.column_stack([(rr * np.cos(aa)).ravel(), np.abs(rr * np.sin(aa)).ravel()])
    u, _ = solve_truncated(math.pi, 20.0, 0.1)
    phistar = build_phistar(pts).values
    assert np.all(np.isfinite(phistar))
    assert np.all(phistar >= u.evaluate(pts) - 1e-2)

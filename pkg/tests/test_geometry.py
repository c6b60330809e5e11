import json
import math

import numpy as np
import pytest

from src.core.errors import InvalidSpecError
from src.core.geometry import (
    BoundaryKind,
    DiskSpec,
    PolygonSpec,
    SectorSpec,
    l_shape,
    mesh_disk_mixed,
    mesh_polygon,
    mesh_sector,
    mirror_map,
    mirror_symmetric,
    read_polygon_spec,
    sector_layout,
    unit_square,
    validate_mesh,
)
from src.core.utils import to_polar


class TestSectorMesh:
    def test_boundary_nodes_on_rays_or_arc(self, quarter_sector):
        mesh = quarter_sector
        r, theta = to_polar(mesh.nodes[mesh.boundary_nodes()])
        on_ray = np.abs(np.abs(theta) - math.pi / 2) <= 1e-12
        on_arc = np.abs(r - 1.0) <= 1e-12
        at_corner = r <= 1e-15
        assert np.all(on_ray | on_arc | at_corner)

    def test_all_boundary_is_dirichlet(self, quarter_sector):
        assert {t.kind for t in quarter_sector.edge_tags} == {BoundaryKind.DIRICHLET}
        assert {t.segment for t in quarter_sector.edge_tags} == {1, 2, 3}

    def test_valid_and_mirror_symmetric(self, reentrant_sector):
        assert validate_mesh(reentrant_sector) == []
        assert mirror_symmetric(reentrant_sector)
        m = mirror_map(reentrant_sector)
        np.testing.assert_array_equal(m[m], np.arange(reentrant_sector.n_nodes))

    def test_grading_toward_corner(self):
        spec = SectorSpec(3 * math.pi / 4, 1.0, 0.1)
        assert spec.grading() == pytest.approx(3.0)
        mesh = mesh_sector(SectorSpec(3 * math.pi / 4, 1.0, 0.1, 3.0))
        r = np.hypot(*mesh.nodes.T)
        assert np.min(r[r > 0.0]) == pytest.approx(1e-3, rel=1e-12)

    def test_uniform_when_not_reentrant(self):
        assert SectorSpec(math.pi / 3, 1.0, 0.1).grading() == 1.0

    def test_refinement_quadruples_triangles(self):
        coarse = mesh_sector(SectorSpec(math.pi / 2, 1.0, 0.1))
        fine = mesh_sector(SectorSpec(math.pi / 2, 1.0, 0.05))
        assert coarse.n_triangles == 608
        assert fine.n_triangles == 2496
        assert 3.8 <= fine.n_triangles / coarse.n_triangles <= 4.2

    @pytest.mark.parametrize("theta0,R,h", [
        (3 * math.pi / 4, 1.0, 0.1), (3 * math.pi / 4, 20.0, 0.5), (math.pi / 2, 5.0, 0.1),
    ])
    def test_outer_aspect_ratio_bounded(self, theta0, R, h):
        mesh = mesh_sector(SectorSpec(theta0, R, h))
        r = np.hypot(*mesh.nodes.T)
        step = R - np.max(r[r < R * (1.0 - 1e-9)])
        arc = R * 2.0 * theta0 / mesh.meta["divisions"]
        assert mesh.meta["aspect_ratio"] == pytest.approx(arc / step, rel=1e-9)
        assert mesh.meta["aspect_ratio"] <= R + h

    def test_layout_keeps_bisector_as_mesh_line(self):
        _, divisions = sector_layout(SectorSpec(0.3, 1.0, 0.1))
        assert divisions % 2 == 0
        mesh = mesh_sector(SectorSpec(0.3, 1.0, 0.1))
        on_axis = np.abs(mesh.nodes[:, 1]) <= 1e-15
        assert np.count_nonzero(on_axis) >= 10

    def test_slit_sector_duplicates_nodes(self):
        mesh = mesh_sector(SectorSpec(math.pi, 1.0, 0.2))
        assert validate_mesh(mesh) == []
        lower = mesh.boundary_edges[[t.segment == 1 for t in mesh.edge_tags]]
        upper = mesh.boundary_edges[[t.segment == 2 for t in mesh.edge_tags]]
        lo_nodes = set(np.unique(lower)) - {0}
        up_nodes = set(np.unique(upper)) - {0}
        assert lo_nodes.isdisjoint(up_nodes)
        lo = mesh.nodes[sorted(lo_nodes)]
        up = mesh.nodes[sorted(up_nodes)]
        np.testing.assert_allclose(lo[np.argsort(lo[:, 0])], up[np.argsort(up[:, 0])], atol=1e-15)
        assert mesh.area() == pytest.approx(math.pi, rel=0.01)

    @pytest.mark.parametrize("theta0, R, h", [
        (0.0, 1.0, 0.1),
        (4.0, 1.0, 0.1),
        (1.0, -1.0, 0.1),
        (1.0, 1.0, 2.0),
    ])
    def test_invalid_sector_spec(self, theta0, R, h):
        with pytest.raises(InvalidSpecError):
            mesh_sector(SectorSpec(theta0, R, h))

    def test_grading_below_one_rejected(self):
        with pytest.raises(InvalidSpecError):
            SectorSpec(1.0, 1.0, 0.1, 0.5).validate()


class TestPolygonSpec:
    def test_square_measures(self):
        sq = unit_square()
        assert sq.perimeter() == pytest.approx(4.0, abs=1e-12)
        assert sq.signed_area() == pytest.approx(1.0)
        assert sq.diameter() == pytest.approx(math.sqrt(2.0))

    def test_l_shape_corner_frame(self):
        spec = l_shape()
        spec.validate()
        corner, theta0, axis = spec.corner_frame()
        assert corner == (0.0, 0.0)
        assert theta0 == pytest.approx(3 * math.pi / 4)
        assert axis == pytest.approx(3 * math.pi / 4)
        assert spec.corner_inradius() == pytest.approx(1.0)
        assert spec.perimeter() == pytest.approx(8.0)

    def test_bowtie_rejected(self):
        spec = PolygonSpec(((0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)))
        with pytest.raises(InvalidSpecError, match="self-intersecting"):
            spec.validate()

    def test_clockwise_rejected(self):
        spec = PolygonSpec(((0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0)))
        with pytest.raises(InvalidSpecError, match="counterclockwise"):
            spec.validate()

    def test_convex_vertex_is_not_reentrant(self):
        spec = PolygonSpec(unit_square().vertices, reentrant_index=0)
        with pytest.raises(InvalidSpecError, match="not reentrant"):
            spec.validate()

    def test_invalid_spec_is_value_error(self):
        with pytest.raises(ValueError):
            PolygonSpec(((0.0, 0.0), (1.0, 0.0))).validate()

    def test_read_json(self, tmp_path):
        path = tmp_path / "domain.json"
        path.write_text(json.dumps({
            "vertices": [[-1, -1], [0, -1], [0, 0], [1, 0], [1, 1], [-1, 1]],
            "reentrant_index": 2, "h": 0.2, "beta": 2.0,
        }), encoding="utf-8")
        spec = read_polygon_spec(path)
        assert spec.reentrant_index == 2
        assert spec.mesh_size == 0.2
        assert spec.grading_exponent == 2.0

    def test_read_json_malformed(self, tmp_path):
        path = tmp_path / "domain.json"
        path.write_text(json.dumps({"corners": []}), encoding="utf-8")
        with pytest.raises(InvalidSpecError):
            read_polygon_spec(path)


class TestTriangleMeshes:
    def test_square_mesh(self, square_mesh):
        assert validate_mesh(square_mesh) == []
        assert square_mesh.boundary_length() == pytest.approx(4.0, abs=1e-10)
        assert square_mesh.area() == pytest.approx(1.0, abs=1e-12)
        assert {t.segment for t in square_mesh.edge_tags} == {1, 2, 3, 4}
        assert square_mesh.corner_node is None

    def test_l_shape_corner_is_node(self, lshape_mesh):
        assert validate_mesh(lshape_mesh) == []
        c = lshape_mesh.nodes[lshape_mesh.corner_node]
        assert np.hypot(*c) <= 1e-14
        assert lshape_mesh.meta["inradius"] == pytest.approx(1.0)

    def test_l_shape_grading_near_corner(self, lshape_mesh):
        spec = l_shape()
        h_min = spec.mesh_size * (spec.mesh_size / spec.diameter()) ** (spec.grading_exponent - 1.0)
        touching = np.any(lshape_mesh.triangles == lshape_mesh.corner_node, axis=1)
        assert np.max(lshape_mesh.diameters[touching]) <= 2.0 * h_min

    def test_boundary_layer_spacing(self, triangle_lib):
        mesh = mesh_polygon(unit_square(0.1), boundary_layer=0.02)
        assert np.max(mesh.edge_lengths) <= 0.02 + 1e-12

    def test_disk_split_tags(self, triangle_lib):
        mesh = mesh_disk_mixed(DiskSpec((0.0, 0.0), 1.0, 0.05, split=True))
        assert validate_mesh(mesh) == []
        dn = mesh.nodes_of_kind(BoundaryKind.DIRICHLET)
        nn = mesh.nodes_of_kind(BoundaryKind.NEUMANN)
        junctions = set(dn) & set(nn)
        pts = sorted(tuple(np.round(mesh.nodes[i], 12)) for i in junctions)
        assert pts == [(0.0, -1.0), (0.0, 1.0)]
        assert mesh.boundary_length(BoundaryKind.DIRICHLET) == pytest.approx(math.pi, rel=0.01)
        assert mesh.boundary_length(BoundaryKind.NEUMANN) == pytest.approx(math.pi, rel=0.01)
        assert np.all(mesh.nodes[nn, 0] >= -1e-12)

    def test_disk_without_split_is_dirichlet(self, unit_disk_mesh):
        assert {t.kind for t in unit_disk_mesh.edge_tags} == {BoundaryKind.DIRICHLET}

    def test_locate_inside_and_outside(self, square_mesh):
        tri, bary = square_mesh.locate([[0.3, 0.4], [1.5, 0.5]])
        assert tri[0] >= 0 and tri[1] == -1
        p = bary[0] @ square_mesh.nodes[square_mesh.triangles[tri[0]]]
        np.testing.assert_allclose(p, [0.3, 0.4], atol=1e-12)

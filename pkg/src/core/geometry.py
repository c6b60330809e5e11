"""
Domain descriptions and conforming triangular meshes.

Sectors are meshed as a structured polar product (radial layers x angular
divisions, each cell split into two triangles with mirrored diagonals), which
keeps the node set exactly symmetric under theta -> -theta. Polygons and disks
go through Triangle (constrained Delaunay) with an area-refinement loop driven
by a local size function.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

try:
    import triangle as _triangle_lib
except Exception:  # noqa: BLE001
    _triangle_lib = None

from .errors import InvalidSpecError
from .utils import point_segment_distance, segments_intersect, to_polar, wrap_angle

logger = logging.getLogger(__name__)

# Triangle quality switch: minimum angle in degrees.
MIN_ANGLE = 30
MAX_REFINE_PASSES = 40


class BoundaryKind(str, Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class BoundaryTag:
    kind: BoundaryKind
    segment: int

    def __str__(self) -> str:
        return f"{self.kind.value.upper()}({self.segment})"


def dirichlet(segment: int) -> BoundaryTag:
    return BoundaryTag(BoundaryKind.DIRICHLET, segment)


def neumann(segment: int) -> BoundaryTag:
    return BoundaryTag(BoundaryKind.NEUMANN, segment)


# ------------------------------------------------------------
# Specs
# ------------------------------------------------------------
@dataclass(frozen=True)
class SectorSpec:
    """Truncated sector {r < R, |theta| < theta0}, corner at the origin, bisector on +x."""
    theta0: float
    radius: float
    mesh_size: float
    grading_exponent: float | None = None

    def alpha(self) -> float:
        return math.pi / (2.0 * self.theta0)

    def is_reentrant(self) -> bool:
        return self.theta0 > math.pi / 2.0

    def grading(self) -> float:
        """beta = 2/alpha on reentrant sectors, 1 otherwise, unless given."""
        if self.grading_exponent is not None:
            return float(self.grading_exponent)
        return 2.0 / self.alpha() if self.is_reentrant() else 1.0

    def validate(self) -> None:
        if not (0.0 < self.theta0 <= math.pi):
            raise InvalidSpecError(f"theta0={self.theta0} outside (0, pi]")
        if not self.radius > 0.0:
            raise InvalidSpecError(f"radius={self.radius} must be positive")
        if not self.mesh_size > 0.0 or self.mesh_size >= self.radius:
            raise InvalidSpecError(f"mesh size h={self.mesh_size} must satisfy 0 < h < R={self.radius}")
        if self.grading() < 1.0:
            raise InvalidSpecError(f"grading exponent {self.grading()} < 1")


@dataclass(frozen=True)
class PolygonSpec:
    vertices: tuple[tuple[float, float], ...]
    reentrant_index: int | None = None
    mesh_size: float = 0.1
    grading_exponent: float = 1.0

    @property
    def points(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    def perimeter(self) -> float:
        p = self.points
        return float(np.sum(np.hypot(*(np.roll(p, -1, axis=0) - p).T)))

    def diameter(self) -> float:
        p = self.points
        d = p[:, None, :] - p[None, :, :]
        return float(np.max(np.hypot(d[..., 0], d[..., 1])))

    def signed_area(self) -> float:
        p = self.points
        q = np.roll(p, -1, axis=0)
        return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))

    def interior_angle(self, i: int) -> float:
        p = self.points
        n = len(p)
        e_in = p[i] - p[i - 1]
        e_out = p[(i + 1) % n] - p[i]
        turn = math.atan2(e_in[0] * e_out[1] - e_in[1] * e_out[0], float(e_in @ e_out))
        return math.pi - turn

    def corner_frame(self) -> tuple[tuple[float, float], float, float]:
        """(corner point, theta0, bisector angle) of the reentrant vertex."""
        if self.reentrant_index is None:
            raise InvalidSpecError("polygon has no reentrant vertex")
        p = self.points
        i = self.reentrant_index
        omega = self.interior_angle(i)
        nxt = p[(i + 1) % len(p)] - p[i]
        axis = float(wrap_angle(math.atan2(nxt[1], nxt[0]) + 0.5 * omega))
        return (float(p[i, 0]), float(p[i, 1])), 0.5 * omega, axis

    def corner_inradius(self) -> float:
        """Largest r with the tangent subsector of radius r inside the polygon."""
        if self.reentrant_index is None:
            raise InvalidSpecError("polygon has no reentrant vertex")
        p = self.points
        n = len(p)
        i = self.reentrant_index
        corner = p[i]
        dist = math.inf
        for k in range(n):
            if k == i or (k + 1) % n == i:
                continue
            dist = min(dist, float(point_segment_distance(corner, p[k], p[(k + 1) % n])[0]))
        return dist

    def validate(self) -> None:
        p = self.points
        n = len(p)
        if p.ndim != 2 or p.shape[1] != 2 or n < 3:
            raise InvalidSpecError("polygon needs at least 3 planar vertices")
        if not self.mesh_size > 0.0:
            raise InvalidSpecError(f"mesh size h={self.mesh_size} must be positive")
        if self.grading_exponent < 1.0:
            raise InvalidSpecError(f"grading exponent {self.grading_exponent} < 1")
        for a in range(n):
            for b in range(a + 1, n):
                if b == a + 1 or (a == 0 and b == n - 1):
                    continue
                if segments_intersect(p[a], p[(a + 1) % n], p[b], p[(b + 1) % n]):
                    raise InvalidSpecError(f"polygon is self-intersecting (edges {a} and {b})")
        if self.signed_area() <= 0.0:
            raise InvalidSpecError("polygon vertices must be ordered counterclockwise")
        if self.reentrant_index is not None:
            i = self.reentrant_index
            if not 0 <= i < n:
                raise InvalidSpecError(f"reentrant_index {i} out of range")
            omega = self.interior_angle(i)
            if not (math.pi < omega < 2.0 * math.pi):
                raise InvalidSpecError(f"vertex {i} has interior angle {omega:.6f}, not reentrant")
            if not self.inside_tangent_cone():
                raise InvalidSpecError("polygon is not contained in the tangent cone of its reentrant vertex")

    def inside_tangent_cone(self, samples: int = 64, tol: float = 1e-9) -> bool:
        corner, theta0, axis = self.corner_frame()
        p = self.points
        n = len(p)
        t = np.linspace(0.0, 1.0, samples + 1)
        for k in range(n):
            a, b = p[k], p[(k + 1) % n]
            pts = a + t[:, None] * (b - a)
            r, theta = to_polar(pts, corner, axis)
            keep = r > 1e-12 * max(1.0, self.diameter())
            if np.any(np.abs(theta[keep]) > theta0 + tol):
                return False
        return True


@dataclass(frozen=True)
class DiskSpec:
    center: tuple[float, float]
    radius: float
    mesh_size: float = 0.05
    split: bool = False
    # Optional local refinement around a point (size mesh_size/refine_factor within refine_radius).
    refine_point: tuple[float, float] | None = None
    refine_radius: float = 0.0
    refine_factor: float = 8.0

    def validate(self) -> None:
        if not self.radius > 0.0:
            raise InvalidSpecError(f"disk radius {self.radius} must be positive")
        if not self.mesh_size > 0.0:
            raise InvalidSpecError(f"mesh size h={self.mesh_size} must be positive")


def read_polygon_spec(path: Path) -> PolygonSpec:
    """Read {"vertices": [[x,y],...], "reentrant_index": n, "h": ..., "beta": ...}."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return polygon_spec_from_dict(data)


def polygon_spec_from_dict(data: dict) -> PolygonSpec:
    try:
        verts = tuple((float(v[0]), float(v[1])) for v in data["vertices"])
    except (KeyError, TypeError, IndexError, ValueError) as e:
        raise InvalidSpecError(f"malformed polygon document: {e}") from e
    idx = data.get("reentrant_index")
    spec = PolygonSpec(
        vertices=verts,
        reentrant_index=None if idx is None else int(idx),
        mesh_size=float(data.get("h", 0.1)),
        grading_exponent=float(data.get("beta", 1.0)),
    )
    spec.validate()
    return spec


def unit_square(h: float = 0.1) -> PolygonSpec:
    return PolygonSpec(((0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)), None, h, 1.0)


def l_shape(h: float = 0.1, beta: float = 3.0) -> PolygonSpec:
    """(-1,1)^2 minus the closed fourth quadrant; reentrant corner at the origin."""
    verts = ((-1.0, -1.0), (0.0, -1.0), (0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (-1.0, 1.0))
    return PolygonSpec(verts, 2, h, beta)


# ------------------------------------------------------------
# Mesh
# ------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: tuple[BoundaryTag, ...]
    corner_node: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for arr in (self.nodes, self.triangles, self.boundary_edges):
            arr.setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return int(self.nodes.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d = [np.hypot(*(p[:, a] - p[:, b]).T) for a, b in ((0, 1), (1, 2), (2, 0))]
        return np.max(np.column_stack(d), axis=1)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.nodes[self.boundary_edges]
        return np.hypot(*(e[:, 1] - e[:, 0]).T)

    def area(self) -> float:
        return float(np.sum(self.signed_areas))

    def edges_of_kind(self, kind: BoundaryKind) -> np.ndarray:
        mask = np.array([t.kind == kind for t in self.edge_tags], dtype=bool)
        return np.flatnonzero(mask)

    def nodes_of_kind(self, kind: BoundaryKind) -> np.ndarray:
        return np.unique(self.boundary_edges[self.edges_of_kind(kind)])

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def dirichlet_nodes(self) -> np.ndarray:
        return self.nodes_of_kind(BoundaryKind.DIRICHLET)

    def boundary_length(self, kind: BoundaryKind | None = None) -> float:
        if kind is None:
            return float(np.sum(self.edge_lengths))
        return float(np.sum(self.edge_lengths[self.edges_of_kind(kind)]))

    def tags(self) -> list[BoundaryTag]:
        return sorted(set(self.edge_tags), key=lambda t: (t.kind.value, t.segment))

    @cached_property
    def _locator(self):
        p = self.nodes[self.triangles]
        a = p[:, 0]
        m = np.stack([p[:, 1] - a, p[:, 2] - a], axis=2)  # columns are edge vectors
        inv = np.linalg.inv(m)
        tree = cKDTree(p.mean(axis=1))
        return a, inv, tree

    def _bary(self, tri: np.ndarray, pts: np.ndarray) -> np.ndarray:
        a, inv, _ = self._locator
        l12 = np.einsum("nij,nj->ni", inv[tri], pts - a[tri])
        return np.column_stack([1.0 - l12[:, 0] - l12[:, 1], l12[:, 0], l12[:, 1]])

    def locate(self, points, tol: float = 1e-10, snap: float = 0.0):
        """Containing triangle and barycentric coordinates per point.

        Points not inside any triangle get index -1, unless they lie within
        ``snap`` (absolute distance) of the mesh, in which case they are
        projected onto the nearest candidate triangle.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = len(pts)
        tri_idx = np.full(n, -1, dtype=np.int64)
        bary = np.zeros((n, 3))
        a, inv, tree = self._locator
        k = min(16, self.n_triangles)
        _, cand = tree.query(pts, k=k)
        cand = np.asarray(cand).reshape(n, k)
        best_score = np.full(n, -np.inf)
        best_tri = np.zeros(n, dtype=np.int64)
        for c in range(k):
            b = self._bary(cand[:, c], pts)
            score = b.min(axis=1)
            better = score > best_score
            best_score[better] = score[better]
            best_tri[better] = cand[better, c]
            hit = (tri_idx < 0) & (score >= -tol)
            tri_idx[hit] = cand[hit, c]
            bary[hit] = b[hit]
        missing = np.flatnonzero(tri_idx < 0)
        for i in missing:
            # brute force over all triangles for points the k-nearest search missed
            b = self._bary(np.arange(self.n_triangles), np.repeat(pts[i:i + 1], self.n_triangles, axis=0))
            score = b.min(axis=1)
            j = int(np.argmax(score))
            if score[j] >= -tol:
                tri_idx[i] = j
                bary[i] = b[j]
            elif snap > 0.0:
                bj = np.clip(b[j], 0.0, None)
                bj /= bj.sum()
                proj = bj @ self.nodes[self.triangles[j]]
                if math.hypot(*(proj - pts[i])) <= snap:
                    tri_idx[i] = j
                    bary[i] = bj
        return tri_idx, bary


def validate_mesh(mesh: Mesh) -> list[str]:
    """List of violated Mesh invariants (empty when the mesh is valid)."""
    problems = []
    areas = mesh.signed_areas
    bad = np.flatnonzero(areas <= 0.0)
    if len(bad):
        problems.append(f"{len(bad)} triangles with non-positive area (first: {int(bad[0])})")
    t = mesh.triangles
    edges = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    if np.any(counts > 2):
        problems.append(f"{int(np.sum(counts > 2))} edges shared by more than 2 triangles")
    boundary = {tuple(e) for e in uniq[counts == 1]}
    tagged = [tuple(sorted(map(int, e))) for e in mesh.boundary_edges]
    if len(tagged) != len(set(tagged)):
        problems.append("boundary edge tagged more than once")
    if len(mesh.edge_tags) != len(tagged):
        problems.append("edge tag count differs from boundary edge count")
    if set(tagged) != boundary:
        problems.append(f"{len(boundary ^ set(tagged))} boundary edges untagged or tagged edges not on boundary")
    return problems


def mirror_symmetric(mesh: Mesh) -> bool:
    """True when reflecting node coordinates in y reproduces the node multiset bitwise."""
    a = mesh.nodes
    b = a * np.array([1.0, -1.0])
    ka = np.lexsort((a[:, 1], a[:, 0]))
    kb = np.lexsort((b[:, 1], b[:, 0]))
    return bool(np.array_equal(a[ka], b[kb]))


def mirror_map(mesh: Mesh, tol: float = 1e-12) -> np.ndarray:
    """Index of the mirror image (y -> -y) of every node."""
    tree = cKDTree(mesh.nodes)
    dist, idx = tree.query(mesh.nodes * np.array([1.0, -1.0]))
    if np.any(dist > tol):
        raise InvalidSpecError("mesh is not mirror symmetric")
    return idx


# ------------------------------------------------------------
# Sector
# ------------------------------------------------------------
def sector_layout(spec: SectorSpec) -> tuple[int, int]:
    """(N radial layers, M angular divisions). M is even so theta=0 is a mesh line.

    The angular step 2*theta0/M is at most h radians, so arc elements grow like
    R*h while the outer radial step stays near beta*h. With beta >= 1 the
    outer-layer aspect ratio (arc step over radial step) is bounded by R + h;
    ``mesh.meta["aspect_ratio"]`` records the actual value.
    """
    n_layers = max(2, math.ceil(spec.radius / spec.mesh_size))
    n_div = max(4, 2 * math.ceil(spec.theta0 / spec.mesh_size))
    return n_layers, n_div


def mesh_sector(spec: SectorSpec) -> Mesh:
    spec.validate()
    beta = spec.grading()
    n_layers, n_div = sector_layout(spec)
    k = np.arange(1, n_layers + 1)
    radii = spec.radius * (k / n_layers) ** beta
    radii[-1] = spec.radius
    j = np.arange(n_div + 1)
    angles = spec.theta0 * (2 * j - n_div) / n_div

    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    ring = np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])
    nodes = np.vstack([[0.0, 0.0], ring])

    def nid(layer, div):
        # layer is 1-based; corner is node 0
        return 1 + (layer - 1) * (n_div + 1) + div

    tris = []
    for d in range(n_div):
        tris.append([0, nid(1, d), nid(1, d + 1)])
    half = n_div // 2
    for layer in range(1, n_layers):
        for d in range(n_div):
            a, b = nid(layer, d), nid(layer + 1, d)
            c, e = nid(layer + 1, d + 1), nid(layer, d + 1)
            if d < half:
                tris.append([a, b, c])
                tris.append([a, c, e])
            else:
                tris.append([a, b, e])
                tris.append([b, c, e])
    triangles = np.asarray(tris, dtype=np.int64)

    edges = []
    tags = []
    lower = [0] + [nid(layer, 0) for layer in range(1, n_layers + 1)]
    upper = [0] + [nid(layer, n_div) for layer in range(1, n_layers + 1)]
    for seq, tag in ((lower, dirichlet(1)), (upper, dirichlet(2))):
        for u, v in zip(seq[:-1], seq[1:]):
            edges.append([u, v])
            tags.append(tag)
    for d in range(n_div):
        edges.append([nid(n_layers, d), nid(n_layers, d + 1)])
        tags.append(dirichlet(3))

    meta = {
        "type": "sector", "theta0": spec.theta0, "radius": spec.radius,
        "h": spec.mesh_size, "beta": beta, "layers": n_layers, "divisions": n_div,
        "corner": (0.0, 0.0), "axis": 0.0,
        "aspect_ratio": spec.radius * 2.0 * spec.theta0 / n_div / (radii[-1] - radii[-2]),
    }
    logger.debug("sector mesh theta0=%.6f R=%g: %d layers x %d divisions", spec.theta0, spec.radius, n_layers, n_div)
    return Mesh(nodes, triangles, np.asarray(edges, dtype=np.int64), tuple(tags), 0, meta)


# ------------------------------------------------------------
# Triangle-based meshes
# ------------------------------------------------------------
def _require_triangle():
    if _triangle_lib is None:
        raise InvalidSpecError("the 'triangle' package is required for polygon and disk meshes")
    return _triangle_lib


def _target_area(size: np.ndarray) -> np.ndarray:
    return (math.sqrt(3.0) / 4.0) * size ** 2


def _refine(tri_out: dict, size_fn, max_passes: int = MAX_REFINE_PASSES) -> dict:
    """Refine a Triangle mesh until every triangle meets the area of ``size_fn`` at its centroid."""
    lib = _require_triangle()
    for it in range(max_passes):
        v = tri_out["vertices"]
        t = tri_out["triangles"]
        p = v[t]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        target = _target_area(size_fn(p.mean(axis=1)))
        if np.all(area <= 1.05 * target):
            logger.debug("triangle refinement converged after %d passes (%d triangles)", it, len(t))
            return tri_out
        refine_in = {
            "vertices": v,
            "triangles": t,
            "segments": tri_out["segments"],
            "segment_markers": tri_out["segment_markers"],
            "triangle_max_area": np.minimum(area, target).reshape(-1, 1),
        }
        if "vertex_markers" in tri_out:
            refine_in["vertex_markers"] = tri_out["vertex_markers"]
        tri_out = lib.triangulate(refine_in, f"rpq{MIN_ANGLE}a")
    logger.warning("triangle refinement stopped after %d passes", max_passes)
    return tri_out


def _mesh_from_triangle(tri_out: dict, marker_tags: dict[int, BoundaryTag], meta: dict,
                        corner: tuple[float, float] | None = None) -> Mesh:
    nodes = np.asarray(tri_out["vertices"], dtype=float)
    triangles = np.asarray(tri_out["triangles"], dtype=np.int64)
    p = nodes[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    neg = (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]) < 0.0
    triangles[neg] = triangles[neg][:, [0, 2, 1]]
    segs = np.asarray(tri_out["segments"], dtype=np.int64)
    markers = np.asarray(tri_out["segment_markers"]).ravel()
    tags = tuple(marker_tags[int(m)] for m in markers)
    corner_node = None
    if corner is not None:
        corner_node = int(np.argmin(np.hypot(nodes[:, 0] - corner[0], nodes[:, 1] - corner[1])))
    return Mesh(nodes, triangles, segs, tags, corner_node, meta)


def _subdivide(a: np.ndarray, b: np.ndarray, spacing: float) -> np.ndarray:
    n = max(1, math.ceil(math.hypot(*(b - a)) / spacing))
    t = np.arange(n) / n
    return a + t[:, None] * (b - a)


def polygon_size_function(spec: PolygonSpec, boundary_layer: float | None = None):
    """Local mesh size: graded toward the reentrant vertex, layered toward the boundary."""
    h = spec.mesh_size
    diam = spec.diameter()
    beta = spec.grading_exponent
    p = spec.points
    corner = p[spec.reentrant_index] if spec.reentrant_index is not None else None
    h_min = h * (h / diam) ** (beta - 1.0)

    def size(x: np.ndarray) -> np.ndarray:
        s = np.full(len(x), h)
        if corner is not None and beta > 1.0:
            r = np.hypot(x[:, 0] - corner[0], x[:, 1] - corner[1])
            s = np.minimum(s, np.maximum(h_min, h * (r / diam) ** (1.0 - 1.0 / beta)))
        if boundary_layer is not None:
            d = np.full(len(x), np.inf)
            for k in range(len(p)):
                d = np.minimum(d, point_segment_distance(x, p[k], p[(k + 1) % len(p)]))
            s = np.minimum(s, boundary_layer + 0.3 * d)
        return s

    return size


def mesh_polygon(spec: PolygonSpec, boundary_layer: float | None = None) -> Mesh:
    """Mesh a straight polygon; all sides DIRICHLET(side index + 1).

    ``boundary_layer`` sets the element size at the boundary (geometric growth
    inward), used by the plasma runs whose solutions vary on that scale.
    """
    spec.validate()
    lib = _require_triangle()
    p = spec.points
    n = len(p)
    spacing = spec.mesh_size if boundary_layer is None else min(spec.mesh_size, boundary_layer)
    verts = []
    segs = []
    markers = []
    for k in range(n):
        pts = _subdivide(p[k], p[(k + 1) % n], spacing)
        start = len(verts)
        verts.extend(pts.tolist())
        for i in range(len(pts)):
            segs.append([start + i, start + i + 1])
            markers.append(k + 1)
    segs[-1][1] = 0
    tri_in = {
        "vertices": np.asarray(verts, dtype=float),
        "segments": np.asarray(segs, dtype=np.int32),
        "segment_markers": np.asarray(markers, dtype=np.int32).reshape(-1, 1),
    }
    area = _target_area(np.array([spec.mesh_size]))[0]
    out = lib.triangulate(tri_in, f"pq{MIN_ANGLE}a{area:.12g}")
    out = _refine(out, polygon_size_function(spec, boundary_layer))
    marker_tags = {k + 1: dirichlet(k + 1) for k in range(n)}
    meta = {"type": "polygon", "h": spec.mesh_size, "beta": spec.grading_exponent,
            "boundary_layer": boundary_layer, "perimeter": spec.perimeter()}
    corner = None
    if spec.reentrant_index is not None:
        corner, theta0, axis = spec.corner_frame()
        meta.update(corner=corner, theta0=theta0, axis=axis, inradius=spec.corner_inradius())
    mesh = _mesh_from_triangle(out, marker_tags, meta, corner)
    logger.debug("polygon mesh: %d nodes, %d triangles", mesh.n_nodes, mesh.n_triangles)
    return mesh


def disk_size_function(spec: DiskSpec):
    h = spec.mesh_size

    def size(x: np.ndarray) -> np.ndarray:
        s = np.full(len(x), h)
        if spec.refine_point is not None and spec.refine_radius > 0.0:
            d = np.hypot(x[:, 0] - spec.refine_point[0], x[:, 1] - spec.refine_point[1])
            fine = h / spec.refine_factor
            s = np.minimum(s, np.where(d <= spec.refine_radius, fine, fine + 0.5 * (d - spec.refine_radius)))
        return s

    return size


def _arc_points(spec: DiskSpec, phi0: float, phi1: float, size_fn) -> np.ndarray:
    """Points on the circle from angle phi0 to phi1 (phi1 excluded), spaced by the size function."""
    cx, cy = spec.center
    fine = np.linspace(phi0, phi1, 20001)
    pts = np.column_stack([cx + spec.radius * np.cos(fine), cy + spec.radius * np.sin(fine)])
    density = spec.radius / size_fn(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(fine))])
    n = max(2, math.ceil(cum[-1]))
    phis = np.interp(np.arange(n) / n * cum[-1], cum, fine)
    phis[0] = phi0
    return np.column_stack([cx + spec.radius * np.cos(phis), cy + spec.radius * np.sin(phis)])


def mesh_disk_mixed(spec: DiskSpec) -> Mesh:
    """Mesh a disk. With ``split`` the left half-circle (x < center) is DIRICHLET(1)
    and the right half-circle NEUMANN(2); otherwise the whole circle is DIRICHLET(1).
    The top and bottom points of the circle are always nodes."""
    spec.validate()
    lib = _require_triangle()
    size_fn = disk_size_function(spec)
    right = _arc_points(spec, -0.5 * math.pi, 0.5 * math.pi, size_fn)
    left = _arc_points(spec, 0.5 * math.pi, 1.5 * math.pi, size_fn)
    verts = np.vstack([right, left])
    # exact junction coordinates
    cx, cy = spec.center
    verts[0] = (cx, cy - spec.radius)
    verts[len(right)] = (cx, cy + spec.radius)
    n = len(verts)
    segs = np.column_stack([np.arange(n), (np.arange(n) + 1) % n]).astype(np.int32)
    right_marker, left_marker = (2, 1) if spec.split else (1, 1)
    markers = np.where(np.arange(n) < len(right), right_marker, left_marker).astype(np.int32)
    tri_in = {"vertices": verts, "segments": segs, "segment_markers": markers.reshape(-1, 1)}
    area = _target_area(np.array([spec.mesh_size]))[0]
    out = lib.triangulate(tri_in, f"pq{MIN_ANGLE}a{area:.12g}")
    out = _refine(out, size_fn)
    marker_tags = {1: dirichlet(1), 2: neumann(2) if spec.split else dirichlet(1)}
    meta = {"type": "disk", "center": spec.center, "radius": spec.radius, "h": spec.mesh_size,
            "split": spec.split}
    return _mesh_from_triangle(out, marker_tags, meta)

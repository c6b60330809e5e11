"""
P1 finite-element operators for -Lap(u) = W e^{-u}.

The nonlinear term is integrated by vertex (lumped) quadrature, so every
nodal quantity the solvers need reduces to the stiffness matrix, the
lumped mass vector and one Neumann load vector per tag.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, EvaluationError
from .geometry import BoundaryKind, BoundaryTag, Mesh

logger = logging.getLogger(__name__)

# Relative area below which a triangle is treated as degenerate.
DEGENERATE_AREA = 1e-14


@dataclass(frozen=True, eq=False)
class Operator:
    mesh: Mesh
    stiffness: sp.csr_matrix
    free_mask: np.ndarray
    lumped_mass: np.ndarray
    neumann_loads: dict[BoundaryTag, np.ndarray] = field(default_factory=dict)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(self.free_mask)

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(~self.free_mask)

    def load_vector(self, neumann: Mapping[BoundaryTag, float] | None) -> np.ndarray:
        """Sum of g_tag * (integral of the hat functions over the tag's edges)."""
        b = np.zeros(self.mesh.n_nodes)
        for tag, g in (neumann or {}).items():
            if tag not in self.neumann_loads:
                logger.warning("Neumann data given for %s, which is not a Neumann tag of this mesh", tag)
                continue
            b += float(g) * self.neumann_loads[tag]
        return b


@dataclass(frozen=True, eq=False)
class Field:
    """Nodal P1 values bound to a mesh."""
    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.mesh.n_nodes,):
            raise ValueError(f"field has {vals.shape} values for {self.mesh.n_nodes} nodes")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return len(self.values)

    def with_values(self, values: np.ndarray) -> Field:
        return Field(self.mesh, np.array(values, dtype=float))

    def scaled(self, factor: float) -> Field:
        return Field(self.mesh, factor * self.values)

    def evaluate(self, points, outside: str = "nan", snap: float = 0.0) -> np.ndarray:
        """Barycentric interpolation at arbitrary points.

        ``outside`` is "nan" (default) or "raise" for points outside the mesh.
        """
        tri, bary = self.mesh.locate(points, snap=snap)
        out = np.full(len(tri), np.nan)
        ok = tri >= 0
        if not np.all(ok) and outside == "raise":
            raise EvaluationError(f"{int(np.sum(~ok))} evaluation points outside the mesh")
        nodes = self.mesh.triangles[tri[ok]]
        out[ok] = np.sum(bary[ok] * self.values[nodes], axis=1)
        return out

    def gradients(self) -> np.ndarray:
        return triangle_gradients(self.mesh, self.values)


def _shape_gradients(mesh: Mesh) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-triangle (b, c, area) with grad(lambda_a) = (b_a, c_a) / (2 area)."""
    p = mesh.nodes[mesh.triangles]
    x = p[:, :, 0]
    y = p[:, :, 1]
    b = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]])
    c = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]])
    area = mesh.signed_areas
    return b, c, area


def triangle_gradients(mesh: Mesh, values: np.ndarray) -> np.ndarray:
    """Constant gradient of the P1 interpolant on every triangle, shape (n_tri, 2)."""
    b, c, area = _shape_gradients(mesh)
    v = np.asarray(values, dtype=float)[mesh.triangles]
    return np.column_stack([np.sum(b * v, axis=1), np.sum(c * v, axis=1)]) / (2.0 * area)[:, None]


def assemble_operator(mesh: Mesh) -> Operator:
    b, c, area = _shape_gradients(mesh)
    scale = float(np.max(mesh.diameters)) ** 2 if mesh.n_triangles else 1.0
    bad = np.flatnonzero(area <= DEGENERATE_AREA * scale)
    if len(bad):
        raise AssemblyError(f"degenerate triangle {int(bad[0])} (area {area[bad[0]]:.3e})", int(bad[0]))

    n = mesh.n_nodes
    t = mesh.triangles
    inv = 1.0 / (4.0 * area)
    diag = np.zeros(n)
    rows = []
    cols = []
    vals = []
    for a in range(3):
        np.add.at(diag, t[:, a], (b[:, a] * b[:, a] + c[:, a] * c[:, a]) * inv)
        for q in range(a + 1, 3):
            kval = (b[:, a] * b[:, q] + c[:, a] * c[:, q]) * inv
            i = np.minimum(t[:, a], t[:, q])
            j = np.maximum(t[:, a], t[:, q])
            rows.append(i)
            cols.append(j)
            vals.append(kval)
    upper = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    # upper + upper.T gives exactly equal (i, j) and (j, i) entries
    stiffness = (upper + upper.T + sp.diags(diag)).tocsr()
    stiffness.sort_indices()

    mass = np.zeros(n)
    np.add.at(mass, t.ravel(), np.repeat(area / 3.0, 3))

    free_mask = np.ones(n, dtype=bool)
    free_mask[mesh.dirichlet_nodes()] = False

    loads: dict[BoundaryTag, np.ndarray] = {}
    lengths = mesh.edge_lengths
    for k, tag in enumerate(mesh.edge_tags):
        if tag.kind != BoundaryKind.NEUMANN:
            continue
        vec = loads.setdefault(tag, np.zeros(n))
        u, v = mesh.boundary_edges[k]
        vec[u] += 0.5 * lengths[k]
        vec[v] += 0.5 * lengths[k]

    logger.debug("assembled operator: %d nodes, %d free, nnz=%d", n, int(free_mask.sum()), stiffness.nnz)
    return Operator(mesh, stiffness, free_mask, mass, loads)


def interpolate_field(mesh: Mesh, f: Callable, vectorized: bool = True) -> Field:
    """Nodal interpolant of ``f``.

    With ``vectorized`` the function receives the (n, 2) node array and returns
    n values; otherwise it is called once per node with an (x, y) pair.
    """
    if vectorized:
        values = np.asarray(f(mesh.nodes), dtype=float)
        if values.shape == ():
            values = np.full(mesh.n_nodes, float(values))
    else:
        values = np.array([float(f(p)) for p in mesh.nodes])
    if values.shape != (mesh.n_nodes,):
        raise EvaluationError(f"function returned shape {values.shape}, expected ({mesh.n_nodes},)")
    bad = np.flatnonzero(~np.isfinite(values))
    if len(bad):
        node = int(bad[0])
        raise EvaluationError(f"non-finite value {values[node]} at node {node} {tuple(mesh.nodes[node])}", node)
    return Field(mesh, values)


def constant_field(mesh: Mesh, value: float) -> Field:
    return Field(mesh, np.full(mesh.n_nodes, float(value)))


def _safe_exp_neg(u: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return np.exp(-u)


def energy_functional(op: Operator, u: Field, weight: Field,
                      neumann: Mapping[BoundaryTag, float] | None = None) -> float:
    """J(u) = 1/2 u.K.u + sum_i m_i W_i e^{-u_i} - b.u (lumped nonlinear term).

    ``b`` collects the Neumann data g (outward normal derivative) per tag, so
    stationarity of J is the weak form of -Lap(u) = W e^{-u}, d_n u = g.
    """
    x = u.values
    w = weight.values
    if np.any(w < 0.0):
        logger.warning("energy evaluated with a negative weight (min %.3e)", float(w.min()))
    quad = 0.5 * float(x @ (op.stiffness @ x))
    nonlinear = float(np.sum(op.lumped_mass * w * _safe_exp_neg(x)))
    return quad + nonlinear - float(op.load_vector(neumann) @ x)


def residual_vector(op: Operator, u: np.ndarray, weight: np.ndarray, load: np.ndarray | None = None) -> np.ndarray:
    """Full nodal residual K u - m W e^{-u} - b (meaningful on free nodes)."""
    r = op.stiffness @ u - op.lumped_mass * weight * _safe_exp_neg(u)
    if load is not None:
        r = r - load
    return r


def lumped_mass_integral(op: Operator, u: Field, weight: Field) -> float:
    """Integral of W e^{-u} by vertex quadrature."""
    return float(np.sum(op.lumped_mass * weight.values * _safe_exp_neg(u.values)))


def midpoint_mass_integral(op: Operator, u: Field, weight: Field) -> float:
    """Integral of W e^{-u} with the edge-midpoint rule on the P1 interpolants."""
    mesh = op.mesh
    t = mesh.triangles
    total = 0.0
    for a, q in ((0, 1), (1, 2), (2, 0)):
        um = 0.5 * (u.values[t[:, a]] + u.values[t[:, q]])
        wm = 0.5 * (weight.values[t[:, a]] + weight.values[t[:, q]])
        total += float(np.sum(mesh.signed_areas / 3.0 * wm * _safe_exp_neg(um)))
    return total


def boundary_flux(op: Operator, u: Field, weight: Field,
                  kind: BoundaryKind = BoundaryKind.DIRICHLET) -> float:
    """Variationally consistent outward flux of u through the boundary nodes of ``kind``.

    At a constrained node i the discrete normal derivative is
    (K u - m W e^{-u})_i; the sum over the Dirichlet nodes approximates
    the boundary integral of d_n u.
    """
    r = residual_vector(op, u.values, weight.values)
    nodes = op.mesh.nodes_of_kind(kind)
    return float(np.sum(r[nodes]))

"""
Corner singular functions and extraction of the singularity coefficient.

S(r, t)  = r^a cos(a t)
S*(r, t) = (1/pi) r^{-a} cos(a t)
P_s^R    = (1/pi) (r^{-a} - (r/R^2)^a) cos(a t)      (dual function of the sector of radius R)

with a = pi / (2 theta0) and (r, t) polar coordinates around the corner,
measured from the bisector.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .discretization import Field
from .errors import DomainError, FitFailure, SingularEvaluationError, UnsupportedError
from .geometry import Mesh
from .utils import to_polar

logger = logging.getLogger(__name__)

FIT_CONDITION_LIMIT = 1e8
DEFAULT_QUAD_ORDER = 6


class SingularKind(str, Enum):
    S = "S"
    S_DUAL = "S*"


class ExtractionMethod(str, Enum):
    DUAL = "DUAL"
    RAYFIT = "RAYFIT"
    CUTOFF_DUAL = "CUTOFF_DUAL"


@dataclass(frozen=True)
class SingularBasis:
    alpha: float
    corner: tuple[float, float] = (0.0, 0.0)
    axis: float = 0.0

    @classmethod
    def for_sector(cls, theta0: float) -> SingularBasis:
        return cls(math.pi / (2.0 * theta0))

    @classmethod
    def for_mesh(cls, mesh: Mesh) -> SingularBasis:
        meta = mesh.meta
        if "theta0" not in meta:
            raise UnsupportedError("mesh has no distinguished corner")
        return cls(math.pi / (2.0 * meta["theta0"]), tuple(meta.get("corner", (0.0, 0.0))), float(meta.get("axis", 0.0)))

    @property
    def theta0(self) -> float:
        return math.pi / (2.0 * self.alpha)

    def polar(self, points) -> tuple[np.ndarray, np.ndarray]:
        return to_polar(points, self.corner, self.axis)


@dataclass
class SingularityEstimate:
    lam: float
    method: ExtractionMethod
    bracket: tuple[float, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        low, high = self.bracket
        self.bracket = (min(low, high, self.lam), max(low, high, self.lam))

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "method": self.method.value,
                "bracket": list(self.bracket), **self.meta}


def _as_points(point) -> tuple[np.ndarray, bool]:
    p = np.asarray(point, dtype=float)
    single = p.ndim == 1
    return np.atleast_2d(p), single


def eval_singular(basis: SingularBasis, kind: SingularKind | str, point):
    """S or S* at one point (returns a float) or at an (n, 2) array of points."""
    kind = SingularKind(kind)
    pts, single = _as_points(point)
    r, theta = basis.polar(pts)
    a = basis.alpha
    if kind == SingularKind.S:
        out = r ** a * np.cos(a * theta)
    else:
        if np.any(r == 0.0):
            raise SingularEvaluationError("S* is singular at the corner")
        out = r ** (-a) * np.cos(a * theta) / math.pi
    return float(out[0]) if single else out


def eval_dual_ps(basis: SingularBasis, R: float, point):
    """P_s^R, the dual singular function of the sector of radius R."""
    pts, single = _as_points(point)
    r, theta = basis.polar(pts)
    if np.any(r > R * (1.0 + 1e-12)):
        raise DomainError(f"point outside the sector of radius {R}")
    if np.any(r == 0.0):
        raise SingularEvaluationError("P_s is singular at the corner")
    a = basis.alpha
    out = (r ** (-a) - (r / R ** 2) ** a) * np.cos(a * theta) / math.pi
    return float(out[0]) if single else out


# ------------------------------------------------------------
# Quadrature with a corner-weighted Duffy map
# ------------------------------------------------------------
@lru_cache(maxsize=32)
def _duffy_rule(order: int, beta: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tensor rule on (s, t) in [0,1]^2 for the weight s^beta (s = distance fraction from apex)."""
    xs, ws = roots_jacobi(order, 0.0, beta)
    s = 0.5 * (1.0 + xs)
    ws = ws * 2.0 ** (-(1.0 + beta))
    xt, wt = roots_legendre(order)
    t = 0.5 * (1.0 + xt)
    wt = 0.5 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    return S.ravel(), T.ravel(), W.ravel()


@dataclass(frozen=True)
class QuadraturePoints:
    points: np.ndarray       # (q, 2)
    weights: np.ndarray      # (q,)
    triangle: np.ndarray     # (q,) triangle index
    nodes: np.ndarray        # (q, 3) node ids, apex first
    bary: np.ndarray         # (q, 3) matching ``nodes``

    def interpolate(self, values: np.ndarray) -> np.ndarray:
        return np.sum(self.bary * np.asarray(values)[self.nodes], axis=1)


def quadrature_points(mesh: Mesh, triangles: np.ndarray, order: int,
                      corner_node: int | None = None, alpha: float = 1.0) -> QuadraturePoints:
    """Quadrature over the listed triangles.

    Triangles touching ``corner_node`` use the Duffy map from that vertex with
    Gauss-Jacobi weight s^{1-alpha}, which integrates r^{-alpha} times smooth
    functions accurately; the others use the plain Duffy map (weight s).

    On a corner triangle s is the radial fraction along each apex ray, so the
    s^{1-alpha} Jacobi weight is the r^{1-alpha} factor of polar coordinates and
    the rule is a polar rule in r over strips of the triangle; the Legendre
    direction t plays the role of the angle.
    """
    tris = np.asarray(triangles, dtype=np.int64)
    local = mesh.triangles[tris].copy()
    is_corner = np.zeros(len(tris), dtype=bool)
    if corner_node is not None:
        hit = local == corner_node
        is_corner = hit.any(axis=1)
        # rotate so the corner vertex comes first (orientation preserved)
        for shift in (1, 2):
            rows = hit[:, shift]
            local[rows] = np.roll(local[rows], -shift, axis=1)
    area = mesh.signed_areas[tris]

    pts, wts, tri_out, nodes_out, bary_out = [], [], [], [], []
    for flag, beta in ((False, 1.0), (True, 1.0 - alpha)):
        sel = np.flatnonzero(is_corner == flag)
        if len(sel) == 0:
            continue
        s, t, w = _duffy_rule(order, round(beta, 14))
        b = np.column_stack([1.0 - s, s * (1.0 - t), s * t])       # (q, 3)
        jac_extra = s ** (1.0 - beta)                               # remaining Jacobian factor
        nodes = local[sel]                                          # (m, 3)
        xyz = mesh.nodes[nodes]                                     # (m, 3, 2)
        p = np.einsum("qk,mkd->mqd", b, xyz)
        pts.append(p.reshape(-1, 2))
        wts.append((2.0 * area[sel][:, None] * (w * jac_extra)[None, :]).ravel())
        tri_out.append(np.repeat(tris[sel], len(s)))
        nodes_out.append(np.repeat(nodes, len(s), axis=0))
        bary_out.append(np.tile(b, (len(sel), 1)))
    return QuadraturePoints(np.vstack(pts), np.concatenate(wts), np.concatenate(tri_out),
                            np.vstack(nodes_out), np.vstack(bary_out))


def _require_reentrant(basis: SingularBasis) -> None:
    if basis.alpha >= 1.0:
        raise UnsupportedError(f"alpha={basis.alpha:.6g} >= 1: the sector has no dual singularity")


def extract_lambda_dual(u: Field, weight: Field, basis: SingularBasis | None = None,
                        R: float | None = None, order: int = DEFAULT_QUAD_ORDER) -> SingularityEstimate:
    """Lambda_R = integral over the sector of W e^{-u} P_s^R.

    The integrand is quadratured with the corner-weighted Duffy rule at two
    orders; the finer value is returned and both bound the bracket.
    """
    mesh = u.mesh
    basis = basis or SingularBasis.for_mesh(mesh)
    _require_reentrant(basis)
    R = float(R if R is not None else mesh.meta["radius"])
    g = weight.values * np.exp(-u.values)
    all_tris = np.arange(mesh.n_triangles)

    values = []
    for n in (order, 2 * order):
        q = quadrature_points(mesh, all_tris, n, mesh.corner_node, basis.alpha)
        ps = eval_dual_ps(basis, R, q.points)
        values.append(float(np.sum(q.weights * q.interpolate(g) * ps)))
    lam = values[-1]
    logger.debug("dual extraction R=%g: %.10e (order %d) / %.10e (order %d)", R, values[0], order, values[1], 2 * order)
    return SingularityEstimate(lam, ExtractionMethod.DUAL, (min(values), max(values)),
                               {"radius": R, "orders": [order, 2 * order]})


# ------------------------------------------------------------
# Ray fitting
# ------------------------------------------------------------
def _ray_samples(u: Field, basis: SingularBasis, r_min: float, r_max: float, theta: float,
                 n_geometric: int = 24) -> tuple[np.ndarray, np.ndarray]:
    mesh = u.mesh
    r_nodes, t_nodes = basis.polar(mesh.nodes)
    on_ray = (np.abs(t_nodes - theta) <= 1e-12) & (r_nodes >= r_min) & (r_nodes <= r_max)
    if np.count_nonzero(on_ray) >= 8:
        idx = np.flatnonzero(on_ray)
        return r_nodes[idx], u.values[idx]
    radii = np.geomspace(r_min, r_max, n_geometric)
    x = basis.corner[0] + radii * math.cos(theta + basis.axis)
    y = basis.corner[1] + radii * math.sin(theta + basis.axis)
    vals = u.evaluate(np.column_stack([x, y]))
    keep = np.isfinite(vals)
    if not np.all(keep):
        logger.info("ray theta=%.4f: %d samples outside the mesh skipped", theta, int(np.sum(~keep)))
    return radii[keep], vals[keep]


def _fit_once(u: Field, basis: SingularBasis, r_min: float, r_max: float, rays: list[float]) -> float:
    a = basis.alpha
    rows = []
    rhs = []
    for theta in rays:
        r, v = _ray_samples(u, basis, r_min, r_max, theta)
        cols = [r ** a * math.cos(a * theta), r * math.cos(theta), r ** 2]
        if len(rays) > 1:
            cols.append(r ** 2 * math.cos(2.0 * theta))
        rows.append(np.column_stack(cols))
        rhs.append(v)
    A = np.vstack(rows)
    y = np.concatenate(rhs)
    if len(y) < A.shape[1] + 2:
        raise FitFailure(f"only {len(y)} samples in window [{r_min:.4g}, {r_max:.4g}]")
    scale = np.linalg.norm(A, axis=0)
    if np.any(scale == 0.0):
        raise FitFailure("degenerate fit column")
    As = A / scale
    cond = float(np.linalg.cond(As))
    if not cond <= FIT_CONDITION_LIMIT:
        raise FitFailure(f"ill-conditioned ray fit (condition number {cond:.3e})")
    coef, *_ = np.linalg.lstsq(As, y, rcond=None)
    return float(coef[0] / scale[0])


def extract_lambda_fit(u: Field, window: tuple[float, float], rays: list[float] | None = None,
                       basis: SingularBasis | None = None) -> SingularityEstimate:
    """Least-squares fit of u along rays from the corner against
    {S, r cos t, r^2 (, r^2 cos 2t on several rays)}; returns the S coefficient.
    The bracket comes from refitting on the window scaled by 0.75 and 1.25."""
    mesh = u.mesh
    basis = basis or SingularBasis.for_mesh(mesh)
    rays = list(rays) if rays else [0.0]
    r_min, r_max = window
    if not 0.0 < r_min < r_max:
        raise FitFailure(f"bad fit window {window}")
    if any(abs(t) >= basis.theta0 for t in rays):
        raise FitFailure("fit ray outside the corner opening")

    r_nodes, _ = basis.polar(mesh.nodes)
    near = np.flatnonzero(np.any(np.abs(r_nodes[mesh.triangles] - r_min) <= r_min, axis=1))
    if len(near) and r_min <= 2.0 * float(np.max(mesh.diameters[near])):
        logger.warning("fit window starts at %.3g, within two element sizes of the mesh scale", r_min)

    lam = _fit_once(u, basis, r_min, r_max, rays)
    variants = []
    for f in (0.75, 1.25):
        try:
            variants.append(_fit_once(u, basis, f * r_min, f * r_max, rays))
        except FitFailure as e:
            logger.info("window variant x%.2f failed: %s", f, e)
    bracket = (min([lam] + variants), max([lam] + variants))
    return SingularityEstimate(lam, ExtractionMethod.RAYFIT, bracket,
                               {"window": [r_min, r_max], "rays": rays})


# ------------------------------------------------------------
# Cutoff dual extraction on general domains
# ------------------------------------------------------------
def cutoff_profile(r: np.ndarray, B: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """chi, chi', chi'' of the radial quintic cutoff: 1 on r <= B/2, 0 on r >= B, C^2."""
    half = 0.5 * B
    t = np.clip((np.asarray(r) - half) / half, 0.0, 1.0)
    chi = 1.0 - (6.0 * t ** 5 - 15.0 * t ** 4 + 10.0 * t ** 3)
    d1 = -(30.0 * t ** 2 * (1.0 - t) ** 2) / half
    d2 = -(60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)) / half ** 2
    return chi, d1, d2


def extract_lambda_cutoff(u: Field, weight: Field, B: float, basis: SingularBasis | None = None,
                          order: int = DEFAULT_QUAD_ORDER) -> SingularityEstimate:
    """lambda = integral of (chi W e^{-u} - 2 grad chi . grad u - u Lap chi) P_s^{2B}
    over the subsector of radius 2B; valid when that subsector lies in the domain."""
    mesh = u.mesh
    basis = basis or SingularBasis.for_mesh(mesh)
    _require_reentrant(basis)
    if mesh.corner_node is None:
        raise UnsupportedError("cutoff extraction needs a mesh corner node")
    g = weight.values * np.exp(-u.values)
    grads = u.gradients()
    r_nodes, _ = basis.polar(mesh.nodes)
    tris = np.flatnonzero(np.min(r_nodes[mesh.triangles], axis=1) < B)

    values = []
    for n in (order, 2 * order):
        q = quadrature_points(mesh, tris, n, mesh.corner_node, basis.alpha)
        r, theta = basis.polar(q.points)
        keep = r < B
        chi, d1, d2 = cutoff_profile(r, B)
        with np.errstate(divide="ignore", invalid="ignore"):
            lap_chi = np.where(keep, d2 + d1 / np.where(r > 0.0, r, 1.0), 0.0)
            dx = q.points[:, 0] - basis.corner[0]
            dy = q.points[:, 1] - basis.corner[1]
            rr = np.where(r > 0.0, r, 1.0)
            grad_chi_dot = d1 * (grads[q.triangle, 0] * dx + grads[q.triangle, 1] * dy) / rr
        integrand = chi * q.interpolate(g) - 2.0 * grad_chi_dot - q.interpolate(u.values) * lap_chi
        ps = np.zeros(len(r))
        ps[keep] = eval_dual_ps(basis, 2.0 * B, q.points[keep])
        values.append(float(np.sum(q.weights * integrand * ps)))
    return SingularityEstimate(values[-1], ExtractionMethod.CUTOFF_DUAL, (min(values), max(values)),
                               {"cutoff_radius": B, "orders": [order, 2 * order]})

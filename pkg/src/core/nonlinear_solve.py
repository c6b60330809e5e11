"""
Damped Newton on the convex energy and a monotone sub/supersolution
iteration for -Lap(u) = W e^{-u} with mixed Dirichlet/Neumann data.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .discretization import Field, Operator, assemble_operator, residual_vector
from .errors import DivergedError, InternalError, InvalidSpecError, PreconditionError
from .geometry import BoundaryKind, BoundaryTag, Mesh

logger = logging.getLogger(__name__)

DirichletData = Mapping[BoundaryTag, "float | Callable[[np.ndarray], np.ndarray]"]
NeumannData = Mapping[BoundaryTag, float]

LINEAR_SOLVERS = ("direct", "cg")


@dataclass(frozen=True)
class SolveOptions:
    residual_tol: float = 1e-10
    max_newton: int = 50
    armijo_c: float = 1e-4
    linear_solver: str = "direct"
    cg_tol: float = 1e-12
    max_backtracks: int = 40

    def __post_init__(self):
        if not self.residual_tol > 0.0:
            raise InvalidSpecError(f"residual_tol must be positive, got {self.residual_tol}")
        if self.max_newton < 1:
            raise InvalidSpecError(f"max_newton must be >= 1, got {self.max_newton}")
        if self.linear_solver not in LINEAR_SOLVERS:
            raise InvalidSpecError(f"linear_solver must be one of {LINEAR_SOLVERS}")


@dataclass
class SolveReport:
    iterations: int = 0
    residual: float = math.inf
    initial_residual: float = math.inf
    energy: list[float] = field(default_factory=list)
    converged: bool = False
    linear_solver: str = "direct"
    step_lengths: list[float] = field(default_factory=list)

    @property
    def relative_residual(self) -> float:
        return self.residual / max(1.0, self.initial_residual)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("step_lengths")
        return d


# ------------------------------------------------------------
# Boundary data
# ------------------------------------------------------------
def check_dirichlet_coverage(mesh: Mesh) -> None:
    """Every connected boundary component needs a Dirichlet part."""
    edges = mesh.boundary_edges
    n = mesh.n_nodes
    graph = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    comps = set(labels[edges[:, 0]])
    dir_edges = mesh.edges_of_kind(BoundaryKind.DIRICHLET)
    covered = set(labels[edges[dir_edges, 0]])
    if comps - covered:
        raise PreconditionError(f"{len(comps - covered)} boundary component(s) without a Dirichlet part")


def dirichlet_values(mesh: Mesh, dirichlet: DirichletData | None) -> np.ndarray:
    """Nodal Dirichlet data (zero on tags without data). Later tags win at shared nodes."""
    g = np.zeros(mesh.n_nodes)
    if not dirichlet:
        return g
    for tag, data in dirichlet.items():
        if tag.kind != BoundaryKind.DIRICHLET:
            raise InvalidSpecError(f"Dirichlet data attached to {tag}")
        idx = mesh.edges_of_kind(BoundaryKind.DIRICHLET)
        idx = idx[[mesh.edge_tags[k] == tag for k in idx]]
        nodes = np.unique(mesh.boundary_edges[idx])
        if len(nodes) == 0:
            logger.warning("no boundary edges carry %s", tag)
            continue
        if callable(data):
            vals = np.asarray(data(mesh.nodes[nodes]), dtype=float)
        else:
            vals = np.full(len(nodes), float(data))
        if not np.all(np.isfinite(vals)):
            raise InvalidSpecError(f"non-finite Dirichlet data on {tag}; truncate unbounded data before solving")
        g[nodes] = vals
    return g


def _check_weight(weight: Field) -> None:
    w = weight.values
    if not np.all(np.isfinite(w)):
        raise PreconditionError("weight is not finite at every node")
    if np.any(w < 0.0):
        raise PreconditionError(f"weight must be nonnegative (min {float(w.min()):.3e})")


# ------------------------------------------------------------
# Newton
# ------------------------------------------------------------
def _linear_solve(matrix: sp.csr_matrix, rhs: np.ndarray, opts: SolveOptions) -> np.ndarray:
    if opts.linear_solver == "direct":
        return spla.splu(matrix.tocsc()).solve(rhs)
    diag = matrix.diagonal()
    precond = spla.LinearOperator(matrix.shape, matvec=lambda x: x / diag)
    sol, info = spla.cg(matrix, rhs, rtol=opts.cg_tol, atol=0.0, maxiter=10 * matrix.shape[0], M=precond)
    if info != 0:
        logger.warning("conjugate gradient stopped with info=%d", info)
    return sol


def _energy(op: Operator, x: np.ndarray, w: np.ndarray, b: np.ndarray) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        val = 0.5 * float(x @ (op.stiffness @ x)) + float(np.sum(op.lumped_mass * w * np.exp(-x))) - float(b @ x)
    return val if math.isfinite(val) else math.inf


def solve_semilinear(mesh: Mesh, weight: Field, dirichlet: DirichletData | None = None,
                     neumann: NeumannData | None = None, opts: SolveOptions | None = None,
                     initial: Field | None = None, operator: Operator | None = None) -> tuple[Field, SolveReport]:
    """Solve -Lap(u) = W e^{-u}, u = g on Dirichlet tags, d_n u = const on Neumann tags.

    Newton steps (K + diag(m W e^{-u})) d = -F are globalized by Armijo
    backtracking on the energy. The start is 0 in the interior (or ``initial``).
    """
    opts = opts or SolveOptions()
    op = operator or assemble_operator(mesh)
    _check_weight(weight)
    check_dirichlet_coverage(mesh)

    w = weight.values
    b = op.load_vector(neumann)
    free = op.free
    x = np.zeros(mesh.n_nodes) if initial is None else np.array(initial.values, dtype=float)
    x[~op.free_mask] = dirichlet_values(mesh, dirichlet)[~op.free_mask]
    K_ff = op.stiffness[free][:, free]
    m_f = op.lumped_mass[free]
    w_f = w[free]

    report = SolveReport(linear_solver=opts.linear_solver)
    F = residual_vector(op, x, w, b)[free]
    norm = float(np.linalg.norm(F))
    report.initial_residual = norm
    report.residual = norm
    target = opts.residual_tol * max(1.0, norm)
    energy = _energy(op, x, w, b)
    report.energy.append(energy)

    for it in range(1, opts.max_newton + 1):
        if norm <= target:
            break
        with np.errstate(over="ignore"):
            curv = m_f * w_f * np.exp(-x[free])
        J = (K_ff + sp.diags(curv)).tocsr()
        delta = _linear_solve(J, -F, opts)
        slope = float(F @ delta)
        if not slope < 0.0:
            raise InternalError(f"Newton direction is not a descent direction (slope {slope:.3e})")

        t = 1.0
        trial = x.copy()
        accepted = False
        for _ in range(opts.max_backtracks):
            trial[free] = x[free] + t * delta
            e_trial = _energy(op, trial, w, b)
            if e_trial <= energy + opts.armijo_c * t * slope:
                accepted = True
                break
            t *= 0.5
        F_trial = None
        if not accepted:
            # energy differences below roundoff: accept the full step if it reduces the residual
            trial[free] = x[free] + delta
            F_trial = residual_vector(op, trial, w, b)[free]
            if abs(slope) <= 1e-13 * max(1.0, abs(energy)) and np.linalg.norm(F_trial) < norm:
                t = 1.0
                e_trial = None
            else:
                report.iterations = it
                logger.warning("line search failed at Newton iteration %d (residual %.3e)", it, norm)
                raise DivergedError(f"line search failed at iteration {it}", Field(mesh, x.copy()), report)

        x = trial
        F = F_trial if F_trial is not None else residual_vector(op, x, w, b)[free]
        norm = float(np.linalg.norm(F))
        report.iterations = it
        report.residual = norm
        report.step_lengths.append(t)
        if e_trial is not None:
            energy = e_trial
            report.energy.append(energy)
        logger.debug("newton %2d: step %.3g residual %.3e energy %.12e", it, t, norm, energy)

    report.converged = norm <= target
    if not report.converged:
        logger.info("Newton did not converge in %d iterations (residual %.3e)", opts.max_newton, norm)
        raise DivergedError(
            f"no convergence in {opts.max_newton} Newton iterations (residual {norm:.3e})",
            Field(mesh, x), report,
        )
    logger.info("Newton converged in %d iterations, residual %.3e", report.iterations, norm)
    return Field(mesh, x), report


# ------------------------------------------------------------
# Monotone iteration
# ------------------------------------------------------------
def monotone_iterate(mesh: Mesh, weight: Field, start: Field, opts: SolveOptions | None = None,
                     dirichlet: DirichletData | None = None, neumann: NeumannData | None = None,
                     max_iter: int = 2000, sigma: str = "max", callback: Callable | None = None,
                     operator: Operator | None = None) -> Field:
    """Monotone iteration (K + s M) u_{n+1} = M W e^{-u_n} + s M u_n + b from a subsolution.

    ``sigma`` is "max" (one shift s = max_i W_i e^{-u_n,i}) or "nodal" (s_i per node,
    which keeps monotonicity and converges faster on large weights).
    ``callback(n, values)`` is called after every iterate.
    """
    opts = opts or SolveOptions()
    op = operator or assemble_operator(mesh)
    _check_weight(weight)
    check_dirichlet_coverage(mesh)
    if sigma not in ("max", "nodal"):
        raise InvalidSpecError(f"sigma must be 'max' or 'nodal', got {sigma!r}")

    w = weight.values
    b = op.load_vector(neumann)
    free = op.free
    fixed = op.fixed
    g = dirichlet_values(mesh, dirichlet)
    x = np.array(start.values, dtype=float)

    F = residual_vector(op, x, w, b)[free]
    scale = float(np.max(np.abs(op.lumped_mass * w))) if mesh.n_nodes else 1.0
    if np.any(F > 1e-12 * max(1.0, scale)) or np.any(x[fixed] > g[fixed] + 1e-12):
        raise PreconditionError("start is not a discrete subsolution")
    x[fixed] = g[fixed]

    K_ff = op.stiffness[free][:, free]
    K_fd = op.stiffness[free][:, fixed]
    m_f = op.lumped_mass[free]
    w_f = w[free]
    norm = float(np.linalg.norm(F))
    target = opts.residual_tol * max(1.0, norm)

    for n in range(1, max_iter + 1):
        if norm <= target:
            break
        curv = w_f * np.exp(-x[free])
        s = np.full(len(free), float(curv.max()) if len(curv) else 0.0) if sigma == "max" else curv
        A = (K_ff + sp.diags(m_f * s)).tocsr()
        rhs = m_f * curv + m_f * s * x[free] + b[free] - K_fd @ x[fixed]
        x[free] = _linear_solve(A, rhs, opts)
        F = residual_vector(op, x, w, b)[free]
        norm = float(np.linalg.norm(F))
        logger.debug("monotone %3d: residual %.3e", n, norm)
        if callback is not None:
            callback(n, x.copy())
    else:
        if norm > target:
            raise DivergedError(f"monotone iteration did not converge in {max_iter} steps", Field(mesh, x))
    logger.info("monotone iteration converged, residual %.3e", norm)
    return Field(mesh, x)

"""
Supersolution on the split plane built from a mixed problem on a disk.

The upper half-plane (plane 1) is mapped onto the disk D2 of center -i/2 and
radius 1/2 (plane 2) by Phi(z) = 1/(z + i), with inverse Psi(z) = 1/z - i.
The negative real axis goes to the left half-circle (Dirichlet), the positive
real axis to the right half-circle (Neumann), z1 = 0 to z2 = -i and z1 = oo to z2 = 0.

Fields transform as w2(z2) = log|Psi'(z2)| + w1(Psi(z2)), which preserves
Lap(w) = 4 e^{2w}, and phi(x) = -2 w1(x / sqrt(8)) solves -Lap(phi) = e^{-phi}.
On the disk we solve in u = -2 w, i.e. -Lap(u) = 8 e^{-u}, u = -2 g on the
Dirichlet half-circle and d_n u = 4 on the Neumann half-circle.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .discretization import Field, constant_field
from .errors import DomainError, InvalidSpecError, MapSingularityError
from .geometry import DiskSpec, Mesh, dirichlet, mesh_disk_mixed, neumann
from .nonlinear_solve import SolveOptions, solve_semilinear

logger = logging.getLogger(__name__)

DISK_CENTER = (0.0, -0.5)
DISK_RADIUS = 0.5
SCALE = math.sqrt(8.0)
DEFAULT_K_SCHEDULE = (0, 2, 4, 6)
POLE_TOL = 1e-14


def _check_pole(z: np.ndarray, pole: complex, name: str) -> None:
    if np.any(np.abs(z - pole) <= POLE_TOL):
        raise MapSingularityError(f"{name} evaluated at its pole {pole}")


@dataclass(frozen=True)
class ConformalPair:
    """Phi(z) = 1/(z + i) from the upper half-plane onto D2, Psi = Phi^{-1}."""

    def forward(self, z):
        z = np.asarray(z, dtype=complex)
        _check_pole(z, -1j, "Phi")
        return 1.0 / (z + 1j)

    def inverse(self, z):
        z = np.asarray(z, dtype=complex)
        _check_pole(z, 0j, "Psi")
        return 1.0 / z - 1j

    def forward_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        _check_pole(z, -1j, "Phi'")
        return -1.0 / (z + 1j) ** 2

    def inverse_derivative(self, z):
        z = np.asarray(z, dtype=complex)
        _check_pole(z, 0j, "Psi'")
        return -1.0 / z ** 2


def transform_field(w: Callable, direction: str, pair: ConformalPair | None = None) -> Callable:
    """Carry a field between the planes.

    direction "1to2": w2(z2) = log|Psi'(z2)| + w1(Psi(z2));
    direction "2to1": w1(z1) = log|Phi'(z1)| + w2(Phi(z1)).
    ``w`` and the returned function take complex arrays.
    """
    pair = pair or ConformalPair()
    if direction == "1to2":
        return lambda z2: np.log(np.abs(pair.inverse_derivative(z2))) + w(pair.inverse(z2))
    if direction == "2to1":
        return lambda z1: np.log(np.abs(pair.forward_derivative(z1))) + w(pair.forward(z1))
    raise InvalidSpecError(f"direction must be '1to2' or '2to1', got {direction!r}")


def _to_complex(points) -> np.ndarray:
    p = np.atleast_2d(np.asarray(points, dtype=float))
    return p[:, 0] + 1j * p[:, 1]


def truncated_datum(points, k: float) -> np.ndarray:
    """g_k = min(k, -log|z2|^2) on the Dirichlet half-circle."""
    z = _to_complex(points)
    with np.errstate(divide="ignore"):
        g = -np.log(np.abs(z) ** 2)
    return np.minimum(k, g)


def disk_mesh(h: float, k_max: float) -> Mesh:
    """Mesh of D2 refined to h/8 within |z2| <= e^{-k_max/2}."""
    spec = DiskSpec(DISK_CENTER, DISK_RADIUS, h, split=True,
                    refine_point=(0.0, 0.0), refine_radius=math.exp(-0.5 * k_max), refine_factor=8.0)
    return mesh_disk_mixed(spec)


def solve_disk_truncated(k: float, h: float = 0.02, mesh: Mesh | None = None,
                         opts: SolveOptions | None = None, initial: Field | None = None) -> Field:
    """w2^k on D2: Lap(w) = 4 e^{2w}, w = g_k on the left half-circle, d_n w = -2 on the right one.

    Returns the field in w-variables; ``initial`` (w-variables) warm-starts Newton.
    """
    if not k >= 0.0:
        raise InvalidSpecError(f"truncation level must be >= 0, got {k}")
    mesh = mesh or disk_mesh(h, k)
    u0 = None if initial is None else initial.scaled(-2.0)
    u, report = solve_semilinear(
        mesh,
        constant_field(mesh, 8.0),
        dirichlet={dirichlet(1): lambda p: -2.0 * truncated_datum(p, k)},
        neumann={neumann(2): 4.0},
        opts=opts,
        initial=u0,
    )
    logger.info("disk level k=%g solved in %d Newton steps", k, report.iterations)
    return u.scaled(-0.5)


@dataclass
class PhiStarEvaluator:
    """phi*(x) = 4 log|z1 + i| - 2 w2^k(Phi(z1)), z1 = x / sqrt(8), on the closed upper half-plane."""
    levels: dict[float, Field]
    k: float
    mesh_meta: dict = field(default_factory=dict)
    pair: ConformalPair = field(default_factory=ConformalPair)

    @property
    def mesh(self) -> Mesh:
        return self.levels[self.k].mesh

    @property
    def m(self) -> float:
        """min of the nodal w2 at the lowest truncation level."""
        return float(np.min(self.levels[min(self.levels)].values))

    def disk_points(self, points, reflect: bool = True) -> tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if reflect:
            p[:, 1] = np.abs(p[:, 1])
        elif np.any(p[:, 1] < -1e-12):
            raise DomainError("phi* is defined on the closed upper half-plane")
        z1 = (p[:, 0] + 1j * np.maximum(p[:, 1], 0.0)) / SCALE
        z2 = self.pair.forward(z1)
        return np.column_stack([z2.real, z2.imag]), z1

    def __call__(self, points, level: float | None = None, reflect: bool = True) -> np.ndarray:
        field_ = self.levels[self.k if level is None else level]
        xy2, z1 = self.disk_points(points, reflect)
        h = float(self.mesh_meta.get("h", 0.05))
        w2 = field_.evaluate(xy2, snap=h)
        return 4.0 * np.log(np.abs(z1 + 1j)) - 2.0 * w2

    def upper_bound(self, points) -> np.ndarray:
        """2 log(1 + (sqrt2/2) r sin(t) + r^2/8) - 2 m."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        r2 = p[:, 0] ** 2 + p[:, 1] ** 2
        return 2.0 * np.log(1.0 + (math.sqrt(2.0) / 2.0) * np.abs(p[:, 1]) + r2 / 8.0) - 2.0 * self.m


@dataclass
class PhiStarResult:
    values: np.ndarray
    delta: np.ndarray
    k: float
    converged: bool
    evaluator: PhiStarEvaluator
    history: dict[float, np.ndarray] = field(default_factory=dict)

    @property
    def max_delta(self) -> float:
        return float(np.nanmax(np.abs(self.delta))) if len(self.delta) else 0.0


def build_phistar(points, k_schedule: Sequence[float] = DEFAULT_K_SCHEDULE, h: float = 0.02,
                  stop_tol: float = 1e-3, opts: SolveOptions | None = None) -> PhiStarResult:
    """Sample phi* at points of the closed upper half-plane, raising k along the schedule
    until the largest sampled change drops below ``stop_tol``."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts[:, 1] < -1e-12):
        raise DomainError("phi* sample points must lie in the closed upper half-plane")
    schedule = sorted(float(k) for k in k_schedule)
    if not schedule:
        raise InvalidSpecError("empty truncation schedule")
    mesh = disk_mesh(h, schedule[-1])
    levels: dict[float, Field] = {}
    history: dict[float, np.ndarray] = {}
    previous = None
    values = delta = None
    converged = False
    for k in schedule:
        levels[k] = solve_disk_truncated(k, h, mesh=mesh, opts=opts, initial=previous)
        previous = levels[k]
        evaluator = PhiStarEvaluator(levels, k, dict(mesh.meta))
        current = evaluator(pts, reflect=False)
        history[k] = current
        delta = np.zeros(len(current)) if values is None else current - values
        values = current
        logger.info("phi* level k=%g: max change %.3e", k, float(np.nanmax(np.abs(delta))) if len(delta) else 0.0)
        if len(history) > 1 and np.nanmax(np.abs(delta)) < stop_tol:
            converged = True
            break
    evaluator = PhiStarEvaluator(levels, k, dict(mesh.meta))
    return PhiStarResult(values, delta, k, converged, evaluator, history)

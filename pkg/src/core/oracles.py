"""
Closed-form solutions and the radial ODE (r v')' = r e^v used as ground truth.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import DomainError, InvalidSpecError, OracleFailure

logger = logging.getLogger(__name__)

ODE_TOL = 1e-10
# v above boundary value + this margin counts as blow-up during shooting
BLOWUP_MARGIN = 60.0


def halfplane_profile(x1):
    """2 log(1 + x1/sqrt(2)), the half-plane solution depending on the distance x1 to the boundary."""
    x = np.asarray(x1, dtype=float)
    if np.any(x < 0.0):
        raise DomainError("half-plane profile needs x1 >= 0")
    out = 2.0 * np.log1p(x / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


def _disk_A(R: float) -> float:
    return math.sqrt(2.0) + math.sqrt(2.0 + R * R)


def disk_closed_form(R: float, x_rel):
    """Solution of -Lap(phi) = e^{-phi} in the disk of radius R, phi = 0 on the circle,
    at distance ``x_rel`` from the center."""
    if not R > 0.0:
        raise DomainError(f"disk radius must be positive, got {R}")
    x = np.asarray(x_rel, dtype=float)
    if np.any(x < 0.0) or np.any(x > R * (1.0 + 1e-12)):
        raise DomainError(f"distance from center must lie in [0, {R}]")
    A2 = _disk_A(R) ** 2
    out = np.log((A2 - x * x) ** 2 / (8.0 * A2))
    return float(out) if out.ndim == 0 else out


def disk_closed_form_derivative(R: float, x_rel):
    """Radial derivative d(phi)/d(rho) of the disk solution."""
    x = np.asarray(x_rel, dtype=float)
    A2 = _disk_A(R) ** 2
    out = -4.0 * x / (A2 - x * x)
    return float(out) if out.ndim == 0 else out


def disk_lower_bound(rho: float) -> float:
    """Center value log(rho^2 + 4 + sqrt(8 rho^2 + 16)) - log 8 of the disk solution of radius rho.

    Any nonnegative solution is at least this at the center of an inscribed disk.
    """
    return math.log(rho * rho + 4.0 + math.sqrt(8.0 * rho * rho + 16.0)) - math.log(8.0)


def disk_lower_bound_simple(rho) -> float:
    """The weaker bound log(1 + rho^2/8)."""
    return np.log1p(np.asarray(rho, dtype=float) ** 2 / 8.0)


def ball_closed_form(eta: float, epsilon: float, r):
    """Solution of (r v')' = r e^v on r < eta with v(eta) = -2 log(epsilon), by rescaling the disk formula."""
    return -2.0 * math.log(epsilon) - disk_closed_form(eta / epsilon, np.asarray(r, dtype=float) / epsilon)


# ------------------------------------------------------------
# Radial ODE
# ------------------------------------------------------------
class RadialKind(str, Enum):
    BALL = "ball"
    ANNULUS = "annulus"


@dataclass
class RadialProfile:
    kind: RadialKind
    radii: tuple[float, ...]
    epsilon: float
    grid: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    boundary_derivative: tuple[float, ...]
    shooting_parameter: float
    tolerance: float = ODE_TOL
    dense: Callable | None = field(default=None, repr=False)

    @property
    def boundary_value(self) -> float:
        return -2.0 * math.log(self.epsilon)

    def rows(self):
        for r, v, dv in zip(self.grid, self.values, self.derivatives):
            yield float(r), float(v), float(dv)


def _rhs(r, y):
    # y = (v, w) with w = r v'
    v, w = y
    return [w / r, r * math.exp(min(v, 700.0))]


def _integrate(r0: float, r1: float, v0: float, w0: float, cap: float, tol: float, dense: bool = False):
    def blowup(r, y):
        return y[0] - cap

    blowup.terminal = True
    blowup.direction = 1
    return solve_ivp(_rhs, (r0, r1), [v0, w0], method="DOP853", rtol=tol, atol=tol,
                     events=blowup, dense_output=dense)


def _ball_start(v0: float, r: float) -> tuple[float, float]:
    """Series v0 + e^{v0} r^2/4 + e^{2 v0} r^4/64 and w = r v'."""
    e = math.exp(v0)
    v = v0 + e * r * r / 4.0 + e * e * r ** 4 / 64.0
    dv = e * r / 2.0 + e * e * r ** 3 / 16.0
    return v, r * dv


def _shoot_bracket(f: Callable[[float], float], lo: float, hi: float, step: float) -> tuple[float, float]:
    """Move ``lo`` down until f(lo) < 0 (f increasing, f(hi) > 0)."""
    for _ in range(80):
        if f(lo) < 0.0:
            return lo, hi
        hi = lo
        lo -= step
        step *= 2.0
    raise OracleFailure("could not bracket the shooting parameter")


def radial_bvp(kind: RadialKind | str, radii, epsilon: float, tol: float = ODE_TOL,
               n_grid: int = 201) -> RadialProfile:
    """Solve (r v')' = r e^v with v = -2 log(epsilon) on the boundary of a ball (radius eta)
    or annulus (radii a < b) by shooting."""
    kind = RadialKind(kind)
    radii = tuple(float(x) for x in np.atleast_1d(radii))
    if not epsilon > 0.0:
        raise InvalidSpecError(f"epsilon must be positive, got {epsilon}")
    if any(r <= 0.0 for r in radii):
        raise InvalidSpecError("radii must be positive")
    target = -2.0 * math.log(epsilon)
    cap = target + BLOWUP_MARGIN

    if kind == RadialKind.BALL:
        if len(radii) != 1:
            raise InvalidSpecError("ball needs one radius")
        eta = radii[0]
        r0 = 1e-4 * eta

        def end_value(v0: float) -> float:
            v, w = _ball_start(v0, r0)
            sol = _integrate(r0, eta, v, w, cap, tol)
            if sol.status == 1 or sol.t[-1] < eta:
                return cap - target
            return float(sol.y[0, -1]) - target

        lo, hi = _shoot_bracket(end_value, target - 1.0, target, 1.0)
        try:
            v0 = brentq(end_value, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        except (ValueError, RuntimeError) as e:
            raise OracleFailure(f"ball shooting failed: {e}") from e
        v, w = _ball_start(v0, r0)
        sol = _integrate(r0, eta, v, w, cap, tol, dense=True)
        if sol.status != 0:
            raise OracleFailure("ball profile blew up at the converged shooting value")
        grid = np.linspace(0.0, eta, n_grid)
        values = np.empty(n_grid)
        derivs = np.empty(n_grid)
        inner = grid < r0
        for i in np.flatnonzero(inner):
            vi, wi = _ball_start(v0, grid[i])
            values[i] = vi
            derivs[i] = wi / grid[i] if grid[i] > 0.0 else 0.0
        y = sol.sol(grid[~inner])
        values[~inner] = y[0]
        derivs[~inner] = y[1] / grid[~inner]
        values[-1] = target
        dv_eta = float(sol.y[1, -1] / eta)
        derivs[-1] = dv_eta
        logger.debug("ball eta=%g eps=%g: v(0)=%.12g v'(eta)=%.12g", eta, epsilon, v0, dv_eta)
        return RadialProfile(kind, radii, epsilon, grid, values, derivs, (dv_eta,), v0, tol, sol.sol)

    if len(radii) != 2 or not radii[0] < radii[1]:
        raise InvalidSpecError("annulus needs radii a < b")
    a, b = radii

    def end_value(s: float) -> float:
        sol = _integrate(a, b, target, a * s, cap, tol)
        if sol.status == 1 or sol.t[-1] < b:
            return cap - target
        return float(sol.y[0, -1]) - target

    bound = 4.0 / a + math.sqrt(2.0) / epsilon
    lo, hi = _shoot_bracket(end_value, -bound, 0.0, bound)
    try:
        s = brentq(end_value, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, RuntimeError) as e:
        raise OracleFailure(f"annulus shooting failed: {e}") from e
    sol = _integrate(a, b, target, a * s, cap, tol, dense=True)
    if sol.status != 0:
        raise OracleFailure("annulus profile blew up at the converged shooting value")
    grid = np.linspace(a, b, n_grid)
    y = sol.sol(grid)
    values = y[0].copy()
    values[0] = values[-1] = target
    derivs = y[1] / grid
    dv_b = float(sol.y[1, -1] / b)
    logger.debug("annulus a=%g b=%g eps=%g: v'(a)=%.12g v'(b)=%.12g", a, b, epsilon, s, dv_b)
    return RadialProfile(kind, radii, epsilon, grid, values, derivs, (s, dv_b), s, tol, sol.sol)


# ------------------------------------------------------------
# Identities
# ------------------------------------------------------------
def ball_derivative_exact(eta: float, epsilon: float) -> float:
    """Nonnegative root of (eta v')^2/2 + 2 eta v' = eta^2/eps^2, divided by eta."""
    q = (eta / epsilon) ** 2
    return (math.sqrt(4.0 + 2.0 * q) - 2.0) / eta


def ball_derivative_lower_bound(eta: float, epsilon: float) -> float:
    """2 eta eps^{-2} / (sqrt(2 eta^2 eps^{-2}) + 4), a lower bound for v'(eta) ~ sqrt(2)/eps."""
    q = (eta / epsilon) ** 2
    return 2.0 * eta / epsilon ** 2 / (math.sqrt(2.0 * q) + 4.0)


@dataclass
class RadialIdentityReport:
    kind: RadialKind
    residual: float
    relative_residual: float
    checks: dict[str, bool] = field(default_factory=dict)
    values: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "residual": self.residual,
                "relative_residual": self.relative_residual,
                "checks": dict(self.checks), "values": dict(self.values)}


def radial_identity_check(profile: RadialProfile) -> RadialIdentityReport:
    eps = profile.epsilon
    if profile.kind == RadialKind.BALL:
        eta = profile.radii[0]
        dv = profile.boundary_derivative[0]
        lhs = 0.5 * (eta * dv) ** 2
        rhs = eta ** 2 / eps ** 2 - 2.0 * eta * dv
        res = abs(lhs - rhs)
        exact = ball_derivative_exact(eta, eps)
        lower = ball_derivative_lower_bound(eta, eps)
        report = RadialIdentityReport(profile.kind, res, res / max(1.0, abs(rhs)))
        report.values.update(derivative=dv, exact_root=exact, other_root=-(math.sqrt(4.0 + 2.0 * (eta / eps) ** 2) + 2.0) / eta,
                             lower_bound=lower, center_value=float(profile.values[0]))
        report.checks.update(
            derivative_nonnegative=dv >= 0.0,
            lower_bound=dv >= lower,
            root_selected=abs(dv - exact) <= 1e-6 * max(1.0, exact),
        )
        return report

    a, b = profile.radii
    dva, dvb = profile.boundary_derivative
    # critical radius c with v'(c) = 0
    wa = profile.dense(a)[1]
    wb = profile.dense(b)[1]
    if not (wa < 0.0 < wb):
        raise OracleFailure("annulus profile has no interior critical radius")
    c = brentq(lambda r: float(profile.dense(r)[1]), a, b, xtol=1e-14)
    vc = float(profile.dense(c)[0])
    lhs = -(a * dva) ** 2
    rhs = 2.0 * c * c * math.exp(vc) - 2.0 * a * a / eps ** 2 + 4.0 * a * dva
    res = abs(lhs - rhs)
    sharp = 2.0 / a + math.sqrt(4.0 / a ** 2 + 2.0 / eps ** 2)
    simple = 4.0 / a + math.sqrt(2.0) / eps
    report = RadialIdentityReport(profile.kind, res, res / max(1.0, 2.0 * a * a / eps ** 2))
    report.values.update(derivative_inner=dva, derivative_outer=dvb, critical_radius=c,
                         critical_value=vc, bound_sharp=sharp, bound_simple=simple)
    report.checks.update(
        inner_derivative_nonpositive=dva <= 0.0,
        critical_radius_inside=a < c < b,
        sharp_bound=abs(dva) <= sharp,
        simple_bound=abs(dva) <= simple,
    )
    return report

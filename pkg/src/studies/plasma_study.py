"""
Plasma equilibrium -Lap(phi) = kappa e^{phi_e - phi} on a polygon, kappa = eps^-2:
masses, singularity coefficients, their scaling in eps, and the comparison of
the rescaled solution with the sector minimal solution.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from ..core.discretization import (
    Field,
    assemble_operator,
    boundary_flux,
    interpolate_field,
    lumped_mass_integral,
    midpoint_mass_integral,
)
from ..core.errors import DivergedError, InvalidSpecError, SolverError
from ..core.geometry import Mesh, PolygonSpec, mesh_polygon
from ..core.nonlinear_solve import SolveOptions, SolveReport, solve_semilinear
from ..core.singular_analysis import (
    SingularBasis,
    SingularityEstimate,
    extract_lambda_cutoff,
    extract_lambda_fit,
)
from ..core.utils import from_polar
from .runner import BatchRunner
from .sector_study import MinimalSolutionStudy

logger = logging.getLogger(__name__)

LAYER_FRACTION = 1.0 / 3.0
# RAYFIT window along the bisector, in units of eps
FIT_WINDOW_EPS = (0.1, 0.5)
BLOWUP_TOL = 0.05

PointFunction = Callable[[np.ndarray], np.ndarray]


@dataclass
class PlasmaCase:
    domain: PolygonSpec
    epsilon: float
    phi_e: PointFunction | None = None
    field: Field | None = None
    mass: float | None = None
    mass_flux: float | None = None
    mass_midpoint: float | None = None
    lam: SingularityEstimate | None = None
    lam_cutoff: SingularityEstimate | None = None
    report: SolveReport | None = None
    boundary_h: float | None = None
    error: str | None = None

    @property
    def kappa(self) -> float:
        return self.epsilon ** -2

    @property
    def mesh(self) -> Mesh | None:
        return None if self.field is None else self.field.mesh

    @property
    def under_resolved(self) -> bool:
        return self.boundary_h is not None and self.boundary_h > 1.1 * LAYER_FRACTION * self.epsilon

    @property
    def ok(self) -> bool:
        return self.error is None and self.field is not None

    def to_dict(self) -> dict:
        d = {"epsilon": self.epsilon, "kappa": self.kappa, "ok": self.ok, "error": self.error,
             "mass": self.mass, "mass_flux": self.mass_flux, "mass_midpoint": self.mass_midpoint,
             "boundary_h": self.boundary_h, "under_resolved": self.under_resolved}
        if self.field is not None:
            d["nodes"] = self.field.mesh.n_nodes
        if self.report is not None:
            d["solve"] = self.report.to_dict()
        d["lambda"] = None if self.lam is None else self.lam.to_dict()
        d["lambda_cutoff"] = None if self.lam_cutoff is None else self.lam_cutoff.to_dict()
        return d


def _nodal_phi_e(mesh: Mesh, phi_e: PointFunction | None) -> np.ndarray:
    if phi_e is None:
        return np.zeros(mesh.n_nodes)
    return interpolate_field(mesh, phi_e).values


def plasma_mesh(domain: PolygonSpec, epsilon: float) -> Mesh:
    """Polygon mesh with boundary layer width eps/3."""
    return mesh_polygon(domain, boundary_layer=min(domain.mesh_size, LAYER_FRACTION * epsilon))


def _extract(case: PlasmaCase, weight: Field) -> None:
    domain = case.domain
    if domain.reentrant_index is None:
        return
    u = case.field
    basis = SingularBasis.for_mesh(u.mesh)
    window = (FIT_WINDOW_EPS[0] * case.epsilon, FIT_WINDOW_EPS[1] * case.epsilon)
    try:
        case.lam = extract_lambda_fit(u, window, basis=basis)
    except SolverError as e:
        logger.warning("eps=%g: ray fit failed: %s", case.epsilon, e)
    try:
        case.lam_cutoff = extract_lambda_cutoff(u, weight, 0.5 * domain.corner_inradius(), basis=basis)
    except SolverError as e:
        logger.warning("eps=%g: cutoff extraction failed: %s", case.epsilon, e)


def solve_plasma(domain: PolygonSpec, epsilon: float, phi_e: PointFunction | None = None,
                 mesh: Mesh | None = None, opts: SolveOptions | None = None,
                 kappa: float | None = None, extract: bool = True,
                 initial: Field | None = None) -> PlasmaCase:
    """Solve with W = kappa e^{phi_e} (kappa = eps^-2 unless given) and compute the mass.

    ``kappa`` overrides eps; the case then carries eps = kappa^{-1/2}.
    """
    if kappa is not None:
        if not kappa > 0.0:
            raise InvalidSpecError(f"kappa must be positive, got {kappa}")
        epsilon = kappa ** -0.5
    if not epsilon > 0.0:
        raise InvalidSpecError(f"eps must be positive, got {epsilon}")
    domain.validate()
    mesh = mesh or plasma_mesh(domain, epsilon)
    case = PlasmaCase(domain, epsilon, phi_e)
    op = assemble_operator(mesh)
    weight = Field(mesh, epsilon ** -2 * np.exp(_nodal_phi_e(mesh, phi_e)))
    try:
        u, report = solve_semilinear(mesh, weight, opts=opts, operator=op, initial=initial)
    except DivergedError as e:
        raise DivergedError(
            f"{e}; refine the mesh near the boundary (layer width ~ eps = {epsilon:g})", e.last, e.report
        ) from e
    case.field = u
    case.report = report
    case.boundary_h = float(np.max(mesh.edge_lengths))
    case.mass = lumped_mass_integral(op, u, weight)
    case.mass_flux = -boundary_flux(op, u, weight)
    case.mass_midpoint = midpoint_mass_integral(op, u, weight)
    if case.under_resolved:
        logger.warning("eps=%g: boundary edges up to %.3g exceed eps/3", epsilon, case.boundary_h)
    if extract:
        _extract(case, weight)
    logger.info("plasma eps=%g: M=%.8e eps*M=%.6f", epsilon, case.mass, epsilon * case.mass)
    return case


def solve_plasma_for_mass(domain: PolygonSpec, mass: float, phi_e: PointFunction | None = None,
                          opts: SolveOptions | None = None, extract: bool = True,
                          rtol: float = 1e-8) -> PlasmaCase:
    """Find kappa with M(kappa) = mass by bracketed root finding on log(kappa).

    The mesh is fixed for the whole search so that M is a continuous, strictly
    increasing function of kappa.
    """
    if not mass > 0.0:
        raise InvalidSpecError(f"mass must be positive, got {mass}")
    domain.validate()
    perimeter = domain.perimeter()
    kappa0 = (mass / (math.sqrt(2.0) * perimeter)) ** 2
    mesh = plasma_mesh(domain, 0.5 * kappa0 ** -0.5)
    state: dict[str, Field | None] = {"last": None}

    def log_mass_gap(log_kappa: float) -> float:
        case = solve_plasma(domain, 1.0, phi_e, mesh=mesh, opts=opts, kappa=math.exp(log_kappa),
                            extract=False, initial=state["last"])
        state["last"] = case.field
        return math.log(case.mass) - math.log(mass)

    lo, hi = math.log(kappa0) - 1.0, math.log(kappa0) + 1.0
    f_lo, f_hi = log_mass_gap(lo), log_mass_gap(hi)
    for _ in range(30):
        if f_lo < 0.0 < f_hi:
            break
        if f_lo >= 0.0:
            lo -= 2.0
            f_lo = log_mass_gap(lo)
        if f_hi <= 0.0:
            hi += 2.0
            f_hi = log_mass_gap(hi)
    else:
        raise SolverError(f"could not bracket kappa for mass {mass}")
    state["last"] = None
    log_kappa = brentq(log_mass_gap, lo, hi, xtol=1e-14, rtol=1e-14)
    case = solve_plasma(domain, 1.0, phi_e, mesh=mesh, opts=opts, kappa=math.exp(log_kappa), extract=extract)
    if abs(case.mass - mass) > rtol * mass:
        logger.warning("mass-constrained solve missed the target by %.3e (relative)", abs(case.mass - mass) / mass)
    return case


# ------------------------------------------------------------
# eps sweep
# ------------------------------------------------------------
@dataclass
class ScalingRow:
    epsilon: float
    mass: float | None
    lam: float | None
    alpha: float | None
    kappa: float
    mass_flux: float | None = None
    under_resolved: bool = False
    error: str | None = None
    w_samples: list[float] = field(default_factory=list)

    @property
    def eps_mass(self) -> float | None:
        return None if self.mass is None else self.epsilon * self.mass

    @property
    def eps_alpha_lam(self) -> float | None:
        if self.lam is None or self.alpha is None:
            return None
        return self.epsilon ** self.alpha * self.lam

    @property
    def c1(self) -> float | None:
        return None if not self.mass else self.kappa / self.mass ** 2

    @property
    def c2(self) -> float | None:
        if self.lam is None or not self.mass or self.alpha is None:
            return None
        return self.lam / self.mass ** self.alpha

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "mass": self.mass, "eps_mass": self.eps_mass,
                "lambda": self.lam, "eps_alpha_lambda": self.eps_alpha_lam,
                "kappa": self.kappa, "C1": self.c1, "C2": self.c2, "mass_flux": self.mass_flux,
                "under_resolved": self.under_resolved, "error": self.error, "w_samples": list(self.w_samples)}


@dataclass
class ScalingReport:
    rows: list[ScalingRow]
    perimeter: float
    alpha: float | None
    mass_slope: float | None = None
    lambda_slope: float | None = None
    mass_slope_fit: float | None = None
    lambda_slope_fit: float | None = None
    eps_mass_limit: float | None = None
    eps_mass_bracket: tuple[float, float] | None = None
    eps_alpha_lambda_limit: float | None = None
    eps_alpha_lambda_bracket: tuple[float, float] | None = None
    sector_lambda: float | None = None
    w_monotone: bool | None = None
    cases: list[PlasmaCase] = field(default_factory=list, repr=False)

    @property
    def mass_target(self) -> float:
        return math.sqrt(2.0) * self.perimeter

    @property
    def mass_limit_error(self) -> float | None:
        if self.eps_mass_limit is None:
            return None
        return abs(self.eps_mass_limit - self.mass_target) / self.mass_target

    def to_dict(self) -> dict:
        return {
            "perimeter": self.perimeter,
            "alpha": self.alpha,
            "sqrt2_perimeter": self.mass_target,
            "mass_slope": self.mass_slope,
            "lambda_slope": self.lambda_slope,
            "mass_slope_fit": self.mass_slope_fit,
            "lambda_slope_fit": self.lambda_slope_fit,
            "eps_mass_limit": self.eps_mass_limit,
            "eps_mass_bracket": None if self.eps_mass_bracket is None else list(self.eps_mass_bracket),
            "eps_mass_limit_relative_error": self.mass_limit_error,
            "eps_alpha_lambda_limit": self.eps_alpha_lambda_limit,
            "eps_alpha_lambda_bracket": None if self.eps_alpha_lambda_bracket is None else list(self.eps_alpha_lambda_bracket),
            "sector_lambda": self.sector_lambda,
            "w_monotone": self.w_monotone,
            "rows": [r.to_dict() for r in self.rows],
        }


def richardson(eps: tuple[float, float], values: tuple[float, float]) -> tuple[float, tuple[float, float]]:
    """Limit of y(eps) = L + c eps from two rows (eps1 > eps2); bracket spans L and y(eps2)."""
    e1, e2 = eps
    y1, y2 = values
    limit = (e1 * y2 - e2 * y1) / (e1 - e2)
    return limit, (min(limit, y2), max(limit, y2))


def _loglog_slope(eps: list[float], values: list[float], last: int | None = None) -> float | None:
    """Least-squares slope of log(value) against log(eps); ``last`` keeps only the smallest eps."""
    pairs = [(e, v) for e, v in zip(eps, values) if v is not None and v > 0.0]
    if last is not None:
        pairs = pairs[-last:]
    if len(pairs) < 2:
        return None
    e, v = zip(*pairs)
    slope, _ = np.polyfit(np.log(e), np.log(v), 1)
    return float(slope)


def interior_samples(domain: PolygonSpec) -> np.ndarray:
    """Area centroid and the midpoints between it and each vertex (some may fall outside)."""
    p = domain.points
    q = np.roll(p, -1, axis=0)
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    area = 0.5 * np.sum(cross)
    c = np.array([np.sum((p[:, 0] + q[:, 0]) * cross), np.sum((p[:, 1] + q[:, 1]) * cross)]) / (6.0 * area)
    return np.vstack([c, 0.5 * (p + c)])


def sweep_eps(domain: PolygonSpec, epsilons: list[float], phi_e: PointFunction | None = None,
              opts: SolveOptions | None = None, jobs: int = 1, extract: bool = True,
              sector_lambda: float | None = None,
              progress: Callable[[int, int], None] | None = None,
              error: Callable[[str], None] | None = None, fail_fast: bool = False) -> ScalingReport:
    eps = [float(e) for e in epsilons]
    if len(eps) < 3:
        raise InvalidSpecError("an eps sweep needs at least 3 values")
    if any(b >= a for a, b in zip(eps[:-1], eps[1:])):
        raise InvalidSpecError(f"eps list must be strictly decreasing, got {eps}")
    domain.validate()
    alpha = None
    if domain.reentrant_index is not None:
        alpha = math.pi / (2.0 * domain.corner_frame()[1])
    samples = interior_samples(domain)

    ops = [(f"eps={e:g}", (lambda e=e: solve_plasma(domain, e, phi_e, opts=opts, extract=extract))) for e in eps]

    def failed(msg: str) -> None:
        if error:
            error(msg)
        if fail_fast:
            runner.abort()

    runner = BatchRunner(ops, jobs=jobs, progress=progress, error=failed)
    outcomes = runner.run()

    rows: list[ScalingRow] = []
    cases: list[PlasmaCase] = []
    for e, out in zip(eps, outcomes):
        if not out.ok:
            rows.append(ScalingRow(e, None, None, alpha, e ** -2, error=out.error))
            cases.append(PlasmaCase(domain, e, phi_e, error=out.error))
            continue
        case: PlasmaCase = out.value
        cases.append(case)
        w = -2.0 * math.log(e) - case.field.evaluate(samples)
        rows.append(ScalingRow(e, case.mass, None if case.lam is None else case.lam.lam, alpha, case.kappa,
                               case.mass_flux, case.under_resolved, None,
                               [float(x) for x in w if np.isfinite(x)]))

    report = ScalingReport(rows, domain.perimeter(), alpha, sector_lambda=sector_lambda, cases=cases)
    masses, lams = [r.mass for r in rows], [r.lam for r in rows]
    report.mass_slope = _loglog_slope(eps, masses, last=2)
    report.lambda_slope = _loglog_slope(eps, lams, last=2)
    report.mass_slope_fit = _loglog_slope(eps, masses)
    report.lambda_slope_fit = _loglog_slope(eps, lams)

    good = [r for r in rows if r.mass is not None]
    if len(good) >= 2:
        a, b = good[-2], good[-1]
        report.eps_mass_limit, report.eps_mass_bracket = richardson((a.epsilon, b.epsilon), (a.eps_mass, b.eps_mass))
    good_lam = [r for r in rows if r.eps_alpha_lam is not None]
    if len(good_lam) >= 2:
        a, b = good_lam[-2], good_lam[-1]
        report.eps_alpha_lambda_limit, report.eps_alpha_lambda_bracket = richardson(
            (a.epsilon, b.epsilon), (a.eps_alpha_lam, b.eps_alpha_lam))

    series = [np.array(r.w_samples) for r in rows if r.w_samples]
    if len(series) >= 2 and all(len(s) == len(series[0]) for s in series):
        report.w_monotone = bool(all(np.all(b <= a + 1e-9) for a, b in zip(series[:-1], series[1:])))
    logger.info("eps sweep: mass slope %s, lambda slope %s", report.mass_slope, report.lambda_slope)
    return report


# ------------------------------------------------------------
# Blow-up comparison
# ------------------------------------------------------------
@dataclass
class BlowupComparison:
    epsilon: float
    window: float
    n_samples: int
    skipped: int
    lower_radius: float | None
    upper_radius: float
    lower_violation: float | None
    upper_violation: float
    tolerance: float
    lambda_scaled: float | None
    sector_lambda: float | None

    @property
    def lambda_error(self) -> float | None:
        if self.lambda_scaled is None or not self.sector_lambda:
            return None
        return abs(self.lambda_scaled - self.sector_lambda) / abs(self.sector_lambda)

    @property
    def passed(self) -> bool:
        low_ok = self.lower_violation is None or self.lower_violation <= self.tolerance
        return low_ok and self.upper_violation <= self.tolerance

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "window": self.window, "samples": self.n_samples,
                "skipped": self.skipped, "lower_radius": self.lower_radius, "upper_radius": self.upper_radius,
                "lower_violation": self.lower_violation, "upper_violation": self.upper_violation,
                "tolerance": self.tolerance, "eps_alpha_lambda": self.lambda_scaled,
                "sector_lambda": self.sector_lambda, "lambda_relative_error": self.lambda_error,
                "passed": self.passed}


def blowup_compare(case: PlasmaCase, study: MinimalSolutionStudy, window: float = 4.0,
                   n_radii: int = 8, n_angles: int = 9, tolerance: float = BLOWUP_TOL) -> BlowupComparison:
    """Compare v_eps(xi) = phi_eps(eps xi) with sector solutions u_R(xi) on |xi| <= window."""
    domain = case.domain
    if domain.reentrant_index is None:
        raise InvalidSpecError("blow-up comparison needs a domain with a reentrant corner")
    if not case.ok:
        raise InvalidSpecError("plasma case has no solution")
    corner, theta0, axis = domain.corner_frame()
    if not math.isclose(theta0, study.theta0, rel_tol=1e-9):
        raise InvalidSpecError(f"sector study opening {study.theta0} does not match the corner {theta0}")
    ok = study.successful()
    if not ok:
        raise InvalidSpecError("sector study has no solved member")
    reach = domain.corner_inradius() / case.epsilon
    below = [m for m in ok if m.R <= reach]
    lower = below[-1] if below else None
    upper = ok[-1]
    if lower is None:
        logger.warning("no sector radius <= inradius/eps = %.3g; lower comparison skipped", reach)

    radii = np.linspace(window / n_radii, window, n_radii)
    angles = np.linspace(-theta0, theta0, n_angles + 2)[1:-1]
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    xi = from_polar(rr.ravel(), aa.ravel())
    x = from_polar(case.epsilon * rr.ravel(), aa.ravel(), corner, axis)
    v = case.field.evaluate(x)
    u_hi = upper.field.evaluate(xi)
    u_lo = lower.field.evaluate(xi) if lower is not None else np.zeros(len(xi))
    keep = np.isfinite(v) & np.isfinite(u_hi) & np.isfinite(u_lo)
    skipped = int(np.sum(~keep))
    if skipped:
        logger.info("blow-up comparison: %d sample points outside a mesh skipped", skipped)
    if not np.any(keep):
        raise InvalidSpecError("no sample point lies in both meshes")
    low_v = float(np.max(u_lo[keep] - v[keep])) if lower is not None else None
    up_v = float(np.max(v[keep] - u_hi[keep]))
    scaled = None
    if case.lam is not None:
        scaled = case.epsilon ** (math.pi / (2.0 * theta0)) * case.lam.lam
    return BlowupComparison(case.epsilon, window, int(np.sum(keep)), skipped,
                            None if lower is None else lower.R, upper.R, low_v, up_v, tolerance,
                            scaled, study.lam)


# ------------------------------------------------------------
# External potential sandwich
# ------------------------------------------------------------
@dataclass
class SandwichReport:
    kappa: float
    phi_min: float
    phi_max: float
    masses: dict[str, float | None]
    lambdas: dict[str, float | None]
    mass_ordered: bool | None
    lambda_ordered: bool | None
    field_ordered: bool | None
    errors: dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        flags = [f for f in (self.mass_ordered, self.lambda_ordered) if f is not None]
        return not self.errors and all(flags)

    def to_dict(self) -> dict:
        return {"kappa": self.kappa, "phi_e_min": self.phi_min, "phi_e_max": self.phi_max,
                "masses": dict(self.masses), "lambdas": dict(self.lambdas),
                "mass_ordered": self.mass_ordered, "lambda_ordered": self.lambda_ordered,
                "field_ordered": self.field_ordered, "errors": dict(self.errors), "passed": self.passed}


def _ordered(a: float, b: float, c: float, rtol: float) -> bool:
    return a <= b + rtol * abs(b) and b <= c + rtol * abs(c)


def sandwich_check(domain: PolygonSpec, kappa: float, phi_e: PointFunction | None,
                   opts: SolveOptions | None = None, rtol: float = 1e-6,
                   mesh: Mesh | None = None) -> SandwichReport:
    """Solves (kappa e^{min phi_e}, 0), (kappa, phi_e), (kappa e^{max phi_e}, 0) on one mesh
    and checks that masses (and corner coefficients) are ordered."""
    domain.validate()
    if mesh is None:
        # layer width from phi_e at the vertices and interior samples
        guess = np.vstack([domain.points, interior_samples(domain)])
        top = 0.0 if phi_e is None else float(np.max(np.asarray(phi_e(guess), dtype=float)))
        mesh = plasma_mesh(domain, (kappa * math.exp(top)) ** -0.5)
    nodal = _nodal_phi_e(mesh, phi_e)
    lo, hi = float(np.min(nodal)), float(np.max(nodal))
    runs = {
        "low": (kappa * math.exp(lo), None),
        "mid": (kappa, phi_e),
        "high": (kappa * math.exp(hi), None),
    }
    masses: dict[str, float | None] = {}
    lambdas: dict[str, float | None] = {}
    fields: dict[str, Field] = {}
    errors: dict[str, str] = {}
    for name, (k, pe) in runs.items():
        try:
            case = solve_plasma(domain, 1.0, pe, mesh=mesh, opts=opts, kappa=k)
        except SolverError as e:
            errors[name] = str(e)
            masses[name] = lambdas[name] = None
            continue
        masses[name] = case.mass
        lambdas[name] = None if case.lam is None else case.lam.lam
        fields[name] = case.field

    mass_ok = lam_ok = field_ok = None
    if all(masses.get(n) is not None for n in runs):
        mass_ok = _ordered(masses["low"], masses["mid"], masses["high"], rtol)
    if all(lambdas.get(n) is not None for n in runs):
        lam_ok = _ordered(lambdas["low"], lambdas["mid"], lambdas["high"], rtol)
    if len(fields) == 3:
        scale = max(1.0, float(np.max(np.abs(fields["high"].values))))
        field_ok = bool(np.all(fields["low"].values <= fields["mid"].values + 1e-9 * scale)
                        and np.all(fields["mid"].values <= fields["high"].values + 1e-9 * scale))
    report = SandwichReport(kappa, lo, hi, masses, lambdas, mass_ok, lam_ok, field_ok, errors)
    logger.info("sandwich kappa=%g: masses %s", kappa, masses)
    return report

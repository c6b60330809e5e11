"""
R-sweeps for the minimal solution of -Lap(u) = e^{-u} on a sector, its
property checks, and the family phi_mu = H_mu + v^mu built on the harmonic
singular functions.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..core.discretization import Field, constant_field, interpolate_field, triangle_gradients
from ..core.errors import DivergedError, InvalidSpecError, SolverError
from ..core.geometry import Mesh, SectorSpec, mesh_sector, mirror_map
from ..core.nonlinear_solve import SolveOptions, SolveReport, solve_semilinear
from ..core.oracles import disk_lower_bound
from ..core.singular_analysis import (
    SingularBasis,
    SingularityEstimate,
    eval_singular,
    extract_lambda_dual,
    extract_lambda_fit,
)
from ..core.utils import from_polar, to_polar
from .runner import BatchRunner

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-3
ARC_CLEARANCE = 2.0


@dataclass
class PropertyCheck:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"passed": self.passed, "value": self.value, "tolerance": self.tolerance, "detail": self.detail}


@dataclass
class PropertyReport:
    checks: dict[str, PropertyCheck] = field(default_factory=dict)
    measured: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.checks.items() if not c.passed]

    def add(self, name: str, violation: float, tolerance: float, detail: str = "") -> None:
        """Record a check whose ``violation`` must not exceed ``tolerance``."""
        v = float(violation) if np.isfinite(violation) else -math.inf
        self.checks[name] = PropertyCheck(name, v <= tolerance, v, tolerance, detail)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "checks": {k: c.to_dict() for k, c in self.checks.items()},
                "measured": dict(self.measured)}


@dataclass
class RadiusResult:
    R: float
    field: Field | None = None
    report: SolveReport | None = None
    lam: SingularityEstimate | None = None
    lam_fit: SingularityEstimate | None = None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None and self.field is not None

    def to_dict(self) -> dict:
        d = {"R": self.R, "ok": self.ok, "error": self.error}
        if self.field is not None:
            d["nodes"] = self.field.mesh.n_nodes
            d["triangles"] = self.field.mesh.n_triangles
        if self.report is not None:
            d["solve"] = self.report.to_dict()
        if self.lam is not None:
            d["lambda_dual"] = self.lam.to_dict()
        if self.lam_fit is not None:
            d["lambda_fit"] = self.lam_fit.to_dict()
        return d


@dataclass
class MinimalSolutionStudy:
    theta0: float
    h: float
    beta: float
    members: list[RadiusResult] = field(default_factory=list)
    properties: PropertyReport | None = None
    monotone_in_R: PropertyCheck | None = None
    lambda_monotone: PropertyCheck | None = None
    lam: float | None = None
    lam_bracket: tuple[float, float] | None = None
    samples: np.ndarray | None = None

    @property
    def alpha(self) -> float:
        return math.pi / (2.0 * self.theta0)

    @property
    def radii(self) -> list[float]:
        return [m.R for m in self.members]

    def successful(self) -> list[RadiusResult]:
        return [m for m in self.members if m.ok]

    def largest(self) -> RadiusResult | None:
        ok = self.successful()
        return ok[-1] if ok else None

    def member(self, R: float) -> RadiusResult:
        for m in self.members:
            if math.isclose(m.R, R):
                return m
        raise KeyError(R)

    @property
    def passed(self) -> bool:
        checks = [c for c in (self.monotone_in_R, self.lambda_monotone) if c is not None]
        ok = all(m.ok for m in self.members) and all(c.passed for c in checks)
        return ok and (self.properties is None or self.properties.passed)

    def to_dict(self) -> dict:
        return {
            "theta0": self.theta0,
            "alpha": self.alpha,
            "h": self.h,
            "beta": self.beta,
            "members": [m.to_dict() for m in self.members],
            "properties": None if self.properties is None else self.properties.to_dict(),
            "monotone_in_R": None if self.monotone_in_R is None else self.monotone_in_R.to_dict(),
            "lambda_monotone": None if self.lambda_monotone is None else self.lambda_monotone.to_dict(),
            "lambda": self.lam,
            "lambda_bracket": None if self.lam_bracket is None else list(self.lam_bracket),
            "passed": self.passed,
        }


# ------------------------------------------------------------
# Minimal solution
# ------------------------------------------------------------
def solve_truncated(theta0: float, R: float, h: float, beta: float | None = None,
                    opts: SolveOptions | None = None, mesh: Mesh | None = None) -> tuple[Field, SolveReport]:
    """u_R: -Lap(u) = e^{-u} on the sector of radius R, u = 0 on its boundary."""
    mesh = mesh or mesh_sector(SectorSpec(theta0, R, h, beta))
    return solve_semilinear(mesh, constant_field(mesh, 1.0), opts=opts)


def default_fit_window(R: float, h: float) -> tuple[float, float]:
    return (2.0 * h, min(10.0 * h, 0.25 * R))


def _sample_points(theta0: float, r_max: float) -> np.ndarray:
    radii = np.geomspace(0.25, max(0.5, r_max), 8)
    angles = np.array([0.0, 0.5 * theta0, -0.5 * theta0])
    rr, aa = np.meshgrid(radii, angles, indexing="ij")
    return from_polar(rr.ravel(), aa.ravel())


def sweep_R(theta0: float, radii: list[float], h: float, beta: float | None = None,
            opts: SolveOptions | None = None, jobs: int = 1,
            progress: Callable[[int, int], None] | None = None,
            check_properties: bool = True, fit: bool = True,
            error: Callable[[str], None] | None = None, fail_fast: bool = False) -> MinimalSolutionStudy:
    radii = [float(R) for R in radii]
    if not radii or any(b <= a for a, b in zip(radii[:-1], radii[1:])):
        raise InvalidSpecError(f"radius list must be strictly increasing, got {radii}")
    spec0 = SectorSpec(theta0, radii[0], h, beta)
    spec0.validate()
    study = MinimalSolutionStudy(theta0, h, spec0.grading())
    reentrant = spec0.alpha() < 1.0

    def task(R: float) -> RadiusResult:
        res = RadiusResult(R)
        u, report = solve_truncated(theta0, R, h, beta, opts)
        res.field, res.report = u, report
        if reentrant:
            res.lam = extract_lambda_dual(u, constant_field(u.mesh, 1.0))
            if fit:
                try:
                    res.lam_fit = extract_lambda_fit(u, default_fit_window(R, h))
                except SolverError as e:
                    logger.info("ray fit at R=%g failed: %s", R, e)
        return res

    def failed(msg: str) -> None:
        if error:
            error(msg)
        if fail_fast:
            runner.abort()

    runner = BatchRunner([(f"R={R:g}", (lambda R=R: task(R))) for R in radii], jobs=jobs,
                         progress=progress, error=failed)
    for R, outcome in zip(radii, runner.run()):
        if outcome.ok:
            study.members.append(outcome.value)
        else:
            study.members.append(RadiusResult(R, error=outcome.error))

    ok = study.successful()
    if len(ok) >= 2:
        pts = _sample_points(theta0, 0.5 * ok[0].R)
        vals = np.array([m.field.evaluate(pts) for m in ok])
        study.samples = vals
        drops = vals[:-1] - vals[1:]
        study.monotone_in_R = PropertyCheck("monotone_in_R", bool(np.nanmax(drops) <= MONOTONE_TOL),
                                            float(np.nanmax(drops)), MONOTONE_TOL,
                                            "max decrease of u_R at shared samples as R grows")
    lams = [m.lam.lam for m in ok if m.lam is not None]
    if len(lams) >= 2:
        drop = max(a - b for a, b in zip(lams[:-1], lams[1:]))
        study.lambda_monotone = PropertyCheck("lambda_monotone", drop <= 0.0, drop, 0.0,
                                              "max decrease of Lambda_R as R grows")
        last, prev = lams[-1], lams[-2]
        study.lam_bracket = (last, last + (last - prev))
        study.lam = 0.5 * (study.lam_bracket[0] + study.lam_bracket[1])
    elif len(lams) == 1:
        study.lam = lams[0]
        study.lam_bracket = (lams[0], lams[0])

    if check_properties and ok:
        study.properties = verify_minimal_properties(ok[-1].field)
    logger.info("R-sweep theta0=%.6f: %d/%d solves ok, Lambda=%s", theta0, len(ok), len(radii), study.lam)
    return study


def _sector_params(mesh: Mesh) -> tuple[float, float]:
    try:
        return float(mesh.meta["theta0"]), float(mesh.meta["radius"])
    except KeyError as e:
        raise InvalidSpecError("property checks need a sector mesh") from e


def verify_minimal_properties(u: Field, n_radii: int = 12) -> PropertyReport:
    """Check the qualitative properties of the minimal solution on a truncated sector.

    Every check is recorded with its worst violation; nothing raises.
    """
    mesh = u.mesh
    theta0, R = _sector_params(mesh)
    report = PropertyReport()
    x = u.values
    r, theta = to_polar(mesh.nodes)
    interior = r <= R - ARC_CLEARANCE if R > 2.0 * ARC_CLEARANCE else r <= 0.5 * R

    # (a) mirror symmetry
    try:
        mirror = mirror_map(mesh)
        asym = float(np.max(np.abs(x - x[mirror])))
    except InvalidSpecError:
        pts = mesh.nodes * np.array([1.0, -1.0])
        asym = float(np.nanmax(np.abs(x - u.evaluate(pts))))
    report.add("symmetry", asym, 1e-9, "max |u(r,t) - u(r,-t)|")

    # (b) angular maximum on the bisector
    m_div = int(mesh.meta.get("divisions", 64))
    step = 2.0 * theta0 / m_div
    angles = theta0 * (2.0 * np.arange(1, m_div) - m_div) / m_div
    radii = np.geomspace(min(0.05 * R, 0.5), R - min(ARC_CLEARANCE, 0.25 * R), n_radii)
    worst = 0.0
    concavity = 0.0
    for rad in radii:
        vals = u.evaluate(from_polar(np.full(len(angles), rad), angles))
        if not np.all(np.isfinite(vals)) or np.max(vals) <= 0.0:
            continue
        worst = max(worst, abs(float(angles[int(np.argmax(vals))])) - step)
        concavity = max(concavity, float(np.max(vals[2:] - 2.0 * vals[1:-1] + vals[:-2])))
    report.add("angular_max", worst, 1e-12, "|argmax_t u(r,.)| minus one angular step")
    report.measured["concavity_violation"] = concavity

    # (c) r d_r u <= 2
    grads = triangle_gradients(mesh, x)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    rc = np.hypot(cent[:, 0], cent[:, 1])
    sel = (rc <= R - ARC_CLEARANCE) if R > 2.0 * ARC_CLEARANCE else (rc <= 0.5 * R)
    rdr = np.sum(grads[sel] * cent[sel], axis=1)
    report.add("radial_derivative", float(np.max(rdr)) - 2.0 if len(rdr) else -math.inf, 0.05, "max r d_r u - 2")

    # (d) u(x) <= sup_{|y|<=1} u + 2 log|x| for |x| >= 1
    inner = r <= 1.0
    outer = r >= 1.0
    if np.any(inner) and np.any(outer):
        bound = float(np.max(x[inner])) + 2.0 * np.log(r[outer])
        report.add("log_upper_bound", float(np.max(x[outer] - bound)), 0.05, "max u - (sup_B1 u + 2 log|x|)")

    # (e) lower bound from the largest inscribed disk
    depth = np.minimum(theta0 - np.abs(theta), 0.5 * math.pi)
    rho = np.minimum(r * np.sin(np.clip(depth, 0.0, None)), R - r)
    sel = interior & (r > 0.0)
    lower = np.log1p(rho[sel] ** 2 / 8.0)
    report.add("lower_bound", float(np.max(lower - x[sel])) if np.any(sel) else -math.inf, 0.05,
               "max log(1 + rho^2/8) - u")
    if np.any(sel):
        sharp = np.array([disk_lower_bound(p) for p in rho[sel]])
        report.measured["sharp_lower_bound_violation"] = float(np.max(sharp - x[sel]))

    # (f) monotone along directions of the opening
    report.add("directional_monotonicity", _directional_violation(u, theta0, 0.25 * R), 1e-3,
               "max u(x) - u(x + t e)")

    # (g) nonnegativity
    report.add("nonnegative", float(-np.min(x)), 1e-9, "-min u")

    # (h) boundary trace
    bnodes = mesh.dirichlet_nodes()
    report.add("boundary_trace", float(np.max(np.abs(x[bnodes]))), 1e-9, "max |u| on the boundary")

    report.measured["log_growth_constant"] = float(np.max(x - 4.0 * np.log1p(r)))
    failed = report.failed()
    if failed:
        logger.info("minimal-solution checks failed: %s", ", ".join(failed))
    return report


def _directional_violation(u: Field, theta0: float, reach: float) -> float:
    starts_r = np.linspace(0.1, 0.6, 4) * reach
    starts_t = np.linspace(-0.8, 0.8, 5) * theta0
    dirs = np.linspace(-1.0, 1.0, 7) * theta0
    steps = np.array([0.1, 0.25, 0.4]) * reach
    pairs_a = []
    pairs_b = []
    s = np.linspace(0.0, 1.0, 9)
    for r0 in starts_r:
        for t0 in starts_t:
            p = from_polar(r0, t0)[0]
            for d in dirs:
                e = np.array([math.cos(d), math.sin(d)])
                for t in steps:
                    q = p + t * e
                    if math.hypot(*q) > reach:
                        continue
                    seg = p + (s * t)[:, None] * e
                    rs, ts = to_polar(seg)
                    if np.any(np.abs(ts[rs > 1e-12]) >= theta0):
                        continue
                    pairs_a.append(p)
                    pairs_b.append(q)
    if not pairs_a:
        return -math.inf
    va = u.evaluate(np.array(pairs_a))
    vb = u.evaluate(np.array(pairs_b))
    ok = np.isfinite(va) & np.isfinite(vb)
    return float(np.max(va[ok] - vb[ok])) if np.any(ok) else -math.inf


# ------------------------------------------------------------
# Family phi_mu
# ------------------------------------------------------------
@dataclass(frozen=True)
class FamilyParams:
    mu_minus: float = 0.0
    mu_plus: float = 0.0

    def validate(self, alpha: float) -> None:
        if self.mu_minus < 0.0 or self.mu_plus < 0.0:
            raise InvalidSpecError("mu_minus and mu_plus must be nonnegative")
        if alpha >= 1.0 and self.mu_minus > 0.0:
            raise InvalidSpecError(
                f"alpha={alpha:.6g} >= 1: r^-alpha terms are not admissible (mu_minus must be 0)")


@dataclass
class FamilyResult:
    params: FamilyParams
    basis: SingularBasis
    v: Field
    weight: Field
    report: SolveReport

    def harmonic(self, points) -> np.ndarray:
        """H_mu = mu_- S* + mu_+ S (infinite at the corner when mu_- > 0)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self.params.mu_plus * eval_singular(self.basis, "S", pts)
        if self.params.mu_minus > 0.0:
            r, _ = self.basis.polar(pts)
            safe = r > 0.0
            star = np.full(len(pts), math.inf)
            star[safe] = eval_singular(self.basis, "S*", pts[safe])
            out = out + self.params.mu_minus * star
        return out

    def phi(self, points) -> np.ndarray:
        return self.harmonic(points) + self.v.evaluate(points)

    def bound_violation(self, u_R: Field) -> tuple[float, float]:
        """(max(-v), max(v - u_R)), i.e. the violations of H <= phi_mu <= H + u_R."""
        return float(np.max(-self.v.values)), float(np.max(self.v.values - u_R.values))


def family_mu(theta0: float, params: FamilyParams, R: float, h: float, beta: float | None = None,
              opts: SolveOptions | None = None, mesh: Mesh | None = None) -> FamilyResult:
    """Solve -Lap(v) = e^{-H_mu} e^{-v} on the truncated sector, v = 0 on its boundary."""
    basis = SingularBasis.for_sector(theta0)
    params.validate(basis.alpha)
    mesh = mesh or mesh_sector(SectorSpec(theta0, R, h, beta))
    corner = mesh.corner_node

    def weight_fn(p: np.ndarray) -> np.ndarray:
        rr, _ = to_polar(p)
        w = np.ones(len(p))
        safe = rr > 0.0
        H = params.mu_plus * eval_singular(basis, "S", p)
        if params.mu_minus > 0.0:
            H[safe] += params.mu_minus * eval_singular(basis, "S*", p[safe])
        w[safe] = np.exp(-H[safe])
        if params.mu_minus > 0.0:
            w[~safe] = 0.0
        return w

    weight = interpolate_field(mesh, weight_fn)
    if corner is not None and params.mu_minus > 0.0 and weight.values[corner] != 0.0:
        vals = weight.values.copy()
        vals[corner] = 0.0
        weight = weight.with_values(vals)
    try:
        v, report = solve_semilinear(mesh, weight, opts=opts)
    except DivergedError:
        logger.warning("family solve diverged for mu=(%g, %g)", params.mu_minus, params.mu_plus)
        raise
    return FamilyResult(params, basis, v, weight, report)

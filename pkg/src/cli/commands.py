import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import oracles
from ..core.conformal import build_phistar, disk_mesh
from ..core.errors import ConfigError, SolverError
from ..core.geometry import SectorSpec, mesh_polygon, mesh_sector, validate_mesh
from ..core.utils import sanitize
from ..studies.plasma_study import blowup_compare, sandwich_check, solve_plasma, solve_plasma_for_mass, sweep_eps
from ..studies.sector_study import FamilyParams, family_mu, solve_truncated, sweep_R
from .config import COMMANDS, MESH_KINDS, ORACLES, RunConfig, resolve_config
from .export import export_field, write_boundary_vtk, write_json, write_table, write_vtk

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECKS_FAILED = 1
EXIT_ERROR = 2
FAMILY_TOL = 1e-9
PHISTAR_BOUND_TOL = 1e-8
MASS_LIMIT_TOL = 0.10


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig fields; explicit options win")
    common.add_argument("--out", help="output directory (default: out)")
    common.add_argument("--h", type=float, help="mesh size")
    common.add_argument("--beta", type=float, help="grading exponent toward the corner")
    angle = common.add_mutually_exclusive_group()
    angle.add_argument("--theta0-deg", dest="theta0_deg", type=float, help="sector half-opening in degrees")
    angle.add_argument("--theta0", type=float, help="sector half-opening in radians")
    common.add_argument("--radii", help="comma-separated truncation radii, increasing")
    common.add_argument("--R", dest="R", type=float, help="single radius")
    common.add_argument("--eps", help="eps value, or comma-separated decreasing list")
    common.add_argument("--kappa", type=float)
    common.add_argument("--mass", type=float, help="prescribed mass (plasma: solve for kappa)")
    common.add_argument("--domain", help="polygon JSON file, or 'square' / 'lshape'")
    common.add_argument("--phi-e", dest="phi_e", choices=["zero", "x1"], help="external potential")
    common.add_argument("--k", dest="k_schedule", help="comma-separated truncation levels")
    common.add_argument("--stop-tol", dest="stop_tol", type=float)
    common.add_argument("--mu-minus", dest="mu_minus", type=float)
    common.add_argument("--mu-plus", dest="mu_plus", type=float)
    common.add_argument("--eta", type=float, help="ball radius / annulus outer radius")
    common.add_argument("--inner", type=float, help="annulus inner radius")
    common.add_argument("--samples", dest="n_samples", type=int)
    common.add_argument("--window", type=float, help="sampling extent")
    common.add_argument("--compare", action="store_true", default=None,
                        help="plasma-sweep: also run the sector study and the blow-up comparison")
    common.add_argument("--kind", dest="mesh_kind", choices=list(MESH_KINDS))
    common.add_argument("--tol", dest="residual_tol", type=float, help="relative Newton residual tolerance")
    common.add_argument("--max-newton", dest="max_newton", type=int)
    common.add_argument("--linear-solver", dest="linear_solver", choices=["direct", "cg"])
    common.add_argument("--jobs", type=int, help="concurrent solves")
    common.add_argument("--fail-fast", dest="fail_fast", action="store_true", default=None,
                        help="skip the remaining solves of a sweep after the first failure")
    common.add_argument("--vtk", action="store_true", default=None, help="also write VTK files")
    common.add_argument("-v", "--verbose", action="count", default=0)
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="corner-sector", description="Solver for -Lap(phi) = e^{-phi} on sectors")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "minimal": "R-sweep of truncated sector solutions",
        "phistar": "conformal supersolution on the split plane",
        "family": "solutions with prescribed singular harmonic part",
        "plasma": "plasma equilibrium on a polygon",
        "plasma-sweep": "eps sweep with mass and corner-coefficient scaling",
        "sandwich": "external-potential comparison",
        "oracle": "closed-form and ODE reference profiles",
        "mesh": "write a mesh only",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "oracle":
            p.add_argument("oracle", choices=list(ORACLES))
    return parser


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)


def _progress(cur: int, total: int) -> None:
    logger.info("progress %d/%d", cur, total)


def _report(c: RunConfig, body: dict, passed: bool, name: str = "study.json") -> bool:
    write_json(Path(c.out) / name, {"command": c.command, "config": c.to_dict(), "passed": passed, **body})
    return passed


# ------------------------------------------------------------
# Commands
# ------------------------------------------------------------
def cmd_minimal(c: RunConfig) -> bool:
    out = Path(c.out)
    errors: list[str] = []
    study = sweep_R(c.theta0, c.radii, c.h, c.beta, c.solve_options(), jobs=c.jobs, progress=_progress,
                    error=errors.append, fail_fast=c.fail_fast)
    rows = []
    for m in study.members:
        if m.ok:
            write_vtk(m.field.mesh, out / f"uR_{sanitize(f'{m.R:g}')}.vtk", {"u": m.field.values}, title=f"u_R R={m.R:g}")
        lam = m.lam
        rows.append([m.R, None if lam is None else lam.lam, None if lam is None else lam.bracket[0],
                     None if lam is None else lam.bracket[1], None if m.lam_fit is None else m.lam_fit.lam,
                     m.ok])
    write_table(out / "lambda.csv", ["R", "lambda_dual", "low", "high", "lambda_fit", "ok"], rows)
    return _report(c, {"study": study.to_dict(), "errors": errors}, study.passed and not errors)


def _halfplane_samples(n: int, window: float) -> np.ndarray:
    xs = np.linspace(-window, window, n)
    ys = np.array([0.0, 0.25, 1.0]) * window
    gx, gy = np.meshgrid(xs, ys)
    return np.column_stack([gx.ravel(), gy.ravel()])


def cmd_phistar(c: RunConfig) -> bool:
    out = Path(c.out)
    pts = _halfplane_samples(c.n_samples, c.window)
    res = build_phistar(pts, c.k_schedule, c.h, c.stop_tol, c.solve_options())
    bound = res.evaluator.upper_bound(pts)
    excess = float(np.nanmax(res.values - bound))
    write_table(out / "phistar.csv", ["x", "y", "phi_star", "k", "delta_k"],
                ([x, y, v, res.k, d] for (x, y), v, d in zip(pts, res.values, res.delta)))
    if c.vtk:
        for k, level in res.evaluator.levels.items():
            export_field(level, "vtk", out / f"w2_k{sanitize(f'{k:g}')}.vtk", name="w2")
        write_boundary_vtk(res.evaluator.mesh, out / "disk_boundary.vtk")
    body = {"k": res.k, "converged": res.converged, "max_delta": res.max_delta, "m": res.evaluator.m,
            "upper_bound_excess": excess, "levels": sorted(res.history)}
    return _report(c, body, res.converged and excess <= PHISTAR_BOUND_TOL)


def cmd_family(c: RunConfig) -> bool:
    out = Path(c.out)
    mesh = mesh_sector(SectorSpec(c.theta0, c.R, c.h, c.beta))
    opts = c.solve_options()
    u_R, _ = solve_truncated(c.theta0, c.R, c.h, c.beta, opts, mesh=mesh)
    fam = family_mu(c.theta0, FamilyParams(c.mu_minus, c.mu_plus), c.R, c.h, c.beta, opts, mesh=mesh)
    lower, upper = fam.bound_violation(u_R)
    body = {"mu_minus": c.mu_minus, "mu_plus": c.mu_plus, "alpha": fam.basis.alpha,
            "lower_bound_violation": lower, "upper_bound_violation": upper, "solve": fam.report.to_dict()}
    if c.mu_minus > 0.0:
        r = 1e-3
        body["normalized_corner_value"] = math.pi * r ** fam.basis.alpha * float(fam.phi(np.array([[r, 0.0]]))[0])
    export_field(fam.v, "csv", out / "v_mu.csv")
    if c.vtk:
        export_field(fam.v, "vtk", out / "v_mu.vtk", name="v")
    return _report(c, body, lower <= FAMILY_TOL and upper <= FAMILY_TOL)


def cmd_plasma(c: RunConfig) -> bool:
    out = Path(c.out)
    domain = c.polygon()
    phi_e = c.external_potential()
    if c.mass is not None:
        case = solve_plasma_for_mass(domain, c.mass, phi_e, c.solve_options())
    else:
        case = solve_plasma(domain, c.eps[0], phi_e, opts=c.solve_options())
    export_field(case.field, "csv", out / "phi.csv")
    if c.vtk:
        export_field(case.field, "vtk", out / "phi.vtk", name="phi")
    return _report(c, {"case": case.to_dict()}, case.ok)


def cmd_plasma_sweep(c: RunConfig) -> bool:
    out = Path(c.out)
    domain = c.polygon()
    errors: list[str] = []
    report = sweep_eps(domain, c.eps, c.external_potential(), c.solve_options(), jobs=c.jobs, progress=_progress,
                       error=errors.append, fail_fast=c.fail_fast)
    body: dict = {"errors": errors}
    passed = not errors
    if report.mass_limit_error is not None:
        passed = passed and report.mass_limit_error <= MASS_LIMIT_TOL
    if c.compare and domain.reentrant_index is not None:
        theta0 = domain.corner_frame()[1]
        study = sweep_R(theta0, c.radii, c.h, None, c.solve_options(), jobs=c.jobs,
                        check_properties=False, fit=False, error=errors.append, fail_fast=c.fail_fast)
        passed = passed and not errors
        report.sector_lambda = study.lam
        last = next((case for case in reversed(report.cases) if case.ok), None)
        if last is not None:
            cmp = blowup_compare(last, study, c.window)
            body["blowup"] = cmp.to_dict()
            passed = passed and cmp.passed
        body["sector_study"] = study.to_dict()
    rows = []
    for r in report.rows:
        rows.append([r.epsilon, r.mass, r.eps_mass, r.lam, r.eps_alpha_lam, r.c1, r.c2,
                     report.mass_slope, report.lambda_slope, r.under_resolved])
    write_table(out / "scaling.csv", ["eps", "mass", "eps_mass", "lambda", "eps_alpha_lambda", "C1", "C2",
                                      "mass_slope", "lambda_slope", "under_resolved"], rows)
    if c.vtk:
        for case in report.cases:
            if case.ok:
                export_field(case.field, "vtk", out / f"phi_eps{sanitize(f'{case.epsilon:g}')}.vtk", name="phi")
    body["scaling"] = report.to_dict()
    return _report(c, body, passed)


def cmd_sandwich(c: RunConfig) -> bool:
    report = sandwich_check(c.polygon(), c.kappa, c.external_potential(), c.solve_options())
    return _report(c, {"sandwich": report.to_dict()}, report.passed)


def cmd_oracle(c: RunConfig) -> bool:
    out = Path(c.out)
    if c.oracle in ("radial-ball", "radial-annulus"):
        radii = c.eta if c.oracle == "radial-ball" else (c.inner, c.eta)
        profile = oracles.radial_bvp(c.oracle.split("-")[1], radii, c.eps[0])
        check = oracles.radial_identity_check(profile)
        write_table(out / "profile.csv", ["r", "v", "dv"], profile.rows())
        body = {"kind": profile.kind.value, "radii": list(profile.radii), "epsilon": profile.epsilon,
                "boundary_derivative": list(profile.boundary_derivative),
                "shooting_parameter": profile.shooting_parameter, "identity": check.to_dict()}
        return _report(c, body, check.passed)
    if c.oracle == "disk":
        x = np.linspace(0.0, c.R, c.n_samples)
        v = oracles.disk_closed_form(c.R, x)
        dv = oracles.disk_closed_form_derivative(c.R, x)
        write_table(out / "disk.csv", ["x_rel", "u", "du"], zip(x, v, dv))
        return _report(c, {"R": c.R, "center_value": float(v[0])}, True)
    x = np.linspace(0.0, c.window, c.n_samples)
    write_table(out / "halfplane.csv", ["x1", "u"], zip(x, oracles.halfplane_profile(x)))
    return _report(c, {"window": c.window}, True)


def cmd_mesh(c: RunConfig) -> bool:
    out = Path(c.out)
    if c.mesh_kind == "polygon":
        mesh = mesh_polygon(c.polygon())
    elif c.mesh_kind == "disk":
        mesh = disk_mesh(c.h, max(c.k_schedule))
    else:
        mesh = mesh_sector(SectorSpec(c.theta0, c.R, c.h, c.beta))
    issues = validate_mesh(mesh)
    write_vtk(mesh, out / "mesh.vtk", title=f"{c.mesh_kind} mesh")
    write_boundary_vtk(mesh, out / "mesh_boundary.vtk")
    body = {"nodes": mesh.n_nodes, "triangles": mesh.n_triangles, "boundary_edges": len(mesh.boundary_edges),
            "corner_node": mesh.corner_node, "issues": issues}
    return _report(c, body, not issues)


HANDLERS: dict[str, Callable[[RunConfig], bool]] = {
    "minimal": cmd_minimal,
    "phistar": cmd_phistar,
    "family": cmd_family,
    "plasma": cmd_plasma,
    "plasma-sweep": cmd_plasma_sweep,
    "sandwich": cmd_sandwich,
    "oracle": cmd_oracle,
    "mesh": cmd_mesh,
}


def run_command(argv: list[str] | None = None) -> int:
    """Parse ``argv``, run one command, write its artifacts; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_ERROR
    _setup_logging(args.verbose)
    try:
        config = resolve_config(args)
        passed = HANDLERS[config.command](config)
    except (ConfigError, SolverError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    if not passed:
        logger.warning("%s: checks failed, see %s", config.command, Path(config.out) / "study.json")
        return EXIT_CHECKS_FAILED
    return EXIT_OK

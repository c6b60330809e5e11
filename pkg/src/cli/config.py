import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from ..core.errors import ConfigError, SolverError
from ..core.geometry import PolygonSpec, l_shape, read_polygon_spec, unit_square
from ..core.nonlinear_solve import SolveOptions
from ..core.utils import file_hash

logger = logging.getLogger(__name__)

COMMANDS = ("minimal", "phistar", "family", "plasma", "plasma-sweep", "sandwich", "oracle", "mesh")
ORACLES = ("radial-ball", "radial-annulus", "disk", "halfplane")
BUILTIN_DOMAINS = {"square": unit_square, "lshape": l_shape}
EXTERNAL_POTENTIALS = ("zero", "x1")
MESH_KINDS = ("sector", "polygon", "disk")
# defaults that differ from the RunConfig field defaults
COMMAND_DEFAULTS = {
    "plasma": {"eps": [0.1]},
    "oracle": {"eps": [1.0], "R": 1.0},
    "phistar": {"h": 0.02},
}


@dataclass
class RunConfig:
    """Resolved parameters of one CLI invocation; embedded in every report."""
    command: str
    oracle: str | None = None
    theta0: float = 3.0 * math.pi / 4.0
    radii: list[float] = field(default_factory=lambda: [5.0, 10.0, 20.0])
    R: float = 20.0
    h: float = 0.05
    beta: float | None = None
    eps: list[float] = field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    kappa: float = 100.0
    domain: str = "lshape"
    domain_hash: str | None = None
    phi_e: str = "zero"
    k_schedule: list[float] = field(default_factory=lambda: [0.0, 2.0, 4.0, 6.0])
    stop_tol: float = 1e-3
    mu_minus: float = 0.0
    mu_plus: float = 0.0
    eta: float = 1.0
    inner: float = 0.5
    n_samples: int = 21
    window: float = 4.0
    compare: bool = False
    mass: float | None = None
    mesh_kind: str = "sector"
    residual_tol: float = 1e-10
    max_newton: int = 50
    linear_solver: str = "direct"
    jobs: int = 1
    fail_fast: bool = False
    vtk: bool = False
    out: str = "out"

    def to_dict(self) -> dict:
        return asdict(self)

    def solve_options(self) -> SolveOptions:
        try:
            return SolveOptions(residual_tol=self.residual_tol, max_newton=self.max_newton,
                                linear_solver=self.linear_solver)
        except SolverError as e:
            raise ConfigError(str(e)) from e

    def polygon(self) -> PolygonSpec:
        """Domain spec; builtin names take h (and beta) from the config."""
        if self.domain in BUILTIN_DOMAINS:
            if self.domain == "lshape":
                return l_shape(self.h, self.beta or 3.0)
            return unit_square(self.h)
        try:
            return read_polygon_spec(Path(self.domain))
        except (OSError, KeyError, TypeError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read domain {self.domain}: {e}") from e

    def external_potential(self):
        if self.phi_e == "zero":
            return None
        return lambda p: np.asarray(p, dtype=float)[:, 0]


def _split_floats(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated number list, got {text!r}") from e


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve_config(args: Any) -> RunConfig:
    """Merge defaults, the optional JSON config file and explicit CLI values (highest priority)."""
    file_values = load_config_file(getattr(args, "config", None))
    cli = {k: v for k, v in vars(args).items() if v is not None}
    if "theta0_deg" in cli:
        cli["theta0"] = math.radians(cli.pop("theta0_deg"))
    if "theta0_deg" in file_values:
        file_values["theta0"] = math.radians(file_values.pop("theta0_deg"))
    merged: dict[str, Any] = dict(COMMAND_DEFAULTS.get(cli.get("command"), {}))
    for f in fields(RunConfig):
        if f.name in cli:
            merged[f.name] = cli[f.name]
        elif f.name in file_values:
            merged[f.name] = file_values[f.name]
    for key in ("radii", "eps", "k_schedule"):
        if key in merged:
            merged[key] = _split_floats(merged[key])
    try:
        config = RunConfig(**merged)
    except TypeError as e:
        raise ConfigError(str(e)) from e
    validate_config(config)
    return config


def _positive(name: str, value) -> None:
    if value is None or not float(value) > 0.0 or not math.isfinite(float(value)):
        raise ConfigError(f"{name} must be a positive number, got {value!r}")


def validate_config(config: RunConfig) -> None:
    """Check the parameters of the target command before any solve."""
    c = config
    if c.command not in COMMANDS:
        raise ConfigError(f"unknown command {c.command!r}")
    _positive("h", c.h)
    if c.beta is not None and c.beta < 1.0:
        raise ConfigError(f"beta must be >= 1, got {c.beta}")
    if c.jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {c.jobs}")
    if c.phi_e not in EXTERNAL_POTENTIALS:
        raise ConfigError(f"phi_e must be one of {', '.join(EXTERNAL_POTENTIALS)}")
    c.solve_options()

    if c.command in ("minimal", "family") or (c.command == "mesh" and c.mesh_kind == "sector"):
        if not 0.0 < c.theta0 <= math.pi:
            raise ConfigError(f"theta0 must lie in (0, pi], got {c.theta0}")
    if c.command == "minimal":
        if not c.radii or any(r <= 0.0 for r in c.radii):
            raise ConfigError("radii must be positive")
        if any(b <= a for a, b in zip(c.radii[:-1], c.radii[1:])):
            raise ConfigError(f"radii must be strictly increasing, got {c.radii}")
        if c.h >= c.radii[0]:
            raise ConfigError(f"h={c.h} must be smaller than the smallest radius {c.radii[0]}")
    if c.command == "family":
        _positive("R", c.R)
        if c.mu_minus < 0.0 or c.mu_plus < 0.0:
            raise ConfigError("mu_minus and mu_plus must be nonnegative")
    if c.command == "phistar":
        if not c.k_schedule or any(k < 0.0 for k in c.k_schedule):
            raise ConfigError("k schedule must hold nonnegative levels")
        _positive("stop_tol", c.stop_tol)
    if c.command in ("plasma", "plasma-sweep", "sandwich") or (c.command == "mesh" and c.mesh_kind == "polygon"):
        if c.domain not in BUILTIN_DOMAINS:
            if not os.path.isfile(c.domain):
                raise ConfigError(f"domain file not found: {c.domain}")
            c.domain_hash = file_hash(Path(c.domain))
        try:
            c.polygon().validate()
        except SolverError as e:
            raise ConfigError(f"invalid domain: {e}") from e
    if c.command == "plasma":
        if len(c.eps) != 1:
            raise ConfigError("plasma takes a single eps value")
        _positive("eps", c.eps[0])
        if c.mass is not None:
            _positive("mass", c.mass)
    if c.command == "plasma-sweep":
        if len(c.eps) < 3 or any(e <= 0.0 for e in c.eps):
            raise ConfigError("plasma-sweep needs at least 3 positive eps values")
        if any(b >= a for a, b in zip(c.eps[:-1], c.eps[1:])):
            raise ConfigError(f"eps list must be strictly decreasing, got {c.eps}")
    if c.command == "mesh" and c.mesh_kind not in MESH_KINDS:
        raise ConfigError(f"mesh kind must be one of {', '.join(MESH_KINDS)}")
    if c.command == "mesh" and c.mesh_kind == "sector":
        _positive("R", c.R)
        if c.h >= c.R:
            raise ConfigError(f"h={c.h} must be smaller than R={c.R}")
    if c.command == "sandwich":
        _positive("kappa", c.kappa)
    if c.command == "oracle":
        if c.oracle not in ORACLES:
            raise ConfigError(f"oracle must be one of {', '.join(ORACLES)}")
        if c.oracle.startswith("radial"):
            _positive("eta", c.eta)
            if len(c.eps) != 1:
                raise ConfigError("radial oracles take a single eps value")
            _positive("eps", c.eps[0])
        if c.oracle == "radial-annulus" and not 0.0 < c.inner < c.eta:
            raise ConfigError(f"annulus needs 0 < inner < eta, got inner={c.inner}, eta={c.eta}")
        if c.oracle == "disk":
            _positive("R", c.R)
        if c.n_samples < 2:
            raise ConfigError("n_samples must be >= 2")

    out = Path(c.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {out}: {e}") from e
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")

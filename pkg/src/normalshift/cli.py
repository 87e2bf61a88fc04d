"""Batch command-line front end.

Three subcommands drive the library from declarative JSON scenarios:
``verify`` samples the normality residuals of a configured force field,
``shift`` integrates a hypersurface shift and writes the trajectory
family as CSV, and ``report`` renders a previously written summary
bundle as a table.  Scalar fields in scenarios (conformal factors, speed
profiles, generating scalars) are arithmetic expressions over x1..xn and
v; see :mod:`normalshift.expressions`.

Exit codes: 0 pass, 1 criterion failure, 2 configuration error,
3 numerical error, 4 trajectory escaped the chart box.  Identical
configuration and seed produce byte-identical CSV output.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, GridTooCoarse, NormalShiftError, TrajectoryEscaped
from .expressions import Expression, parse_expression
from .extended_fields import IsotropicScalar
from .force_builder import (
    ForceField,
    GeneratingScalar,
    as_force_field,
    builtin_geodesic,
    builtin_metrizable,
    builtin_nonmetrizable,
    perturbed_field,
)
from .normality_verifier import MODES, NormalityReport, SampleSpec, verify
from .shift_engine import (
    GridSpec,
    Hypersurface,
    ShiftRecord,
    graph_surface,
    max_normalized_deviation,
    plane_surface,
    run_shift,
    speed_law_residual,
    sphere_surface,
    surface_constancy_residual,
    w_dynamics_residual,
)
from .tensor_core import MetricField, speed_at
from . import __version__ as TOOL_VERSION

DEFAULT_SHIFT_TOLERANCE = 1e-6


@dataclass(frozen=True)
class Scenario:
    """Validated scenario: a name plus the five configuration sections."""

    name: str
    metric: dict
    generator: dict
    surface: Optional[dict]
    run: Optional[dict]
    verify: Optional[dict]
    seed: int
    dim: int


def _check_keys(section: dict, where: str, required: Sequence[str], optional: Sequence[str]):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(section) - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")
    missing = sorted(set(required) - set(section))
    if missing:
        raise ConfigError(f"missing key(s) {missing} in {where}")


def _as_number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number")
    return float(value)


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer")
    return value


def _expression(section: dict, key: str, where: str, allowed: frozenset) -> Expression:
    expr = parse_expression(section.get(key)) if isinstance(section.get(key), str) else None
    if expr is None:
        raise ConfigError(f"{where}.{key} must be an expression string")
    stray = sorted(expr.variables - allowed)
    if stray:
        raise ConfigError(
            f"{where}.{key} uses variable(s) {stray} outside the allowed set {sorted(allowed)}"
        )
    return expr


def _position_env(x: np.ndarray) -> Dict[str, float]:
    return {f"x{i + 1}": float(x[i]) for i in range(len(x))}


def _position_variables(dim: int) -> frozenset:
    return frozenset(f"x{i + 1}" for i in range(dim))


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Parse and validate a scenario file; unknown keys are errors."""
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("scenario must be a JSON object")
    _check_keys(
        data,
        "scenario",
        required=("name", "metric", "generator"),
        optional=("surface", "run", "verify", "seed"),
    )
    name = data["name"]
    if not isinstance(name, str) or not name:
        raise ConfigError("scenario.name must be a nonempty string")

    metric = data["metric"]
    _check_keys(metric, "metric", required=("kind",), optional=("dim", "f", "entries"))
    kind = metric.get("kind")
    if kind == "euclidean":
        _check_keys(metric, "metric", required=("kind",), optional=("dim",))
        dim = _as_int(metric.get("dim", 3), "metric.dim")
    elif kind == "conformal":
        _check_keys(metric, "metric", required=("kind", "f"), optional=("dim",))
        dim = _as_int(metric.get("dim", 3), "metric.dim")
        _expression(metric, "f", "metric", _position_variables(dim))
    elif kind == "diagonal":
        _check_keys(metric, "metric", required=("kind", "entries"), optional=())
        entries = metric.get("entries")
        if not isinstance(entries, list) or len(entries) < 3:
            raise ConfigError("metric.entries must list at least three expressions")
        dim = len(entries)
        for idx in range(dim):
            _expression({"e": entries[idx]}, "e", f"metric.entries[{idx}]", _position_variables(dim))
    else:
        raise ConfigError(f"unknown metric kind {kind!r}")
    if dim < 3:
        raise ConfigError("metric dimension must be at least 3")

    xvars = _position_variables(dim)
    generator = data["generator"]
    _check_keys(
        generator,
        "generator",
        required=("kind",),
        optional=("f", "H", "A", "W", "h", "speed_range", "perturb"),
    )
    gkind = generator.get("kind")
    if gkind == "geodesic":
        _check_keys(generator, "generator", required=("kind",), optional=("perturb",))
    elif gkind == "metrizable":
        _check_keys(generator, "generator", required=("kind", "f", "H"), optional=("perturb",))
        _expression(generator, "f", "generator", xvars)
        _expression(generator, "H", "generator", frozenset({"v"}))
    elif gkind == "nonmetrizable":
        _check_keys(
            generator,
            "generator",
            required=("kind", "f", "A"),
            optional=("speed_range", "perturb"),
        )
        _expression(generator, "f", "generator", xvars)
        _expression(generator, "A", "generator", frozenset({"v"}))
        if "speed_range" in generator:
            rng = generator["speed_range"]
            if not (isinstance(rng, list) and len(rng) == 2):
                raise ConfigError("generator.speed_range must be [lo, hi]")
            _as_number(rng[0], "generator.speed_range[0]")
            _as_number(rng[1], "generator.speed_range[1]")
    elif gkind == "custom":
        _check_keys(generator, "generator", required=("kind", "W", "h"), optional=("perturb",))
        _expression(generator, "W", "generator", xvars | {"v"})
        _expression(generator, "h", "generator", frozenset({"v"}))
    else:
        raise ConfigError(f"unknown generator kind {gkind!r}")
    if "perturb" in generator:
        perturb = generator["perturb"]
        _check_keys(perturb, "generator.perturb", required=("component", "expression"), optional=())
        component = _as_int(perturb["component"], "generator.perturb.component")
        if not 0 <= component < dim:
            raise ConfigError("generator.perturb.component out of range")
        _expression(perturb, "expression", "generator.perturb", xvars | {"v"})

    surface = data.get("surface")
    if surface is not None:
        if dim != 3:
            raise ConfigError("surfaces require a three-dimensional metric")
        _check_keys(
            surface,
            "surface",
            required=("kind",),
            optional=("axis", "offset", "radius", "center", "height", "base_u", "nu0", "orientation"),
        )
        skind = surface.get("kind")
        common = ("base_u", "nu0", "orientation")
        if skind == "plane":
            _check_keys(surface, "surface", required=("kind",), optional=("axis", "offset") + common)
            axis = _as_int(surface.get("axis", 2), "surface.axis")
            if not 0 <= axis < 3:
                raise ConfigError("surface.axis must be 0, 1, or 2")
            _as_number(surface.get("offset", 0.0), "surface.offset")
        elif skind == "sphere":
            _check_keys(surface, "surface", required=("kind",), optional=("radius", "center") + common)
            radius = _as_number(surface.get("radius", 1.0), "surface.radius")
            if radius <= 0.0:
                raise ConfigError("surface.radius must be positive")
            center = surface.get("center", [0.0, 0.0, 0.0])
            if not (isinstance(center, list) and len(center) == 3):
                raise ConfigError("surface.center must have three components")
            for c in center:
                _as_number(c, "surface.center entry")
        elif skind == "graph":
            _check_keys(surface, "surface", required=("kind", "height"), optional=common)
            _expression(surface, "height", "surface", frozenset({"x1", "x2"}))
        else:
            raise ConfigError(f"unknown surface kind {skind!r}")
        base_u = surface.get("base_u", [0.0, 0.0])
        if not (isinstance(base_u, list) and len(base_u) == 2):
            raise ConfigError("surface.base_u must have two components")
        for c in base_u:
            _as_number(c, "surface.base_u entry")
        nu0 = _as_number(surface.get("nu0", 1.0), "surface.nu0")
        if nu0 == 0.0:
            raise ConfigError("surface.nu0 must be nonzero")
        orientation = surface.get("orientation", 1.0)
        if orientation not in (1, -1, 1.0, -1.0):
            raise ConfigError("surface.orientation must be +1 or -1")

    run = data.get("run")
    if run is not None:
        _check_keys(
            run,
            "run",
            required=("t_end", "dt", "u_grid"),
            optional=("sample_stride", "box", "tolerance"),
        )
        t_end = _as_number(run["t_end"], "run.t_end")
        dt = _as_number(run["dt"], "run.dt")
        if t_end <= 0.0 or dt <= 0.0:
            raise ConfigError("run.t_end and run.dt must be positive")
        u_grid = run["u_grid"]
        if not (isinstance(u_grid, list) and len(u_grid) == 2):
            raise ConfigError("run.u_grid must list two [lo, hi, count] ranges")
        for rng in u_grid:
            if not (isinstance(rng, list) and len(rng) == 3):
                raise ConfigError("run.u_grid entries must be [lo, hi, count]")
            _as_number(rng[0], "run.u_grid lo")
            _as_number(rng[1], "run.u_grid hi")
            _as_int(rng[2], "run.u_grid count")
        if "sample_stride" in run and _as_int(run["sample_stride"], "run.sample_stride") < 1:
            raise ConfigError("run.sample_stride must be positive")
        if "box" in run:
            _validate_box(run["box"], dim, "run.box")
        if "tolerance" in run and _as_number(run["tolerance"], "run.tolerance") <= 0.0:
            raise ConfigError("run.tolerance must be positive")

    verify_sec = data.get("verify")
    if verify_sec is not None:
        _check_keys(
            verify_sec,
            "verify",
            required=("box",),
            optional=("sample_count", "speed_range", "tolerance", "mode"),
        )
        _validate_box(verify_sec["box"], dim, "verify.box")
        if "sample_count" in verify_sec and _as_int(verify_sec["sample_count"], "verify.sample_count") < 1:
            raise ConfigError("verify.sample_count must be positive")
        if "speed_range" in verify_sec:
            rng = verify_sec["speed_range"]
            if not (isinstance(rng, list) and len(rng) == 2):
                raise ConfigError("verify.speed_range must be [lo, hi]")
            lo = _as_number(rng[0], "verify.speed_range lo")
            hi = _as_number(rng[1], "verify.speed_range hi")
            if not 0.0 < lo <= hi:
                raise ConfigError("verify.speed_range must satisfy 0 < lo <= hi")
        if "tolerance" in verify_sec and _as_number(verify_sec["tolerance"], "verify.tolerance") <= 0.0:
            raise ConfigError("verify.tolerance must be positive")
        if "mode" in verify_sec and verify_sec["mode"] not in MODES:
            raise ConfigError(f"verify.mode must be one of {MODES}")

    seed = _as_int(data.get("seed", 0), "scenario.seed")
    return Scenario(
        name=name,
        metric=metric,
        generator=generator,
        surface=surface,
        run=run,
        verify=verify_sec,
        seed=seed,
        dim=dim,
    )


def _validate_box(box, dim: int, where: str):
    if not (isinstance(box, list) and len(box) == dim):
        raise ConfigError(f"{where} must list one [lo, hi] pair per coordinate")
    for pair in box:
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ConfigError(f"{where} entries must be [lo, hi]")
        lo = _as_number(pair[0], f"{where} lo")
        hi = _as_number(pair[1], f"{where} hi")
        if lo >= hi:
            raise ConfigError(f"{where} must have lo < hi")


def build_metric(sc: Scenario) -> MetricField:
    kind = sc.metric["kind"]
    dim = sc.dim
    if kind == "euclidean":
        eye = np.eye(dim)
        zero = np.zeros((dim, dim, dim))
        return MetricField(dim=dim, g=lambda x: eye.copy(), dg=lambda x: zero.copy())
    if kind == "conformal":
        f_expr = parse_expression(sc.metric["f"])
        f_grad = [f_expr.derivative(f"x{k + 1}") for k in range(dim)]

        def g(x):
            return math.exp(-2.0 * f_expr.eval(_position_env(x))) * np.eye(dim)

        def dg(x):
            env = _position_env(x)
            factor = -2.0 * math.exp(-2.0 * f_expr.eval(env))
            cube = np.zeros((dim, dim, dim))
            for m, part in enumerate(f_grad):
                cube[m] = factor * part.eval(env) * np.eye(dim)
            return cube

        return MetricField(dim=dim, g=g, dg=dg)
    entries = [parse_expression(text) for text in sc.metric["entries"]]
    entry_grads = [
        [e.derivative(f"x{k + 1}") for k in range(dim)] for e in entries
    ]

    def g_diag(x):
        env = _position_env(x)
        return np.diag([e.eval(env) for e in entries])

    def dg_diag(x):
        env = _position_env(x)
        cube = np.zeros((dim, dim, dim))
        for i, grads in enumerate(entry_grads):
            for m, part in enumerate(grads):
                cube[m, i, i] = part.eval(env)
        return cube

    return MetricField(dim=dim, g=g_diag, dg=dg_diag)


def _isotropic_from_position_expression(expr: Expression, dim: int) -> IsotropicScalar:
    grad = [expr.derivative(f"x{k + 1}") for k in range(dim)]

    def ev(x, s):
        return expr.eval(_position_env(x))

    def dx(x, s):
        env = _position_env(x)
        return np.array([part.eval(env) for part in grad])

    return IsotropicScalar(eval=ev, dx=dx, dspeed=lambda x, s: 0.0)


def _single_variable_fn(expr: Expression):
    return lambda w: expr.eval({"v": float(w)})


def build_generator(sc: Scenario) -> GeneratingScalar:
    """Assemble the generating pair (W, h) described by the scenario."""
    gen = sc.generator
    kind = gen["kind"]
    if kind == "geodesic":
        return builtin_geodesic()
    if kind == "metrizable":
        f_scalar = _isotropic_from_position_expression(parse_expression(gen["f"]), sc.dim)
        return builtin_metrizable(f_scalar, H=_single_variable_fn(parse_expression(gen["H"])))
    if kind == "nonmetrizable":
        f_scalar = _isotropic_from_position_expression(parse_expression(gen["f"]), sc.dim)
        a_fn = _single_variable_fn(parse_expression(gen["A"]))
        if "speed_range" in gen:
            lo, hi = gen["speed_range"]
            return builtin_nonmetrizable(f_scalar, a_fn, speed_range=(float(lo), float(hi)))
        return builtin_nonmetrizable(f_scalar, a_fn)
    w_expr = parse_expression(gen["W"])
    w_grad = [w_expr.derivative(f"x{k + 1}") for k in range(sc.dim)]
    w_speed = w_expr.derivative("v")

    def _env(x, s):
        env = _position_env(x)
        env["v"] = float(s)
        return env

    def w_eval(x, s):
        return w_expr.eval(_env(x, s))

    def w_dx(x, s):
        env = _env(x, s)
        return np.array([part.eval(env) for part in w_grad])

    def w_dspeed(x, s):
        return w_speed.eval(_env(x, s))

    return GeneratingScalar(
        W=IsotropicScalar(eval=w_eval, dx=w_dx, dspeed=w_dspeed),
        h=_single_variable_fn(parse_expression(gen["h"])),
    )


def build_subject(sc: Scenario) -> Union[GeneratingScalar, ForceField]:
    """Verification subject: the generator, optionally with a perturbation."""
    gs = build_generator(sc)
    if "perturb" not in sc.generator:
        return gs
    perturb = sc.generator["perturb"]
    expr = parse_expression(perturb["expression"])

    def bump(m, x, v):
        env = _position_env(x)
        env["v"] = speed_at(m, x, v)
        return expr.eval(env)

    return perturbed_field(as_force_field(gs), perturb["component"], bump)


def build_surface(sc: Scenario) -> Hypersurface:
    surface = sc.surface
    common = dict(
        base_u=tuple(float(c) for c in surface.get("base_u", [0.0, 0.0])),
        nu0=float(surface.get("nu0", 1.0)),
        orientation=float(surface.get("orientation", 1.0)),
    )
    kind = surface["kind"]
    if kind == "plane":
        return plane_surface(
            axis=int(surface.get("axis", 2)),
            offset=float(surface.get("offset", 0.0)),
            **common,
        )
    if kind == "sphere":
        return sphere_surface(
            radius=float(surface.get("radius", 1.0)),
            center=tuple(float(c) for c in surface.get("center", [0.0, 0.0, 0.0])),
            **common,
        )
    height_expr = parse_expression(surface["height"])

    def height(u):
        return height_expr.eval({"x1": float(u[0]), "x2": float(u[1])})

    return graph_surface(height=height, **common)


def _config_digest(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _provenance(config_path: Union[str, Path]) -> dict:
    return {
        "config_sha256": _config_digest(config_path),
        "tool_version": TOOL_VERSION,
        "generated_at": datetime.now(timezone.utc).isoformat(),
    }


def _normality_section(report: NormalityReport) -> dict:
    section = {key: float(value) for key, value in report.residuals().items()}
    section["sample_count"] = report.sample_count
    section["tolerance"] = report.tolerance_used
    section["passed"] = report.passed
    return section


def _write_bundle(out_dir: Path, name: str, bundle: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.report.json"
    path.write_text(json.dumps(bundle, indent=2, sort_keys=True) + "\n")
    return path


def _format_float(value: float) -> str:
    return format(value, ".17g")


def write_trajectory_csv(path: Union[str, Path], rec: ShiftRecord) -> None:
    """Write the recorded family with fixed columns and LF line endings."""
    dim = rec.x.shape[2]
    dim_u = rec.phi.shape[2]
    columns = (
        ["traj_id", "t"]
        + [f"x{k + 1}" for k in range(dim)]
        + [f"v{k + 1}" for k in range(dim)]
        + ["speed", "W"]
        + [f"phi_{k + 1}" for k in range(dim_u)]
    )
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for i in range(rec.u_grid.shape[0]):
            for j in range(rec.times.shape[0]):
                cells = [str(i), _format_float(rec.times[j])]
                cells += [_format_float(val) for val in rec.x[i, j]]
                cells += [_format_float(val) for val in rec.v[i, j]]
                cells.append(_format_float(rec.speed_vals[i, j]))
                cells.append(_format_float(rec.W_vals[i, j]))
                cells += [_format_float(val) for val in rec.phi[i, j]]
                fh.write(",".join(cells) + "\n")


def cmd_verify(
    config_path: Union[str, Path],
    tolerance: Optional[float] = None,
    seed: Optional[int] = None,
    out: Union[str, Path] = ".",
) -> int:
    """Sample normality residuals for the configured subject."""
    try:
        sc = load_scenario(config_path)
        if sc.verify is None:
            raise ConfigError("scenario has no verify section")
        m = build_metric(sc)
        subject = build_subject(sc)
        spec = SampleSpec(
            box=sc.verify["box"],
            count=int(sc.verify.get("sample_count", 200)),
            speed_range=tuple(sc.verify.get("speed_range", (0.5, 2.0))),
            seed=seed if seed is not None else sc.seed,
            mode=sc.verify.get("mode", "analytic"),
            tolerance=tolerance if tolerance is not None else sc.verify.get("tolerance"),
        )
        report = verify(subject, m, spec)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NormalShiftError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3

    bundle = {
        "name": sc.name,
        "normality": _normality_section(report),
        "shift_summary": None,
        "provenance": _provenance(config_path),
    }
    path = _write_bundle(Path(out), f"{sc.name}.verify", bundle)
    for family, value in report.residuals().items():
        flag = "ok" if value <= report.tolerance_used else "FAIL"
        print(f"{family:12s} {value:12.5e}  {flag}")
    if report.passed:
        print(f"PASS ({report.sample_count} samples, tolerance {report.tolerance_used:g})")
    else:
        failing = [k for k, v in report.residuals().items() if v > report.tolerance_used]
        print(f"FAIL: {', '.join(failing)} above tolerance {report.tolerance_used:g}")
    print(f"report: {path}")
    return 0 if report.passed else 1


def cmd_shift(
    config_path: Union[str, Path],
    force_constant_nu: bool = False,
    out: Union[str, Path] = ".",
    tolerance: Optional[float] = None,
    seed: Optional[int] = None,
) -> int:
    """Run the configured shift and write trajectories plus a summary."""
    del seed  # shift runs are deterministic; accepted for interface symmetry
    try:
        sc = load_scenario(config_path)
        if sc.surface is None or sc.run is None:
            raise ConfigError("scenario needs surface and run sections for a shift")
        if "perturb" in sc.generator:
            raise ConfigError("generator.perturb applies to verification only")
        m = build_metric(sc)
        gs = build_generator(sc)
        surface = build_surface(sc)
        grid = GridSpec(ranges=tuple(tuple(rng) for rng in sc.run["u_grid"]))
        rec = run_shift(
            gs,
            m,
            surface,
            grid,
            t_end=float(sc.run["t_end"]),
            dt=float(sc.run["dt"]),
            sample_stride=int(sc.run.get("sample_stride", 10)),
            force_constant_nu=force_constant_nu,
            chart_box=sc.run.get("box"),
        )
        max_phi = max_normalized_deviation(rec, m)
        w_dyn = w_dynamics_residual(rec, gs)
        spread = float(np.max(surface_constancy_residual(rec)))
        speed_law = speed_law_residual(rec, as_force_field(gs), m)
    except TrajectoryEscaped as exc:
        print(f"trajectory escaped: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, GridTooCoarse, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NormalShiftError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3

    tol = tolerance if tolerance is not None else float(sc.run.get("tolerance", DEFAULT_SHIFT_TOLERANCE))
    summary = {
        "max_norm_phi": max_phi,
        "w_dyn_residual": w_dyn,
        "per_time_spread": spread,
        "speed_law_residual": speed_law,
        "forced_constant_nu": force_constant_nu,
        "tolerance": tol,
        "passed": bool(max_phi < tol and w_dyn < tol),
    }
    for key in ("max_norm_phi", "w_dyn_residual", "per_time_spread", "speed_law_residual"):
        if not math.isfinite(summary[key]):
            print(f"numerical error: {key} is not finite", file=sys.stderr)
            return 3

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{sc.name}.trajectories.csv"
    write_trajectory_csv(csv_path, rec)
    bundle = {
        "name": sc.name,
        "normality": None,
        "shift_summary": summary,
        "provenance": _provenance(config_path),
    }
    bundle_path = _write_bundle(out_dir, f"{sc.name}.shift", bundle)
    for key in ("max_norm_phi", "w_dyn_residual", "per_time_spread", "speed_law_residual"):
        print(f"{key:20s} {summary[key]:12.5e}")
    print("PASS" if summary["passed"] else "FAIL", f"(tolerance {tol:g})")
    print(f"trajectories: {csv_path}")
    print(f"report: {bundle_path}")
    return 0 if summary["passed"] else 1


def cmd_report(bundle_path: Union[str, Path]) -> int:
    """Render a summary bundle as a table; always exits 0 when readable."""
    try:
        data = json.loads(Path(bundle_path).read_text())
        if not isinstance(data, dict):
            raise ConfigError("bundle must be a JSON object")
        for key in ("name", "normality", "shift_summary", "provenance"):
            if key not in data:
                raise ConfigError(f"bundle is missing the {key!r} section")
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        print(f"cannot read bundle: {exc}", file=sys.stderr)
        return 2

    print(f"scenario: {data['name']}")
    provenance = data["provenance"]
    print(
        f"tool {provenance.get('tool_version', '?')}  "
        f"config {provenance.get('config_sha256', '?')[:12]}  "
        f"at {provenance.get('generated_at', '?')}"
    )
    header = f"{'section':10s} {'quantity':22s} {'value':>13s}  status"
    print(header)
    print("-" * len(header))
    normality = data["normality"]
    if normality is not None:
        tol = normality.get("tolerance", float("nan"))
        for key, value in normality.items():
            if key in ("sample_count", "tolerance", "passed"):
                continue
            flag = "ok" if value <= tol else "FAIL"
            print(f"{'normality':10s} {key:22s} {value:13.5e}  {flag}")
    summary = data["shift_summary"]
    if summary is not None:
        tol = summary.get("tolerance", float("nan"))
        for key in ("max_norm_phi", "w_dyn_residual"):
            value = summary.get(key, float("nan"))
            flag = "ok" if value < tol else "FAIL"
            print(f"{'shift':10s} {key:22s} {value:13.5e}  {flag}")
        for key in ("per_time_spread", "speed_law_residual"):
            if key in summary:
                print(f"{'shift':10s} {key:22s} {summary[key]:13.5e}  -")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="normalshift",
        description="Force fields admitting the normal shift: verification and simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="sample normality residuals for a scenario")
    p_verify.add_argument("config")
    p_verify.add_argument("--tolerance", type=float, default=None)
    p_verify.add_argument("--seed", type=int, default=None)
    p_verify.add_argument("--out", default=".")

    p_shift = sub.add_parser("shift", help="run a hypersurface shift scenario")
    p_shift.add_argument("config")
    p_shift.add_argument("--force-constant-nu", action="store_true")
    p_shift.add_argument("--out", default=".")
    p_shift.add_argument("--tolerance", type=float, default=None)
    p_shift.add_argument("--seed", type=int, default=None)

    p_report = sub.add_parser("report", help="render a summary bundle")
    p_report.add_argument("bundle")

    args = parser.parse_args(argv)
    if args.command == "verify":
        return cmd_verify(args.config, tolerance=args.tolerance, seed=args.seed, out=args.out)
    if args.command == "shift":
        return cmd_shift(
            args.config,
            force_constant_nu=args.force_constant_nu,
            out=args.out,
            tolerance=args.tolerance,
            seed=args.seed,
        )
    return cmd_report(args.bundle)


if __name__ == "__main__":
    sys.exit(main())

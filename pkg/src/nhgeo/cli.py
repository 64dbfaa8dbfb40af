"""Command-line entry point.

Commands: ``simulate`` (CSV trajectory), ``build-metric``, ``recover-phi``,
``verify`` and ``distance`` (JSON).  Exit status: 0 all checks pass, 1 a
check failed, 2 configuration error, 3 numerical failure.  Errors are
reported as one JSON object on standard error.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys as _sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernel
from .chaplygin import gyroscopic_tensor, principal_metric, recover_dphi, recover_phi
from .dynamics import integrate_nonholonomic
from .errors import InvalidParameters, NhGeoError
from .systems import DEFAULT_PARAMS, POTENTIALS, SYSTEM_NAMES, SystemDescriptor, build
from .verify import DEFAULT_CONFIG, _clean, benchmark_state, check_distance, run_suite

__all__ = [
    "COMMANDS",
    "ParseError",
    "ValidationError",
    "RunConfig",
    "parse_config",
    "load_config",
    "trajectory_csv",
    "cmd_simulate",
    "cmd_build_metric",
    "cmd_recover_phi",
    "cmd_verify",
    "cmd_distance",
    "main",
]

COMMANDS = ("simulate", "build-metric", "recover-phi", "verify", "distance")
_HELP = {
    "simulate": "integrate the nonholonomic dynamics and write t, q, v as CSV",
    "build-metric": "principal metric h at the configured points (JSON)",
    "recover-phi": "recovered phi and dphi on a base grid against the closed form (JSON)",
    "verify": "run the verification suite; exit 1 if any check fails",
    "distance": "h-length of a short nonholonomic arc against the shooting h-distance",
}

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


class ParseError(ValueError):
    """Malformed configuration text."""

    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.key = key


class ValidationError(ValueError):
    """Well-formed configuration that violates the schema; lists every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass
class RunConfig:
    """Validated run configuration with every default filled in."""

    system: str
    command: str | None = None
    params: dict = field(default_factory=dict)
    potential: str | None = None
    q0: list | None = None
    v0: list | None = None
    T: float = 10.0
    dt: float = 1e-3
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    points: list | None = None
    grid_size: int = 3
    t_small: float = 0.3
    out: str | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def descriptor(self):
        return SystemDescriptor(self.system, dict(self.params), self.potential)


_KEYS = tuple(RunConfig.__dataclass_fields__)


def _is_real(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _real_list(x):
    return isinstance(x, list) and all(_is_real(v) for v in x)


def _validate(raw):
    """Validate a decoded mapping; returns a :class:`RunConfig`."""
    errors = []
    unknown = sorted(set(raw) - set(_KEYS))
    errors += [f"unknown key {k!r}" for k in unknown]
    cfg = {k: v for k, v in raw.items() if k in _KEYS}

    system = cfg.get("system")
    if system is None:
        errors.append("missing 'system'")
    elif system not in SYSTEM_NAMES:
        errors.append(f"system must be one of {list(SYSTEM_NAMES)}, got {system!r}")
        system = None

    command = cfg.get("command")
    if command is not None and command not in COMMANDS:
        errors.append(f"command must be one of {list(COMMANDS)}, got {command!r}")

    params = cfg.get("params", {})
    if not isinstance(params, dict):
        errors.append("params must be an object")
        params = {}
    for k, v in params.items():
        if system is not None and k not in DEFAULT_PARAMS[system]:
            errors.append(f"unknown parameter {k!r} for {system}")
        if not _is_real(v) or v <= 0:
            errors.append(f"parameter {k!r} must be a positive real")

    potential = cfg.get("potential")
    if potential is not None and system is not None and potential not in POTENTIALS[system]:
        errors.append(f"potential for {system} must be one of {list(POTENTIALS[system])}")

    for key in ("T", "dt", "t_small"):
        if key in cfg and (not _is_real(cfg[key]) or cfg[key] <= 0):
            errors.append(f"{key} must be a positive real")
    if "seed" in cfg and (not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0):
        errors.append("seed must be a non-negative integer")
    if "grid_size" in cfg and (not isinstance(cfg["grid_size"], int) or isinstance(cfg["grid_size"], bool)
                               or cfg["grid_size"] < 1):
        errors.append("grid_size must be a positive integer")

    n = m = None
    if system is not None:
        try:
            probe = build(SystemDescriptor(system))
            n, m = probe.n, probe.m
        except NhGeoError:
            pass
    for key in ("q0", "v0"):
        if cfg.get(key) is not None:
            if not _real_list(cfg[key]):
                errors.append(f"{key} must be a list of reals")
            elif n is not None and len(cfg[key]) != n:
                errors.append(f"{key} must have length {n}")
    if (cfg.get("q0") is None) != (cfg.get("v0") is None):
        errors.append("q0 and v0 must be given together")

    points = cfg.get("points")
    if points is not None:
        if not isinstance(points, list) or not points or not all(_real_list(p) for p in points):
            errors.append("points must be a non-empty list of coordinate lists")
        elif n is not None:
            lengths = {len(p) for p in points}
            allowed = {n, m}
            if len(lengths) != 1 or not lengths <= allowed:
                errors.append(f"points must all have length {n} (configurations) or {m} (base points)")

    tolerances = cfg.get("tolerances", {})
    if not isinstance(tolerances, dict):
        errors.append("tolerances must be an object")
    else:
        for k, v in tolerances.items():
            if k not in DEFAULT_CONFIG["tolerances"]:
                errors.append(f"unknown tolerance {k!r}")
            elif not _is_real(v) or v < 0:
                errors.append(f"tolerance {k!r} must be a non-negative real")

    out = cfg.get("out")
    if out is not None and not isinstance(out, str):
        errors.append("out must be a path string")

    if errors:
        raise ValidationError(errors)
    values = dict(cfg)
    for key in ("T", "dt", "t_small"):
        if key in values:
            values[key] = float(values[key])
    values["params"] = {k: float(v) for k, v in params.items()}
    values["tolerances"] = {k: float(v) for k, v in tolerances.items()}
    for key in ("q0", "v0"):
        if values.get(key) is not None:
            values[key] = [float(x) for x in values[key]]
    if points is not None:
        values["points"] = [[float(x) for x in p] for p in points]
    return RunConfig(**values)


def parse_config(text):
    """Parse JSON configuration text into a validated :class:`RunConfig`.

    Raises :class:`ParseError` for malformed JSON (with the line number) and
    :class:`ValidationError` listing every schema violation.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno) from exc
    if not isinstance(raw, dict):
        raise ParseError("configuration must be a JSON object", line=1)
    return _validate(raw)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _initial_state(sys, cfg):
    if cfg.q0 is None:
        return benchmark_state(sys)
    return np.asarray(cfg.q0, dtype=float), np.asarray(cfg.v0, dtype=float)


def trajectory_csv(traj):
    """CSV text with header ``t,q1..qn,v1..vn`` and 17 significant digits."""
    n = traj.q.shape[1]
    header = ["t"] + [f"q{i + 1}" for i in range(n)] + [f"v{i + 1}" for i in range(n)]
    buf = io.StringIO(newline="")
    buf.write(",".join(header) + "\n")
    rows = np.column_stack([traj.times, traj.q, traj.v])
    for row in rows:
        buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def cmd_simulate(cfg):
    """Nonholonomic trajectory as CSV text; returns ``(text, exit_code)``."""
    sys = build(cfg.descriptor())
    q0, v0 = _initial_state(sys, cfg)
    traj = integrate_nonholonomic(sys, q0, v0, cfg.T, kernel.OdeStepper("rk4", cfg.dt))
    return trajectory_csv(traj), EXIT_OK


def _points(sys, cfg, base):
    if cfg.points is None:
        q0, _ = _initial_state(sys, cfg)
        return [q0[: sys.m] if base else q0]
    pts = [np.asarray(p, dtype=float) for p in cfg.points]
    want = sys.m if base else sys.n
    if any(p.size != want for p in pts):
        raise ValidationError([f"points must have length {want} for this command"])
    return pts


def cmd_build_metric(cfg):
    """Principal metric ``H(q)`` at the configured points."""
    sys = build(cfg.descriptor())
    H = principal_metric(sys)
    pts = _points(sys, cfg, base=False)
    out = {"system": sys.name, "points": [{"q": p, "H": H(p)} for p in pts]}
    return out, EXIT_OK


def _base_grid(sys, k):
    box = np.asarray(sys.sample_box, dtype=float)[: sys.m]
    lo = box[:, 0] + 0.25 * (box[:, 1] - box[:, 0])
    hi = box[:, 1] - 0.25 * (box[:, 1] - box[:, 0])
    axes = [np.linspace(a, b, k) if k > 1 else np.array([0.5 * (a + b)]) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return 0.5 * (lo + hi), [np.array(p) for p in np.stack([g.ravel() for g in mesh], axis=-1)]


def cmd_recover_phi(cfg):
    """Recovered ``phi``, ``dphi`` and pattern residual on a base grid."""
    sys = build(cfg.descriptor())
    center, grid = _base_grid(sys, cfg.grid_size)
    pts = grid if cfg.points is None else _points(sys, cfg, base=True)
    threshold = cfg.tolerances.get("phi_simplicity", DEFAULT_CONFIG["tolerances"]["phi_simplicity"])
    rows = []
    for p in pts:
        dphi, res = recover_dphi(gyroscopic_tensor(sys, p), threshold=threshold)
        row = {"qbar": p, "phi": recover_phi(sys, center, p, threshold=threshold),
               "dphi": dphi, "residual": res}
        if sys.analytic_phi is not None:
            row["phi_analytic"] = float(sys.analytic_phi(p))
            row["dphi_analytic"] = sys.analytic_phi.differential(p)
        rows.append(row)
    return {"system": sys.name, "basepoint": center, "threshold": threshold, "points": rows}, EXIT_OK


def _suite_config(cfg):
    return {"dt": cfg.dt, "t_small": cfg.t_small, "tolerances": dict(cfg.tolerances)}


def cmd_verify(cfg):
    """Full verification report; exit 0 iff every check passes."""
    sys = build(cfg.descriptor())
    report = run_suite(sys, cfg.seed, _suite_config(cfg))
    return report.as_dict(), EXIT_OK if report.passed else EXIT_CHECK


def cmd_distance(cfg):
    """Length of a short nonholonomic arc against the shooting h-distance."""
    sys = build(cfg.descriptor())
    q0, v0 = _initial_state(sys, cfg)
    t = cfg.t_small
    traj = integrate_nonholonomic(sys, q0, v0, t, kernel.OdeStepper("rk4", cfg.dt))
    tol = cfg.tolerances.get("distance", DEFAULT_CONFIG["tolerances"]["distance"])
    res = check_distance(sys, traj, t, tolerance=tol)
    out = {"system": sys.name, "L": res.details.get("length"), "d": res.details.get("distance"),
           "residual": res.residual, "tolerance": res.tolerance, "passed": res.passed,
           "details": res.details}
    return out, EXIT_OK if res.passed else EXIT_CHECK


_HANDLERS = {
    "simulate": cmd_simulate,
    "build-metric": cmd_build_metric,
    "recover-phi": cmd_recover_phi,
    "verify": cmd_verify,
    "distance": cmd_distance,
}


# --------------------------------------------------------------------------
# argument handling
# --------------------------------------------------------------------------

def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--system", choices=SYSTEM_NAMES)
    common.add_argument("--seed", type=int)
    common.add_argument("--out", help="output file (default: standard output)")
    common.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                        help="physical parameter override, repeatable")
    parser = argparse.ArgumentParser(prog="nhgeo", description="Chaplygin systems as reparametrized geodesics")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=_HELP[name])
    return parser


def _parse_params(items):
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ParseError(f"expected KEY=VALUE, got {item!r}", key="--param")
        try:
            out[key] = float(value)
        except ValueError:
            raise ParseError(f"parameter value {value!r} is not a number", key=key) from None
    return out


def resolve_config(args):
    """Merge the optional config file with command-line overrides."""
    raw = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ParseError(f"cannot read config: {exc.strerror}", key="--config") from None
        parse_config(text)
        raw = json.loads(text)
    raw["command"] = args.command
    if args.system is not None:
        raw["system"] = args.system
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    if args.param:
        raw["params"] = {**raw.get("params", {}), **_parse_params(args.param)}
    return _validate(raw)


def _emit(text, path):
    if path is None:
        _sys.stdout.write(text)
        _sys.stdout.flush()
    else:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


def _error(kind, exc, code, **extra):
    payload = {"error": kind, "message": str(exc), "exit_code": code, **extra}
    _sys.stderr.write(json.dumps(payload, sort_keys=True) + "\n")
    return code


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ParseError as exc:
        return _error("ParseError", exc, EXIT_CONFIG, line=exc.line, key=exc.key)
    except ValidationError as exc:
        return _error("ValidationError", exc, EXIT_CONFIG, violations=exc.violations)
    try:
        result, code = _HANDLERS[cfg.command](cfg)
    except (InvalidParameters, ValidationError) as exc:
        return _error(type(exc).__name__, exc, EXIT_CONFIG)
    except NhGeoError as exc:
        return _error(type(exc).__name__, exc, EXIT_NUMERIC)
    text = result if isinstance(result, str) else json.dumps(_clean(result), indent=2, sort_keys=True) + "\n"
    _emit(text, cfg.out)
    return code


if __name__ == "__main__":
    raise SystemExit(main())

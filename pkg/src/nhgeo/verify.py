"""Numerical certificates for the reparametrization picture.

Each ``check_*`` function returns a :class:`CheckResult`; :func:`run_suite`
collects every invariant into a :class:`VerificationReport` whose JSON form
is reproducible for a fixed seed and configuration.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .chaplygin import (
    canonical_metric,
    gyroscopic_tensor,
    horizontal_lift,
    phi_field,
    principal_metric,
    recover_dphi,
    reduced_metric,
)
from .dynamics import (
    integrate_geodesic,
    integrate_mechanical,
    integrate_nonholonomic,
    lda_rhs,
    time_map,
)
from .errors import NhGeoError, ShootingDiverged
from .geometry import ScalarField, curve_length, geodesic_acceleration, kinetic_energy

log = logging.getLogger(__name__)

__all__ = [
    "CheckResult",
    "VerificationReport",
    "DEFAULT_CONFIG",
    "check_equivalence",
    "check_psi_relatedness",
    "check_distance",
    "shoot_geodesic",
    "benchmark_state",
    "run_suite",
]


@dataclass
class CheckResult:
    """One numerical check; ``passed`` is ``residual <= tolerance``."""

    name: str
    claim: str
    residual: float
    tolerance: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(np.isfinite(self.residual) and self.residual <= self.tolerance)

    def as_dict(self):
        return {
            "name": self.name,
            "claim": self.claim,
            "residual": _clean(self.residual),
            "tolerance": _clean(self.tolerance),
            "pass": self.passed,
            "details": _clean(self.details),
        }


@dataclass
class VerificationReport:
    system: str
    seed: int
    config: dict
    checks: list = field(default_factory=list)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def get(self, name):
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self):
        checks = sorted(self.checks, key=lambda c: c.name)
        return {
            "system": self.system,
            "seed": self.seed,
            "config": _clean(self.config),
            "passed": self.passed,
            "checks": [c.as_dict() for c in checks],
        }

    def to_json(self):
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _clean(x):
    """JSON-safe copy: numpy scalars and arrays to Python, non-finite to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _phi(sys, phi):
    return phi if isinstance(phi, ScalarField) else phi_field(sys, phi)


def _stepper(dt):
    return kernel.OdeStepper("rk4", float(dt))


def _energy(metric, potential, traj):
    E = kinetic_energy(metric, traj.q, traj.v)
    if potential is not None:
        E = E + np.asarray(potential(traj.q), dtype=float)
    return E


def _relative_drift(E):
    return float(np.max(np.abs(E - E[0])) / max(1.0, abs(float(E[0]))))


def benchmark_state(sys):
    """Fixed initial data in the constraint distribution, per built-in system."""
    base = {
        "vertical-disk": ([0.0, 0.0, 0.0, 0.0], [1.0, 1.0]),
        "nonholonomic-particle": ([0.0, 0.0, 0.0], [1.0, 1.0]),
        "nonholonomic-particle-corrupted": ([0.0, 0.0, 0.0], [1.0, 1.0]),
        "veselova": ([1.2, 0.3, 0.0], [0.3, 0.8]),
    }
    q0, w = base.get(sys.name, (list(sys.section(np.zeros(sys.m))), [1.0] * sys.m))
    q0 = np.asarray(q0, dtype=float)
    return q0, horizontal_lift(sys, q0, np.asarray(w[: sys.m], dtype=float))


def _sample_points(sys, rng, count):
    box = np.asarray(sys.sample_box, dtype=float)
    return rng.uniform(box[:, 0], box[:, 1], size=(count, sys.n))


def _sample_states(sys, rng, count, speed=1.0):
    qs = _sample_points(sys, rng, count)
    ws = rng.normal(size=(count, sys.m)) * speed
    vs = np.array([horizontal_lift(sys, q, w) for q, w in zip(qs, ws)])
    return qs, vs


# --------------------------------------------------------------------------
# equivalence
# --------------------------------------------------------------------------

def check_equivalence(sys, q0, v0, T, stepper=kernel.OdeStepper(), phi="auto",
                      tolerance=1e-5, nh=None, h_mode="fd"):
    """Compare the nonholonomic trajectory with the time-changed h-trajectory.

    The h-trajectory starts at ``q0`` with velocity ``exp(-phi(pi q0)) v0``
    and, when the system carries a potential, feels ``V o pi``.  The residual
    is ``sup |gamma(tau(t)) - c(t)|`` over the nonholonomic grid and its
    midpoints.  ``nh`` may pass a precomputed nonholonomic trajectory;
    ``h_mode`` selects how the Christoffel symbols of h are differentiated.
    """
    phi_f = _phi(sys, phi)
    H = principal_metric(sys, phi_f, mode=h_mode)
    c = nh if nh is not None else integrate_nonholonomic(sys, q0, v0, T, stepper)
    c = c.until(T)
    tm = time_map(sys, c, phi_f)
    scale0 = math.exp(-float(phi_f(c.q[0, : sys.m])))
    V = sys.potential_on_q()
    gamma = integrate_mechanical(H, V, c.q[0], scale0 * c.v[0], float(tm.tau[-1]), stepper,
                                 label="h-mechanical" if V is not None else "h-geodesic")
    mids = c.times[:-1] + 0.5 * np.diff(c.times)
    t_all = np.concatenate([c.times, mids])
    c_all = np.concatenate([c.q, c.position(mids)])
    tau_all = np.minimum(np.concatenate([tm.tau, tm(mids)]), gamma.times[-1])
    diff = gamma.position(tau_all) - c_all
    residual = float(np.max(np.linalg.norm(diff, axis=-1)))
    # auxiliary parametrization-free diagnostic: lengths of the two images
    L_c = curve_length(H, c)
    L_g = curve_length(H, gamma)
    details = {
        "T": float(T),
        "dt": stepper.step,
        "tau_end": float(tm.tau[-1]),
        "time_map_strictly_increasing": tm.strictly_increasing,
        "time_map_identity_deviation": float(np.max(np.abs(tm.tau - c.times))),
        "image_length_gap": abs(L_c - L_g),
        "samples": int(t_all.size),
        "with_potential": V is not None,
        "h_mode": h_mode,
    }
    return CheckResult("equivalence", "nonholonomic trajectories are time-changed h-trajectories",
                       residual, tolerance, details)


# --------------------------------------------------------------------------
# psi-relatedness
# --------------------------------------------------------------------------

def _flow(f, y, s, n_steps):
    dt = s / n_steps
    for _ in range(n_steps):
        y = kernel.rk4_step(f, y, dt)
    return y


def check_psi_relatedness(sys, qs, vs, phi="auto", eps=5e-4, n_steps=1, tolerance=1e-6):
    """Push the scaled nonholonomic field through ``psi(q, v) = (q, exp(-phi) v)``.

    The derivative of ``psi`` along the field is taken by fourth-order central
    differences over short forward and backward nonholonomic flows and is
    compared with the h-mechanical field at ``psi(q, v)``.
    """
    phi_f = _phi(sys, phi)
    H = principal_metric(sys, phi_f)
    V = sys.potential_on_q()
    n, m = sys.n, sys.m

    def fwd(y):
        return np.concatenate([y[n:], lda_rhs(sys, y[:n], y[n:], check=False).acceleration])

    def bwd(y):
        return -fwd(y)

    def psi(y):
        s = math.exp(-float(phi_f(y[:m])))
        return np.concatenate([y[:n], s * y[n:]])

    worst = 0.0
    for q, v in zip(np.atleast_2d(qs), np.atleast_2d(vs)):
        y0 = np.concatenate([q, v])
        e0 = math.exp(-float(phi_f(q[:m])))
        pts = [_flow(bwd, y0, 2 * eps, 2 * n_steps), _flow(bwd, y0, eps, n_steps),
               _flow(fwd, y0, eps, n_steps), _flow(fwd, y0, 2 * eps, 2 * n_steps)]
        vals = [psi(p) for p in pts]
        dpsi = (vals[0] - vals[3] + 8.0 * (vals[2] - vals[1])) / (12.0 * eps)
        pushed = e0 * dpsi
        w = e0 * v
        G, dG = H.jacobian(q)
        acc = geodesic_acceleration(G, dG, w)
        if V is not None:
            acc = acc - kernel.solve_linear(G, V.differential(q))
        target = np.concatenate([w, acc])
        worst = max(worst, float(np.max(np.abs(pushed - target))))
    return CheckResult("psi_relatedness", "velocity rescaling maps the scaled nonholonomic field to the h-field",
                       worst, tolerance, {"states": int(len(np.atleast_2d(qs))), "eps": eps})


# --------------------------------------------------------------------------
# distance
# --------------------------------------------------------------------------

def _endpoint(H, q0, w, t, stepper):
    g = integrate_geodesic(H, q0, w, t, stepper)
    return g.q[-1], g


def shoot_geodesic(H, q0, q1, t, guess=None, stepper=kernel.OdeStepper("rk4", 5e-3),
                   tol=1e-8, max_iter=50, fd_eps=1e-6):
    """Initial velocity ``w`` of the h-geodesic from ``q0`` reaching ``q1`` at time ``t``.

    Damped Newton iteration with a central-difference Jacobian of the
    endpoint map; the step is halved until the endpoint error decreases.
    Returns ``(w, geodesic, iterations, endpoint_error)``.
    """
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    w = (q1 - q0) / t if guess is None else np.asarray(guess, dtype=float)
    n = q0.size
    end, g = _endpoint(H, q0, w, t, stepper)
    F = end - q1
    err = float(np.max(np.abs(F)))
    for it in range(max_iter):
        if err <= tol:
            return w, g, it, err
        J = np.empty((n, n))
        for j in range(n):
            dw = np.zeros(n)
            dw[j] = fd_eps * max(1.0, abs(w[j]))
            ep, _ = _endpoint(H, q0, w + dw, t, stepper)
            em, _ = _endpoint(H, q0, w - dw, t, stepper)
            J[:, j] = (ep - em) / (2.0 * dw[j])
        try:
            step = kernel.solve_linear(J, -F)
        except NhGeoError as exc:
            raise ShootingDiverged(f"singular shooting Jacobian: {exc}") from exc
        lam = 1.0
        while True:
            w_new = w + lam * step
            try:
                end, g_new = _endpoint(H, q0, w_new, t, stepper)
                err_new = float(np.max(np.abs(end - q1)))
            except NhGeoError:
                err_new = math.inf
            if err_new < err or lam < 1e-4:
                break
            lam *= 0.5
        if not err_new < err:
            raise ShootingDiverged(f"no decrease of the endpoint error {err:.3e}")
        w, g, F, err = w_new, g_new, end - q1, err_new
    if err <= tol:
        return w, g, max_iter, err
    raise ShootingDiverged(f"endpoint error {err:.3e} after {max_iter} iterations")


def check_distance(sys, traj, t_small=0.3, phi="auto", tolerance=1e-4, endpoint_tol=1e-8,
                   max_halvings=4, shooting_dt=5e-3):
    """``|length_h(c|[0,t]) - d_h(c(0), c(t))|`` with the distance from single shooting.

    On :class:`ShootingDiverged` the time is halved (at most ``max_halvings``
    times); the time actually used is reported.
    """
    H = principal_metric(sys, _phi(sys, phi))
    t = float(t_small)
    attempts = []
    for _ in range(max_halvings + 1):
        piece = traj.until(t)
        t_grid = float(piece.times[-1])
        try:
            w, g, iters, err = shoot_geodesic(H, piece.q[0], piece.q[-1], t_grid,
                                              stepper=kernel.OdeStepper("rk4", min(shooting_dt, t_grid / 20)),
                                              tol=endpoint_tol)
        except ShootingDiverged as exc:
            log.warning("shooting diverged at t=%g: %s; halving", t_grid, exc)
            attempts.append({"t": t_grid, "error": str(exc)})
            t = 0.5 * t
            continue
        L = curve_length(H, piece)
        d = curve_length(H, g)
        return CheckResult("distance", "short nonholonomic arcs realise the h-distance", abs(L - d), tolerance, {
            "t": t_grid, "length": L, "distance": d, "newton_iterations": iters,
            "endpoint_error": err, "failed_attempts": attempts})
    return CheckResult("distance", "short nonholonomic arcs realise the h-distance", math.inf, tolerance,
                       {"t": t, "failed_attempts": attempts})


# --------------------------------------------------------------------------
# suite
# --------------------------------------------------------------------------

DEFAULT_CONFIG = {
    "dt": 1e-3,
    "T_conservation": 10.0,
    "T_equivalence": 5.0,
    "t_small": 0.3,
    "n_points": 20,
    "n_states": 10,
    "phi": "auto",
    "tolerances": {
        "phi_simplicity": 1e-6,
        "phi_match": 1e-6,
        "antisymmetry": 1e-10,
        "closedness": 1e-5,
        "fiber_invariance": 1e-8,
        "submersion": 1e-10,
        "orthogonality": 1e-10,
        "positive_definite": 0.0,
        "constraint_conservation": 1e-8,
        "energy_conservation": 1e-8,
        "h_energy_conservation": 1e-8,
        "horizontality": 1e-7,
        "projection_property": 1e-6,
        "equivalence": 1e-5,
        "time_map_monotone": 0.0,
        "psi_relatedness": 1e-6,
        "distance": 1e-4,
    },
}


def _merge(config):
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    for k, v in (config or {}).items():
        if k == "tolerances":
            unknown = set(v) - set(cfg["tolerances"])
            if unknown:
                raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
            cfg["tolerances"].update({kk: float(vv) for kk, vv in v.items()})
        elif k in cfg:
            cfg[k] = v
        else:
            raise ValueError(f"unknown suite config key {k!r}")
    return cfg


def _guarded(name, claim, tol, fn):
    """Run one check; numerical errors become a failed result."""
    try:
        return fn()
    except NhGeoError as exc:
        return CheckResult(name, claim, math.inf, tol, {"error": type(exc).__name__, "message": str(exc)})


def _pointwise_checks(sys, rng, cfg, phi_f):
    tol = cfg["tolerances"]
    m, n = sys.m, sys.n
    pts = _sample_points(sys, rng, cfg["n_points"])
    out = []

    # gyroscopic structure
    def gyro():
        res, anti, match = [], [], []
        for q in pts:
            C = gyroscopic_tensor(sys, q[:m])
            dphi, r = recover_dphi(C, threshold=math.inf)
            res.append(r)
            anti.append(C.antisymmetry_defect())
            if sys.analytic_phi is not None:
                match.append(float(np.max(np.abs(dphi - sys.analytic_phi.differential(q[:m])))))
        return res, anti, match

    try:
        res, anti, match = gyro()
        out.append(CheckResult("phi_simplicity", "gyroscopic tensor has the phi-simple pattern",
                               max(res), tol["phi_simplicity"], {"points": len(res)}))
        out.append(CheckResult("antisymmetry", "gyroscopic coefficients are antisymmetric",
                               max(anti), tol["antisymmetry"], {"points": len(anti)}))
        if match:
            out.append(CheckResult("phi_match", "recovered dphi equals the differential of the attached phi",
                                   max(match), tol["phi_match"], {"points": len(match)}))
    except NhGeoError as exc:
        for name in ("phi_simplicity", "antisymmetry"):
            out.append(CheckResult(name, "gyroscopic structure", math.inf, tol[name],
                                   {"error": type(exc).__name__, "message": str(exc)}))

    # closedness of the recovered one-form
    def closed():
        worst = 0.0
        for q in pts[:3]:
            J = kernel.fd_jacobian(lambda p: recover_dphi(gyroscopic_tensor(sys, p), math.inf)[0],
                                   q[:m], batched=False)
            worst = max(worst, float(np.max(np.abs(J - J.T))))
        return CheckResult("closedness", "recovered dphi is closed", worst, tol["closedness"], {"points": 3})

    out.append(_guarded("closedness", "recovered dphi is closed", tol["closedness"], closed))

    # fiber invariance of reduced data
    def fiber():
        worst = 0.0
        for q in pts[:5]:
            qb = q[:m]
            f1 = np.asarray(sys.section_fiber, dtype=float)
            f2 = q[m:]
            gb = np.max(np.abs(reduced_metric(sys, qb, f1) - reduced_metric(sys, qb, f2)))
            C1 = gyroscopic_tensor(sys, qb, f1).coefficients
            C2 = gyroscopic_tensor(sys, qb, f2).coefficients
            worst = max(worst, float(gb), float(np.max(np.abs(C1 - C2))))
        return CheckResult("fiber_invariance", "reduced data does not depend on the fiber representative",
                           worst, tol["fiber_invariance"], {"points": 5})

    out.append(_guarded("fiber_invariance", "reduced data is fiber independent", tol["fiber_invariance"], fiber))

    # submersion, orthogonality, positivity of h
    def submersion():
        H = principal_metric(sys, phi_f)
        gc = canonical_metric(sys, phi_f)
        sub, orth, neg = 0.0, 0.0, 0.0
        for q in pts:
            Hq = H(q)
            u = horizontal_lift(sys, q, rng.normal(size=m))
            w = horizontal_lift(sys, q, rng.normal(size=m))
            z = np.concatenate([np.zeros(m), rng.normal(size=n - m)])
            sub = max(sub, abs(float(u @ Hq @ w - u[:m] @ gc(q[:m]) @ w[:m])))
            orth = max(orth, abs(float(u @ Hq @ z)))
            neg = max(neg, -float(np.min(np.linalg.eigvalsh(Hq))))
        return [
            CheckResult("submersion", "projection is a Riemannian submersion onto g_can on the distribution",
                        sub, tol["submersion"], {"points": len(pts)}),
            CheckResult("orthogonality", "the distribution is h-orthogonal to the fibers",
                        orth, tol["orthogonality"], {"points": len(pts)}),
            CheckResult("positive_definite", "h is positive definite",
                        max(neg, 0.0) if neg > 0 else 0.0, tol["positive_definite"], {"points": len(pts)}),
        ]

    try:
        out.extend(submersion())
    except NhGeoError as exc:
        for name in ("submersion", "orthogonality", "positive_definite"):
            out.append(CheckResult(name, "principal metric", math.inf, tol[name],
                                   {"error": type(exc).__name__, "message": str(exc)}))
    return out


def _trajectory_checks(sys, cfg, phi_f):
    tol = cfg["tolerances"]
    stepper = _stepper(cfg["dt"])
    q0, v0 = benchmark_state(sys)
    out = []
    c = integrate_nonholonomic(sys, q0, v0, float(cfg["T_conservation"]), stepper)
    viol = float(np.max(np.abs(np.einsum("kai,ki->ka", np.asarray(sys.constraints.forms_at(c.q)), c.v))))
    out.append(CheckResult("constraint_conservation", "nonholonomic motion stays in the distribution",
                           viol, tol["constraint_conservation"], {"T": c.T}))
    V = sys.potential_on_q()
    drift = _relative_drift(_energy(sys.metric, V, c))
    out.append(CheckResult("energy_conservation", "nonholonomic energy is conserved",
                           drift, tol["energy_conservation"], {"T": c.T}))

    T_eq = float(cfg["T_equivalence"])
    eq = _guarded("equivalence", "nonholonomic trajectories are time-changed h-trajectories", tol["equivalence"],
                  lambda: check_equivalence(sys, q0, v0, T_eq, stepper, phi_f, tol["equivalence"], nh=c))
    out.append(eq)
    mono = eq.details.get("time_map_strictly_increasing")
    out.append(CheckResult("time_map_monotone", "the time change is strictly increasing",
                           0.0 if mono else 1.0, tol["time_map_monotone"], {}))

    # h-trajectory with distribution initial data: horizontality, energy, projection
    def h_checks():
        H = principal_metric(sys, phi_f)
        s0 = math.exp(-float(phi_f(q0[: sys.m])))
        g = integrate_mechanical(H, V, q0, s0 * v0, T_eq, stepper)
        forms = np.asarray(sys.constraints.forms_at(g.q))
        hv = float(np.max(np.abs(np.einsum("kai,ki->ka", forms, g.v))))
        he = _relative_drift(_energy(H, V, g))
        gc = canonical_metric(sys, phi_f)
        Vb = sys.potential
        base = integrate_mechanical(gc, Vb, q0[: sys.m], s0 * v0[: sys.m], T_eq, stepper, label="base")
        proj = float(np.max(np.abs(base.q - g.q[:, : sys.m])))
        return [
            CheckResult("horizontality", "h-trajectories starting in the distribution stay in it",
                        hv, tol["horizontality"], {"T": T_eq}),
            CheckResult("h_energy_conservation", "h-mechanical energy is conserved",
                        he, tol["h_energy_conservation"], {"T": T_eq}),
            CheckResult("projection_property", "horizontal h-trajectories project to g_can trajectories",
                        proj, tol["projection_property"], {"T": T_eq}),
        ]

    try:
        out.extend(h_checks())
    except NhGeoError as exc:
        for name in ("horizontality", "h_energy_conservation", "projection_property"):
            out.append(CheckResult(name, "h-trajectory", math.inf, tol[name],
                                   {"error": type(exc).__name__, "message": str(exc)}))

    out.append(_guarded("distance", "short nonholonomic arcs realise the h-distance", tol["distance"],
                        lambda: check_distance(sys, c, cfg["t_small"], phi_f, tol["distance"])))
    return out


def run_suite(sys, seed=0, config=None):
    """Run every invariant on ``sys``; failures are recorded, never raised."""
    cfg = _merge(config)
    rng = np.random.default_rng(seed)
    tol = cfg["tolerances"]
    report = VerificationReport(sys.name, int(seed), cfg)
    try:
        phi_f = _phi(sys, cfg["phi"])
    except (NhGeoError, ValueError) as exc:
        report.checks.append(CheckResult("phi_available", "phi is available", math.inf, 0.0,
                                         {"error": type(exc).__name__, "message": str(exc)}))
        return report
    report.checks.extend(_pointwise_checks(sys, rng, cfg, phi_f))
    qs, vs = _sample_states(sys, rng, cfg["n_states"])
    report.checks.append(_guarded(
        "psi_relatedness", "velocity rescaling relates the fields", tol["psi_relatedness"],
        lambda: check_psi_relatedness(sys, qs, vs, phi_f, tolerance=tol["psi_relatedness"])))
    try:
        report.checks.extend(_trajectory_checks(sys, cfg, phi_f))
    except NhGeoError as exc:
        report.checks.append(CheckResult("trajectory", "nonholonomic integration", math.inf, 0.0,
                                         {"error": type(exc).__name__, "message": str(exc)}))
    return report

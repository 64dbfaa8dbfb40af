"""Built-in Chaplygin systems: vertical rolling disk, nonholonomic particle,
and the Veselova rigid body in ZXZ Euler angles.

Charts list base coordinates first:

* vertical-disk: ``(theta, varphi | x, y)``
* nonholonomic-particle: ``(x, y | z)``
* veselova: ``(beta, gamma | alpha)`` for ``g = Rz(alpha) Rx(beta) Rz(gamma)``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chaplygin import BundleSystem, principal_metric
from .errors import InvalidParameters
from .geometry import Distribution, MetricField, ScalarField, assemble, coords

__all__ = [
    "SYSTEM_NAMES",
    "DEFAULT_PARAMS",
    "POTENTIALS",
    "SystemDescriptor",
    "build",
    "build_corrupted_particle",
    "veselova_A",
    "analytic_crosschecks",
    "left_invariance_defect",
]

MODE = "fd"
SYSTEM_NAMES = ("vertical-disk", "nonholonomic-particle", "veselova")

DEFAULT_PARAMS = {
    "vertical-disk": {"m": 1.0, "R": 1.0, "I": 1.0, "J": 1.0},
    "nonholonomic-particle": {},
    "veselova": {"I1": 1.0, "I2": 2.0, "I3": 3.0},
}

POTENTIALS = {
    "vertical-disk": ("half-varphi-squared",),
    "nonholonomic-particle": ("half-y-squared",),
    "veselova": ("gravity",),
}

# Euler angle beta is kept away from the chart singularities at 0 and pi.
_BOXES = {
    "vertical-disk": [(-np.pi, np.pi), (-np.pi, np.pi), (-2.0, 2.0), (-2.0, 2.0)],
    "nonholonomic-particle": [(-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
    "veselova": [(0.2, np.pi - 0.2), (-np.pi, np.pi), (-np.pi, np.pi)],
}


@dataclass(frozen=True)
class SystemDescriptor:
    name: str
    params: dict = field(default_factory=dict)
    potential: str | None = None

    def resolved_params(self):
        if self.name not in SYSTEM_NAMES:
            raise InvalidParameters(f"unknown system {self.name!r}; choose from {SYSTEM_NAMES}")
        defaults = DEFAULT_PARAMS[self.name]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise InvalidParameters(f"unknown parameters for {self.name}: {sorted(unknown)}")
        p = {**defaults, **{k: float(v) for k, v in self.params.items()}}
        bad = [k for k, v in p.items() if not (np.isfinite(v) and v > 0)]
        if bad:
            raise InvalidParameters(f"parameters must be strictly positive: {bad}")
        if self.potential is not None and self.potential not in POTENTIALS[self.name]:
            raise InvalidParameters(
                f"unknown potential {self.potential!r} for {self.name}; "
                f"choose from {POTENTIALS[self.name]}")
        return p

    @property
    def sample_box(self):
        return np.array(_BOXES[self.name])


def build(descriptor):
    """Validated :class:`BundleSystem` for a descriptor."""
    if isinstance(descriptor, str):
        descriptor = SystemDescriptor(descriptor)
    p = descriptor.resolved_params()
    builder = {
        "vertical-disk": _disk,
        "nonholonomic-particle": _particle,
        "veselova": _veselova,
    }[descriptor.name]
    return builder(p, descriptor.potential, descriptor.sample_box)


def _filled(q, const, entries):
    """Copies of ``const`` over the batch of ``q`` with some entries replaced."""
    out = np.empty(q.shape[:-1] + const.shape, dtype=object if q.dtype == object else float)
    out[...] = const
    for (i, j), val in entries.items():
        out[..., i, j] = val
    return out


# --------------------------------------------------------------------------
# vertical rolling disk
# --------------------------------------------------------------------------

def _disk(p, potential, box):
    m, R, I, J = p["m"], p["R"], p["I"], p["J"]

    g0 = np.diag([I, J, m, m])
    forms0 = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]])

    def g(q):
        return _filled(q, g0, {})

    def forms(q):
        ph = coords(q)[1]
        return _filled(q, forms0, {(0, 0): -R * np.cos(ph), (1, 0): -R * np.sin(ph)})

    def phi(qb):
        return 0.0 * qb[..., 0]

    pot = None
    if potential == "half-varphi-squared":
        pot = ScalarField(lambda qb: 0.5 * coords(qb)[1] ** 2, 2, MODE, "V")
    return BundleSystem(
        name="vertical-disk", n=4, m=2,
        metric=MetricField(g, 4, MODE, "g_disk"),
        constraints=Distribution(4, 2, forms=forms, mode=MODE),
        section_fiber=(0.0, 0.0),
        potential=pot,
        analytic_phi=ScalarField(phi, 2, MODE, "phi_disk"),
        sample_box=box, params=dict(p))


# --------------------------------------------------------------------------
# nonholonomic particle
# --------------------------------------------------------------------------

def _particle_system(power, potential, box, name):
    g0 = np.eye(3)
    forms0 = np.array([[0.0, 0.0, 1.0]])

    def g(q):
        return _filled(q, g0, {})

    def forms(q):
        y = coords(q)[1]
        return _filled(q, forms0, {(0, 0): -(y ** power)})

    def phi(qb):
        y = coords(qb)[1]
        return -0.5 * np.log(1.0 + y * y)

    pot = None
    if potential == "half-y-squared":
        pot = ScalarField(lambda qb: 0.5 * coords(qb)[1] ** 2, 2, MODE, "V")
    return BundleSystem(
        name=name, n=3, m=2,
        metric=MetricField(g, 3, MODE, "g_particle"),
        constraints=Distribution(3, 2, forms=forms, mode=MODE),
        section_fiber=(0.0,),
        potential=pot,
        analytic_phi=ScalarField(phi, 2, MODE, "phi_particle"),
        sample_box=box, params={})


def _particle(p, potential, box):
    return _particle_system(1, potential, box, "nonholonomic-particle")


def build_corrupted_particle(potential=None):
    """Negative control: constraint ``zdot = y^2 xdot`` with the particle's phi kept.

    The attached analytic phi no longer belongs to this constraint, so any
    metric built from it must fail the reparametrization checks.
    """
    return _particle_system(2, potential, np.array(_BOXES["nonholonomic-particle"]),
                            "nonholonomic-particle-corrupted")


# --------------------------------------------------------------------------
# Veselova
# --------------------------------------------------------------------------

def veselova_A(I1, I2, I3):
    """Diagonal ``A`` with ``Inertia(u x v) = (A u) x (A v)`` for diagonal inertia."""
    return np.array([np.sqrt(I2 * I3 / I1), np.sqrt(I1 * I3 / I2), np.sqrt(I1 * I2 / I3)])


def _gamma_point(beta, gamma):
    """``g^{-1} e3`` for ``g = Rz(alpha) Rx(beta) Rz(gamma)``."""
    sb = np.sin(beta)
    return sb * np.sin(gamma), sb * np.cos(gamma), np.cos(beta)


def _veselova(p, potential, box):
    inertia = (p["I1"], p["I2"], p["I3"])
    A = veselova_A(*inertia)

    def body_velocity_matrix(q):
        # columns: body angular velocity per unit (beta_dot, gamma_dot, alpha_dot)
        beta, gamma, alpha = coords(q)
        o = 0.0 * beta
        g1, g2, g3 = _gamma_point(beta, gamma)
        return assemble([[np.cos(gamma), o, g1],
                         [-np.sin(gamma), o, g2],
                         [o, 1.0 + o, g3]])

    def g(q):
        W = body_velocity_matrix(q)
        Wt = np.swapaxes(W, -1, -2)
        return Wt @ (np.array(inertia)[:, None] * W) if W.dtype != object else \
            Wt @ np.diag(inertia).astype(object) @ W

    forms0 = np.array([[0.0, 0.0, 1.0]])

    def forms(q):
        # e3-component of the spatial angular velocity: alpha_dot + cos(beta) gamma_dot
        return _filled(q, forms0, {(0, 1): np.cos(coords(q)[0])})

    def phi(qb):
        beta, gamma = coords(qb)
        g1, g2, g3 = _gamma_point(beta, gamma)
        return -0.5 * np.log(A[0] * g1 * g1 + A[1] * g2 * g2 + A[2] * g3 * g3)

    pot = None
    if potential == "gravity":
        pot = ScalarField(lambda qb: np.cos(coords(qb)[0]), 2, MODE, "V")
    return BundleSystem(
        name="veselova", n=3, m=2,
        metric=MetricField(g, 3, MODE, "g_veselova"),
        constraints=Distribution(3, 2, forms=forms, mode=MODE),
        section_fiber=(0.0,),
        potential=pot,
        analytic_phi=ScalarField(phi, 2, MODE, "phi_veselova"),
        sample_box=box, params=dict(p, A=A.tolist()))


# --------------------------------------------------------------------------
# analytic cross-check tables
# --------------------------------------------------------------------------

def _disk_h(p, q):
    m, R, I, J = p["m"], p["R"], p["I"], p["J"]
    ph = q[1]
    H = np.diag([I + 2 * m * R ** 2, J, m, m])
    H[0, 2] = H[2, 0] = -m * R * np.cos(ph)
    H[0, 3] = H[3, 0] = -m * R * np.sin(ph)
    return H


def _particle_h(q):
    y = q[1]
    return np.array([[1 + y * y, 0.0, -y], [0.0, 1.0 / (1 + y * y), 0.0], [-y, 0.0, 1.0]])


def analytic_crosschecks(descriptor, points):
    """Closed-form reference values at the given chart points.

    Disk and particle rows carry ``gbar``, ``h``, ``phi`` and ``dphi``;
    Veselova rows carry ``phi`` and ``dphi`` only (its reduced metric is
    checked intrinsically).
    """
    if isinstance(descriptor, str):
        descriptor = SystemDescriptor(descriptor)
    p = descriptor.resolved_params()
    rows = []
    for q in np.atleast_2d(np.asarray(points, dtype=float)):
        if descriptor.name == "vertical-disk":
            rows.append({
                "point": q,
                "gbar": np.diag([p["I"] + p["m"] * p["R"] ** 2, p["J"]]),
                "h": _disk_h(p, q),
                "phi": 0.0,
                "dphi": np.zeros(2),
            })
        elif descriptor.name == "nonholonomic-particle":
            y = q[1]
            rows.append({
                "point": q,
                "gbar": np.diag([1 + y * y, 1.0]),
                "h": _particle_h(q),
                "phi": -0.5 * np.log(1 + y * y),
                "dphi": np.array([0.0, -y / (1 + y * y)]),
            })
        else:
            A = veselova_A(p["I1"], p["I2"], p["I3"])
            beta, gamma = q[0], q[1]
            gp = np.array(_gamma_point(beta, gamma))
            dg_db = np.array([np.cos(beta) * np.sin(gamma), np.cos(beta) * np.cos(gamma), -np.sin(beta)])
            dg_dg = np.array([np.sin(beta) * np.cos(gamma), -np.sin(beta) * np.sin(gamma), 0.0])
            s = float(np.sum(A * gp * gp))
            rows.append({
                "point": q,
                "phi": -0.5 * np.log(s),
                "dphi": np.array([-np.sum(A * gp * dg_db) / s, -np.sum(A * gp * dg_dg) / s]),
            })
    return rows


def left_invariance_defect(sys, qs, phi="auto"):
    """Diagnostic only: how far ``h`` on SO(3) is from being left-invariant.

    ``h`` is pulled back to body angular velocities at each point and compared
    with the same pullback at a reference point (the identity itself is a
    chart singularity).  Nothing is asserted about the value.
    """
    if sys.name != "veselova":
        raise ValueError("left-invariance diagnostic only applies to veselova")
    H = principal_metric(sys, phi)

    def body(q):
        Winv = np.linalg.inv(_body_matrix(q))
        return Winv.T @ H(q) @ Winv

    ref = body(np.array([0.25, 0.0, 0.0]))
    return np.array([float(np.max(np.abs(body(q) - ref))) for q in np.atleast_2d(qs)])


def _body_matrix(q):
    beta, gamma = q[0], q[1]
    g1, g2, g3 = _gamma_point(beta, gamma)
    return np.array([[np.cos(gamma), 0.0, g1], [-np.sin(gamma), 0.0, g2], [0.0, 1.0, g3]])

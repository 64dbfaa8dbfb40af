"""Nonholonomic, geodesic and mechanical trajectories, and the time map
relating them."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _fast, kernel
from .chaplygin import phi_field
from .errors import ConstraintViolated, SingularMatrix, SingularSaddle
from .geometry import geodesic_acceleration, project_g

log = logging.getLogger(__name__)

__all__ = [
    "Trajectory",
    "LdaSolveResult",
    "TimeMap",
    "lda_rhs",
    "integrate_nonholonomic",
    "integrate_geodesic",
    "integrate_mechanical",
    "time_map",
]


@dataclass
class Trajectory:
    """Sampled curve: ``times`` (N,), positions ``q`` (N, n), velocities ``v`` (N, n)."""

    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.q.shape != self.v.shape or self.q.shape[0] != self.times.shape[0]:
            raise ValueError("inconsistent trajectory shapes")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @classmethod
    def from_states(cls, times, states, meta=None):
        states = np.asarray(states)
        n = states.shape[1] // 2
        return cls(times, states[:, :n], states[:, n:], dict(meta or {}))

    def __len__(self):
        return len(self.times)

    @property
    def T(self):
        return float(self.times[-1])

    def position(self, t):
        """Cubic Hermite interpolation of the configuration at times ``t``."""
        return kernel.hermite_interpolate(self.times, self.q, self.v, t)

    def until(self, t_end):
        """Samples with ``times <= t_end`` (``t_end`` must lie on the grid)."""
        k = int(np.searchsorted(self.times, t_end + 1e-12, side="right"))
        return Trajectory(self.times[:k], self.q[:k], self.v[:k], dict(self.meta))


@dataclass(frozen=True)
class LdaSolveResult:
    acceleration: np.ndarray
    multipliers: np.ndarray
    residual: float


def lda_rhs(sys, q, v, check=True, tol=1e-8):
    """Accelerations and multipliers of the Lagrange-d'Alembert equations.

    Solves ``[[g, A^T], [A, 0]] [qddot; -lambda] = [F; -(dA.v) v]`` with ``A``
    the constraint one-forms and ``F`` the Euler-Lagrange force of
    ``1/2 g(v, v) - V``.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    A, dA = sys.constraints.forms_jacobian(q)
    if check:
        viol = float(np.max(np.abs(A @ v)))
        if viol > tol:
            raise ConstraintViolated(f"velocity violates constraints by {viol:.3e}")
    G, dG = sys.metric.jacobian(q)
    n = sys.n
    dV = np.zeros(n)
    if sys.potential is not None:
        dV[: sys.m] = sys.potential.differential(q[: sys.m])
    acc, lam, residual, status = _fast.saddle_acceleration(
        np.ascontiguousarray(G), np.ascontiguousarray(dG), np.ascontiguousarray(A),
        np.ascontiguousarray(dA), v, dV, 1e-13)
    if status >= 0:
        raise SingularSaddle("constraint forms are rank deficient")
    return LdaSolveResult(acc, lam, residual)


def _mechanical_acc(G, dG, v, dV):
    return geodesic_acceleration(G, dG, v) - kernel.solve_linear(G, dV)


def _prepare_initial(sys, q0, v0, project_tol):
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    viol = sys.constraint_violation(q0, v0)
    if viol > 1e-8:
        if viol > project_tol:
            raise ConstraintViolated(f"initial velocity violates constraints by {viol:.3e}")
        log.warning("projecting initial velocity onto the constraints (violation %.2e)", viol)
        v0 = project_g(sys.metric, sys.constraints, q0, v0)
    return q0, v0


def integrate_nonholonomic(sys, q0, v0, T, stepper=kernel.OdeStepper(), project_tol=1e-6):
    """RK4 trajectory of the nonholonomic dynamics over ``[0, T]``."""
    q0, v0 = _prepare_initial(sys, q0, v0, project_tol)
    n = sys.n

    def f(y):
        return np.concatenate([y[n:], lda_rhs(sys, y[:n], y[n:], check=False).acceleration])

    times, states = kernel.integrate(f, np.concatenate([q0, v0]), T, stepper)
    return Trajectory.from_states(times, states, {
        "kind": "nonholonomic", "system": sys.name, "stepper": stepper.as_dict()})


def integrate_mechanical(metric, potential, q0, v0, T, stepper=kernel.OdeStepper(), label="mechanical"):
    """RK4 trajectory of ``L = 1/2 metric(v, v) - potential`` over ``[0, T]``."""
    q0 = np.asarray(q0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    n = len(q0)

    def f(y):
        q, v = y[:n], y[n:]
        G, dG = metric.jacobian(q)
        if potential is None:
            a, status = _fast.geodesic_acceleration(G, dG, v, 1e-13)
            if status >= 0:
                raise SingularMatrix("metric not invertible along the trajectory")
        else:
            a = _mechanical_acc(G, dG, v, potential.differential(q))
        return np.concatenate([v, a])

    times, states = kernel.integrate(f, np.concatenate([q0, v0]), T, stepper)
    return Trajectory.from_states(times, states, {
        "kind": label, "metric": metric.name, "stepper": stepper.as_dict()})


def integrate_geodesic(metric, q0, v0, T, stepper=kernel.OdeStepper()):
    """RK4 geodesic of ``metric`` over ``[0, T]``."""
    return integrate_mechanical(metric, None, q0, v0, T, stepper, label="geodesic")


@dataclass(frozen=True)
class TimeMap:
    """``tau(t) = int_0^t exp(phi(pi(c(s)))) ds`` sampled on the trajectory grid."""

    times: np.ndarray
    tau: np.ndarray
    rate: np.ndarray

    def __call__(self, t):
        out = kernel.hermite_interpolate(self.times, self.tau[:, None], self.rate[:, None], t)[:, 0]
        return out if np.ndim(t) else float(out[0])

    @property
    def strictly_increasing(self):
        return bool(np.all(np.diff(self.tau) > 0))


def time_map(sys, traj, phi="auto"):
    """Predicted reparametrization from nonholonomic time to geodesic time."""
    phi = phi if hasattr(phi, "evaluator") else phi_field(sys, phi)
    rate = np.exp(np.asarray(phi(traj.q[:, : sys.m]), dtype=float))
    dt = np.diff(traj.times)
    if np.max(np.abs(dt - dt.mean())) > 1e-9 * dt.mean():
        # non-uniform grid: composite Simpson inside each interval, with
        # sub-panels no wider than the smallest step; interior nodes come
        # from Hermite interpolation of the trajectory
        sub = 2 * np.ceil(dt / (2.0 * dt.min()) - 1e-9).astype(int)
        offsets = np.concatenate([[0], np.cumsum(sub - 1)])
        idx = np.repeat(np.arange(len(dt)), sub - 1)
        j = np.arange(idx.size) - offsets[idx] + 1
        inner_t = traj.times[idx] + dt[idx] * j / sub[idx]
        inner = np.exp(np.asarray(phi(traj.position(inner_t)[:, : sys.m]), dtype=float))
        w = np.where(j % 2 == 1, 4.0, 2.0) * (dt[idx] / (3.0 * sub[idx]))
        pieces = dt / (3.0 * sub) * (rate[:-1] + rate[1:]) + np.bincount(idx, w * inner, len(dt))
        tau = np.concatenate([[0.0], np.cumsum(pieces)])
    else:
        tau = kernel.cumulative_simpson(rate, dt.mean())
    return TimeMap(traj.times, tau, rate)

"""Chaplygin systems in a bundle-adapted chart.

The first ``m`` chart coordinates are base coordinates, the remaining
``n - m`` are fiber coordinates, and the bundle projection is truncation to
the base block.  The constraint distribution is the horizontal space of the
principal connection, so every base vector has a unique lift into it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fast, kernel
from .errors import NonClosedForm, NotPhiSimple, RankDeficient, SingularMatrix
from .geometry import Distribution, MetricField, ScalarField, project_g

__all__ = [
    "BundleSystem",
    "GyroscopicField",
    "horizontal_lift",
    "lift_matrix",
    "reduced_metric",
    "gyroscopic_tensor",
    "recover_dphi",
    "recover_phi",
    "phi_field",
    "canonical_metric",
    "principal_metric",
]


@dataclass(frozen=True)
class BundleSystem:
    """Chaplygin data: metric, constraint one-forms and base/fiber split.

    ``potential`` and ``analytic_phi`` live on the base (they take base
    points).  ``section_fiber`` fixes the fiber coordinates of the local
    section used to evaluate reduced quantities.
    """

    name: str
    n: int
    m: int
    metric: MetricField
    constraints: Distribution
    section_fiber: tuple
    potential: ScalarField | None = None
    analytic_phi: ScalarField | None = None
    sample_box: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 < self.m < self.n:
            raise ValueError(f"need 0 < m < n, got m={self.m}, n={self.n}")
        if self.constraints.k != self.m or not self.constraints.kernel_form:
            raise ValueError("constraints must be n-m one-forms annihilating a rank-m distribution")
        if len(self.section_fiber) != self.n - self.m:
            raise ValueError("section_fiber must have n-m entries")

    def project(self, q):
        return np.asarray(q)[..., : self.m]

    def section(self, qbar):
        qbar = np.asarray(qbar)
        fib = np.broadcast_to(np.asarray(self.section_fiber, dtype=qbar.dtype),
                              qbar.shape[:-1] + (self.n - self.m,))
        return np.concatenate([qbar, fib], axis=-1)

    def potential_on_q(self):
        """``V = Vbar o pi`` as a field on the total space, or None."""
        if self.potential is None:
            return None
        pot, m = self.potential, self.m
        return ScalarField(lambda q: pot.evaluator(q[..., :m]), self.n, pot.mode, "V")

    def constraint_violation(self, q, v):
        return self.constraints.violation(q, v)


@dataclass(frozen=True)
class GyroscopicField:
    """Coefficients ``C[c, a, b]`` of the gyroscopic tensor at a base point."""

    base_point: np.ndarray
    coefficients: np.ndarray

    def antisymmetry_defect(self):
        C = self.coefficients
        return float(np.max(np.abs(C + np.swapaxes(C, 1, 2))))


# --------------------------------------------------------------------------
# horizontal lifts and reduced metric
# --------------------------------------------------------------------------

def _fiber_block(sys, q):
    """Fiber components ``K`` of the lifts of the base coordinate fields.

    Solves ``A_f K = -A_b`` for the constraint matrix ``A = [A_b | A_f]``.
    """
    A = sys.constraints.forms_at(q)
    A = np.asarray(A)
    Ab, Af = A[..., : sys.m], A[..., sys.m:]
    if A.dtype != object and A.ndim == 3:
        # float batch: skip the generic solver's shape handling
        f = sys.n - sys.m
        x, status = _fast.lu_solve_batch(np.ascontiguousarray(Af), np.ascontiguousarray(Ab), 1e-13)
        if status >= 0:
            raise RankDeficient("constraint forms do not complement the vertical bundle")
        return -x.reshape(A.shape[0], f, sys.m)
    try:
        return -kernel.solve_linear(Af, Ab)
    except SingularMatrix as exc:
        raise RankDeficient("constraint forms do not complement the vertical bundle") from exc


def lift_matrix(sys, q):
    """``(..., n, m)`` matrix whose columns are the lifts of ``d/dqbar^a``."""
    q = np.asarray(q)
    K = _fiber_block(sys, q)
    top = np.broadcast_to(np.eye(sys.m), K.shape[:-2] + (sys.m, sys.m))
    if K.dtype == object:
        top = top.astype(object)
    return np.concatenate([top, K], axis=-2)


def horizontal_lift(sys, q, w):
    """Unique vector in the constraint distribution projecting to ``w``."""
    return lift_matrix(sys, np.asarray(q, dtype=float)) @ np.asarray(w, dtype=float)


def reduced_metric(sys, qbar, fiber=None):
    """``gbar_ab = g(X_a^h, X_b^h)`` evaluated on the section (or ``fiber``)."""
    qbar = np.asarray(qbar)
    if fiber is None:
        q = sys.section(qbar)
    else:
        q = np.concatenate([qbar, np.broadcast_to(fiber, qbar.shape[:-1] + (len(fiber),))], axis=-1)
    L = lift_matrix(sys, q)
    G = sys.metric(q)
    return np.swapaxes(L, -1, -2) @ G @ L


# --------------------------------------------------------------------------
# gyroscopic tensor and phi
# --------------------------------------------------------------------------

def gyroscopic_tensor(sys, qbar, fiber=None):
    """Coefficients of the projected bracket of lifted coordinate fields.

    Base coordinate fields commute, so ``C[:, a, b]`` is the base part of
    ``P[X_a^h, X_b^h]``.  Jacobians of the lift map come from the
    fourth-order stencil of the kernel.
    """
    qbar = np.asarray(qbar, dtype=float)
    fib = np.asarray(sys.section_fiber if fiber is None else fiber, dtype=float)
    q = np.concatenate([qbar, fib])
    L = lift_matrix(sys, q)
    dL = kernel.fd_jacobian(lambda p: lift_matrix(sys, p), q)  # (n, m, n)
    m = sys.m
    C = np.zeros((m, m, m))
    for a in range(m):
        for b in range(a + 1, m):
            bracket = dL[:, b, :] @ L[:, a] - dL[:, a, :] @ L[:, b]
            proj = project_g(sys.metric, sys.constraints, q, bracket)
            C[:, a, b] = proj[:m]
            C[:, b, a] = -proj[:m]
    return GyroscopicField(qbar, C)


def _phi_simple_pattern(dphi):
    m = len(dphi)
    eye = np.eye(m)
    # C[c, a, b] = d_b phi delta^c_a - d_a phi delta^c_b
    return np.einsum("b,ca->cab", dphi, eye) - np.einsum("a,cb->cab", dphi, eye)


def recover_dphi(gyro, threshold=1e-6):
    """Estimate ``dphi`` from a phi-simple gyroscopic tensor.

    Returns ``(dphi, residual)``; raises :class:`NotPhiSimple` when the
    coefficients deviate from the rebuilt pattern by more than ``threshold``.
    """
    C = np.asarray(gyro.coefficients)
    m = C.shape[0]
    if m < 2:
        raise ValueError("phi recovery needs a base of dimension >= 2")
    dphi = np.array([np.mean([C[a, a, b] for a in range(m) if a != b]) for b in range(m)])
    residual = float(np.max(np.abs(C - _phi_simple_pattern(dphi))))
    if residual > threshold:
        raise NotPhiSimple(residual, threshold)
    return dphi, residual


def _dphi_at(sys, qbar, threshold):
    return recover_dphi(gyroscopic_tensor(sys, qbar), threshold)[0]


def recover_phi(sys, qbar0, qbar, n_panels=64, threshold=1e-6, check_closed=True,
                curl_tol=1e-5):
    """Line integral of the recovered ``dphi`` along the segment ``qbar0 -> qbar``.

    The additive constant is pinned to ``analytic_phi(qbar0)`` when the system
    carries one, else to zero.
    """
    qbar0 = np.asarray(qbar0, dtype=float)
    qbar = np.asarray(qbar, dtype=float)
    phi0 = float(sys.analytic_phi(qbar0)) if sys.analytic_phi is not None else 0.0
    delta = qbar - qbar0
    if not np.any(delta):
        return phi0
    if check_closed:
        J = kernel.fd_jacobian(lambda p: _dphi_at(sys, p, threshold), qbar, batched=False)
        curl = float(np.max(np.abs(J - J.T)))
        if curl > curl_tol:
            raise NonClosedForm(f"recovered dphi has curl {curl:.3e} > {curl_tol:g}")
    integrand = lambda s: _dphi_at(sys, qbar0 + s * delta, threshold) @ delta
    return phi0 + kernel.simpson_integral(integrand, 0.0, 1.0, n_panels)


def phi_field(sys, source="auto", basepoint=None, **kwargs):
    """phi on the base as a :class:`ScalarField`.

    ``source`` is ``"analytic"``, ``"recovered"`` or ``"auto"`` (analytic when
    available).  The recovered field integrates from ``basepoint`` (default
    the origin of the base chart) and is not vectorized.
    """
    if source == "auto":
        source = "analytic" if sys.analytic_phi is not None else "recovered"
    if source == "analytic":
        if sys.analytic_phi is None:
            raise ValueError(f"system {sys.name} has no analytic phi")
        return sys.analytic_phi
    if source != "recovered":
        raise ValueError(f"unknown phi source {source!r}")
    q0 = np.zeros(sys.m) if basepoint is None else np.asarray(basepoint, dtype=float)

    def phi(qbar):
        qbar = np.asarray(qbar, dtype=float)
        flat = qbar.reshape(-1, sys.m)
        vals = [recover_phi(sys, q0, p, check_closed=False, **kwargs) for p in flat]
        return np.array(vals).reshape(qbar.shape[:-1])

    return ScalarField(phi, sys.m, "fd", "phi_recovered")


def canonical_metric(sys, phi="auto"):
    """``g_can = exp(2 phi) gbar`` on the base."""
    phi = phi if isinstance(phi, ScalarField) else phi_field(sys, phi)

    def g_can(qbar):
        return np.exp(2.0 * phi(qbar))[..., None, None] * reduced_metric(sys, qbar)

    return MetricField(g_can, sys.m, "fd", "g_can")


def principal_metric(sys, phi="auto", mode="fd"):
    """Metric ``h`` on the total space making ``pi`` a Riemannian submersion onto g_can.

    In the basis ``B = [lifts | fiber coordinate fields]`` the metric is
    ``blockdiag(g_can(pi q), g(q)|_vertical)``; in chart coordinates
    ``H = B^{-T} D B^{-1}``.  ``B`` is unit lower block-triangular,
    ``B^{-1} = [[I, 0], [-K, I]]``, which gives the blocks below.
    """
    phi = phi if isinstance(phi, ScalarField) else phi_field(sys, phi)
    m = sys.m

    n = sys.n
    fiber = np.asarray(sys.section_fiber, dtype=float)

    def h_object(q):
        # single point carrying dual numbers: plain object-array algebra
        K = _fiber_block(sys, q)
        Ks = _fiber_block(sys, sys.section(q[:m]))
        G = sys.metric(q)
        Gs = sys.metric(sys.section(q[:m]))
        f = n - m
        Ls = np.concatenate([np.eye(m, dtype=object), Ks], axis=0)
        gc = np.exp(2.0 * phi(q[:m])) * (Ls.T @ Gs @ Ls)
        N = np.concatenate([-K, np.eye(f, dtype=object)], axis=1)
        H = N.T @ G[m:, m:] @ N
        H[:m, :m] = H[:m, :m] + gc
        return H

    def h(q):
        if q.dtype == object:
            return h_object(q)
        shape = q.shape[:-1]
        q = q.reshape(-1, n)
        B = q.shape[0]
        # lifts and metric at q and at the section point, one batched call each
        qs = np.empty((2 * B, n))
        qs[:B] = q
        qs[B:, :m] = q[:, :m]
        qs[B:, m:] = fiber
        K = _fiber_block(sys, qs)
        G = np.ascontiguousarray(sys.metric(qs), dtype=float)
        e2phi = np.exp(2.0 * np.asarray(phi(q[:, :m]), dtype=float))
        H = _fast.principal_blocks(np.ascontiguousarray(K), G, e2phi, m)
        return H.reshape(shape + (n, n))

    return MetricField(h, sys.n, mode, "h")

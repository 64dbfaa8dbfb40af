"""Metric fields, distributions and the Levi-Civita machinery built on them."""

from __future__ import annotations

import numpy as np

from . import kernel
from .errors import RankDeficient, SingularMatrix

__all__ = [
    "Field",
    "MetricField",
    "ScalarField",
    "Distribution",
    "coords",
    "assemble",
    "christoffel",
    "geodesic_force",
    "geodesic_acceleration",
    "geodesic_rhs",
    "mechanical_rhs",
    "project_g",
    "grad",
    "curve_length",
    "kinetic_energy",
]


def coords(q):
    """Coordinate functions of a point or batch of points."""
    if q.dtype == object:
        return list(q)
    return [q[..., i] for i in range(q.shape[-1])]


def assemble(rows):
    """Build an ``(..., r, c)`` array from nested entries.

    Entries may be floats, arrays sharing a batch shape, or :class:`Dual`
    scalars (single-point evaluation, giving an object matrix).
    """
    first = rows[0][0]
    if isinstance(first, np.ndarray):
        try:
            out = np.array(rows, dtype=float)
        except ValueError:  # ragged: mixed scalars and batches
            pass
        else:
            nd = out.ndim
            return out.transpose(tuple(range(2, nd)) + (0, 1)) if nd > 2 else out
    flat = [e for row in rows for e in row]
    if any(isinstance(e, kernel.Dual) for e in flat):
        return np.array(rows, dtype=object)
    shape = np.broadcast_shapes(*(np.shape(e) for e in flat))
    out = np.empty(shape + (len(rows), len(rows[0])))
    for i, row in enumerate(rows):
        for j, e in enumerate(row):
            out[..., i, j] = e
    return out


class Field:
    """A smooth map on a chart, evaluated on points of shape ``(..., dim)``."""

    def __init__(self, evaluator, dim, mode="fd", name=None):
        if mode not in ("fd", "dual"):
            raise ValueError(f"mode must be 'fd' or 'dual', got {mode!r}")
        self.evaluator = evaluator
        self.dim = dim
        self.mode = mode
        self.name = name or getattr(evaluator, "__name__", "field")

    def __call__(self, q):
        q = np.asarray(q)
        if q.dtype != object:
            q = q.astype(float, copy=False)
        return self.evaluator(q)

    def jacobian(self, q):
        """Value and derivatives at one point; derivatives on the last axis."""
        return kernel.jacobian(self.evaluator, np.asarray(q, dtype=float), self.mode)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dim={self.dim}, mode={self.mode!r})"


class MetricField(Field):
    """Symmetric positive-definite matrix field."""

    def check(self, q, sym_tol=1e-12):
        G = np.asarray(self(q), dtype=float)
        scale = max(1.0, float(np.max(np.abs(G))))
        if np.max(np.abs(G - np.swapaxes(G, -1, -2))) > sym_tol * scale:
            raise ValueError(f"metric {self.name} not symmetric at {q}")
        try:
            np.linalg.cholesky(G)
        except np.linalg.LinAlgError as exc:
            raise ValueError(f"metric {self.name} not positive definite at {q}") from exc
        return G


class ScalarField(Field):
    """Real-valued field; ``differential`` returns ``df`` at a point."""

    def differential(self, q):
        return self.jacobian(q)[1]


def _complement(rows, n, tol=1e-10):
    """Orthonormal basis (as rows) of the Euclidean complement of ``rows``.

    Modified Gram-Schmidt with pivoting: at every stage the remaining vector
    of largest residual norm is taken next.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    basis = []
    pool = list(rows)
    for _ in range(len(rows)):
        res = [v - sum((v @ b) * b for b in basis) for v in pool]
        norms = [np.linalg.norm(r) for r in res]
        i = int(np.argmax(norms))
        if norms[i] <= tol * max(1.0, max(np.linalg.norm(v) for v in rows)):
            raise RankDeficient("spanning set is rank deficient")
        basis.append(res[i] / norms[i])
        pool.pop(i)
    k = len(basis)
    pool = list(np.eye(n))
    out = []
    for _ in range(n - k):
        res = [v - sum((v @ b) * b for b in basis + out) for v in pool]
        norms = [np.linalg.norm(r) for r in res]
        i = int(np.argmax(norms))
        out.append(res[i] / norms[i])
        pool.pop(i)
    return np.array(out).reshape(n - k, n)


class Distribution:
    """Rank-``k`` distribution on an ``n``-dimensional chart.

    Give either ``forms`` (evaluator returning the ``(n-k, n)`` matrix of
    annihilating one-forms, rows ``mu^a``) or ``span`` (evaluator returning an
    ``(n, k)`` matrix whose columns span the distribution).
    """

    def __init__(self, n, k, forms=None, span=None, mode="fd"):
        if (forms is None) == (span is None):
            raise ValueError("give exactly one of forms= or span=")
        self.n, self.k = n, k
        self._forms = Field(forms, n, mode, "forms") if forms is not None else None
        self._span = Field(span, n, mode, "span") if span is not None else None
        self.mode = mode

    @property
    def kernel_form(self):
        return self._forms is not None

    def forms_at(self, q):
        if self._forms is not None:
            return self._forms(q)
        return _complement(np.asarray(self._span(q)).T, self.n)

    def span_at(self, q):
        if self._span is not None:
            return self._span(q)
        return _complement(np.asarray(self._forms(q)), self.n).T

    def forms_jacobian(self, q):
        if self._forms is None:
            raise TypeError("distribution was given in span form")
        return self._forms.jacobian(q)

    def violation(self, q, v):
        """Max |mu^a(v)|."""
        return float(np.max(np.abs(np.asarray(self.forms_at(q)) @ v))) if self.k < self.n else 0.0


# --------------------------------------------------------------------------
# Levi-Civita data
# --------------------------------------------------------------------------

def _inv_apply(G, w):
    try:
        return np.linalg.solve(G, w)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("metric not invertible") from exc


def christoffel(metric, q):
    """Christoffel symbols ``Gamma[k, i, j]`` of the Levi-Civita connection."""
    G, dG = metric.jacobian(q)  # dG[i, j, l] = d_l g_ij
    # first-kind symbols [ij, l] = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    first = 0.5 * (np.einsum("jli->ijl", dG) + np.einsum("ilj->ijl", dG) - dG)
    return _inv_apply(G, first.reshape(-1, G.shape[0]).T).T.reshape(first.shape).transpose(2, 0, 1)


def geodesic_force(dG, v):
    """``g(Gamma(v, v), .)``, the lowered Christoffel contraction."""
    dGv = dG @ v  # directional derivative of g along v
    return dGv @ v - 0.5 * np.einsum("ijl,i,j->l", dG, v, v)


def geodesic_acceleration(G, dG, v):
    """``-Gamma(v, v)`` from the metric and its derivatives at one point."""
    return -_inv_apply(G, geodesic_force(dG, v))


def geodesic_rhs(metric, q, v):
    """``(qdot, qddot)`` of the geodesic spray."""
    v = np.asarray(v, dtype=float)
    G, dG = metric.jacobian(q)
    return v.copy(), geodesic_acceleration(G, dG, v)


def mechanical_rhs(metric, potential, q, v):
    """``(qdot, qddot)`` for ``L = 1/2 g(v, v) - V``."""
    v = np.asarray(v, dtype=float)
    G, dG = metric.jacobian(q)
    a = geodesic_acceleration(G, dG, v)
    if potential is not None:
        a = a - _inv_apply(G, potential.differential(q))
    return v.copy(), a


def project_g(metric, dist, q, v):
    """g-orthogonal projection of ``v`` onto the distribution at ``q``."""
    G = np.asarray(metric(q), dtype=float)
    S = np.asarray(dist.span_at(q), dtype=float)
    gram = S.T @ G @ S
    try:
        c = kernel.solve_linear(gram, S.T @ G @ np.asarray(v, dtype=float))
    except SingularMatrix as exc:
        raise RankDeficient("Gram matrix of spanning fields is singular") from exc
    return S @ c


def grad(metric, f, q):
    """Metric gradient ``g^{-1} df``."""
    G = np.asarray(metric(q), dtype=float)
    return kernel.solve_linear(G, f.differential(q))


def kinetic_energy(metric, q, v):
    G = np.asarray(metric(q), dtype=float)
    return 0.5 * np.einsum("...i,...ij,...j->...", v, G, v)


def curve_length(metric, traj):
    """Riemannian length of a sampled curve by composite Simpson.

    ``traj`` needs ``times``, ``q`` and ``v`` arrays.  Non-uniform samples or
    an odd panel count are resampled by cubic Hermite interpolation onto a
    uniform grid with an even number of panels.
    """
    t, q, v = np.asarray(traj.times), np.asarray(traj.q), np.asarray(traj.v)
    if len(t) < 2 or t[-1] == t[0]:
        return 0.0
    dt = np.diff(t)
    panels = len(t) - 1
    if panels % 2 or np.max(np.abs(dt - dt.mean())) > 1e-9 * dt.mean():
        panels += panels % 2
        grid = np.linspace(t[0], t[-1], panels + 1)
        v_new = _hermite_velocity(t, q, v, grid)
        q = kernel.hermite_interpolate(t, q, v, grid)
        v = v_new
        t = grid
    G = np.asarray(metric(q), dtype=float)
    speed = np.sqrt(np.maximum(np.einsum("ki,kij,kj->k", v, G, v), 0.0))
    return float(kernel.simpson_samples(speed, (t[-1] - t[0]) / panels))


def _hermite_velocity(t, q, v, grid):
    # velocity is itself sampled; interpolate it with finite-difference slopes
    slopes = np.gradient(v, t, axis=0, edge_order=2)
    return kernel.hermite_interpolate(t, v, slopes, grid)

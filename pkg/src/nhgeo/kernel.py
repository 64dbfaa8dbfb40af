"""Small numerical kernel: dual numbers, finite differences, pivoted
elimination, composite Simpson quadrature and Runge-Kutta stepping.

Every field evaluated by this package is a callable taking chart points of
shape ``(..., n)``.  Floating point batches are evaluated in one call (that is
how the finite-difference stencils stay cheap); a single point made of
:class:`Dual` entries is passed as a 1-D object array.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _fast
from .errors import EvaluationFailure, NonFiniteState, SingularMatrix

__all__ = [
    "Dual",
    "differentiate",
    "jacobian",
    "fd_jacobian",
    "dual_jacobian",
    "fd_step",
    "solve_linear",
    "rk4_step",
    "OdeStepper",
    "integrate",
    "simpson_integral",
    "simpson_samples",
    "cumulative_simpson",
    "hermite_interpolate",
]


# --------------------------------------------------------------------------
# dual numbers
# --------------------------------------------------------------------------

class Dual:
    """First-order dual number ``value + derivative * eps``.

    ``derivative`` may be a float (one seeded direction) or a 1-D array, in
    which case one evaluation carries a whole gradient.  numpy dispatches
    ``np.sin`` and friends on object arrays to the methods below, so field
    evaluators written with numpy work unchanged on dual inputs.
    """

    __slots__ = ("value", "derivative")

    def __init__(self, value, derivative=0.0):
        self.value = float(value)
        self.derivative = derivative

    def __repr__(self):
        return f"Dual({self.value!r}, {self.derivative!r})"

    # arithmetic ----------------------------------------------------------
    def __add__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented  # let numpy broadcast elementwise
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.derivative + other.derivative)
        return Dual(self.value + other, self.derivative)

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented  # let numpy broadcast elementwise
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.derivative - other.derivative)
        return Dual(self.value - other, self.derivative)

    def __rsub__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented  # let numpy broadcast elementwise
        return Dual(other - self.value, -self.derivative)

    def __mul__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented  # let numpy broadcast elementwise
        if isinstance(other, Dual):
            return Dual(self.value * other.value,
                        self.derivative * other.value + self.value * other.derivative)
        return Dual(self.value * other, self.derivative * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented  # let numpy broadcast elementwise
        if isinstance(other, Dual):
            inv = 1.0 / other.value
            return Dual(self.value * inv,
                        (self.derivative * other.value - self.value * other.derivative) * inv * inv)
        return Dual(self.value / other, self.derivative / other)

    def __rtruediv__(self, other):
        if type(other) is np.ndarray:
            return NotImplemented  # let numpy broadcast elementwise
        inv = 1.0 / self.value
        return Dual(other * inv, -other * self.derivative * inv * inv)

    def __neg__(self):
        return Dual(-self.value, -self.derivative)

    def __pos__(self):
        return self

    def __pow__(self, p):
        if isinstance(p, Dual):
            return (self.log() * p).exp()
        if p == 2:
            return Dual(self.value * self.value, 2.0 * self.value * self.derivative)
        return Dual(self.value ** p, p * self.value ** (p - 1) * self.derivative)

    def __rpow__(self, base):
        return (self * math.log(base)).exp()

    def __abs__(self):
        return -self if self.value < 0 else self

    # comparisons act on the value only (needed for pivoting)
    def __lt__(self, other):
        return self.value < _val(other)

    def __gt__(self, other):
        return self.value > _val(other)

    def __le__(self, other):
        return self.value <= _val(other)

    def __ge__(self, other):
        return self.value >= _val(other)

    def __float__(self):
        return self.value

    # elementary functions, called by numpy ufuncs on object arrays --------
    def sin(self):
        return Dual(math.sin(self.value), math.cos(self.value) * self.derivative)

    def cos(self):
        return Dual(math.cos(self.value), -math.sin(self.value) * self.derivative)

    def tan(self):
        c = math.cos(self.value)
        return Dual(math.tan(self.value), self.derivative / (c * c))

    def exp(self):
        e = math.exp(self.value)
        return Dual(e, e * self.derivative)

    def log(self):
        return Dual(math.log(self.value), self.derivative / self.value)

    def sqrt(self):
        s = math.sqrt(self.value)
        return Dual(s, self.derivative / (2.0 * s))

    def arctan(self):
        return Dual(math.atan(self.value), self.derivative / (1.0 + self.value * self.value))

    def arcsinh(self):
        return Dual(math.asinh(self.value),
                    self.derivative / math.sqrt(1.0 + self.value * self.value))

    def square(self):
        return self * self


def _val(x):
    return x.value if isinstance(x, Dual) else x


def _has_dual(arr):
    return isinstance(arr, Dual) or (
        isinstance(arr, np.ndarray) and arr.dtype == object
        and any(isinstance(e, Dual) for e in arr.flat))


def _payload(e, zero):
    if type(e) is not Dual:
        return zero
    d = e.derivative
    if type(d) is np.ndarray and d.shape == zero.shape:
        return d
    return zero + d


def _split_dual(out, n):
    """Split an evaluator output made of duals/floats into (value, derivative)."""
    out = np.asarray(out, dtype=object)
    flat = out.ravel().tolist()
    zero = np.zeros(n)
    val = np.array([e.value if type(e) is Dual else float(e) for e in flat])
    der = np.array([_payload(e, zero) for e in flat], dtype=float)
    return val.reshape(out.shape), der.reshape(out.shape + (n,))


# --------------------------------------------------------------------------
# differentiation
# --------------------------------------------------------------------------

_STENCIL = np.array([-2.0, -1.0, 1.0, 2.0])


def fd_step(x):
    """Stencil spacing 1e-3*(1+|x|), elementwise."""
    return 1e-3 * (1.0 + np.abs(x))


_QUIET = [0]  # >0 while an integrator already suppresses floating-point warnings


def _checked(f, pts):
    try:
        if _QUIET[0]:
            out = np.asarray(f(pts), dtype=float)
        else:
            with np.errstate(all="ignore"):
                out = np.asarray(f(pts), dtype=float)
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        raise EvaluationFailure(f"field not evaluable near {pts!r}: {exc}") from exc
    # a single reduction flags any nan or inf (huge finite values may also trip it)
    if not math.isfinite(float(out.sum())):
        if not np.all(np.isfinite(out)):
            raise EvaluationFailure("field returned non-finite values on the stencil")
    return out


def fd_jacobian(f, q, batched=True):
    """Fourth-order central differences of a vectorized field.

    Returns an array of shape ``f(q).shape + (n,)`` whose last axis indexes
    the coordinate of differentiation.  ``batched`` says whether ``f``
    accepts a stack of points; a stack of base points ``q`` is handled one
    point at a time so each keeps its own step.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim > 1:
        parts = [fd_jacobian(f, p, batched) for p in q.reshape(-1, q.shape[-1])]
        return np.stack(parts).reshape(q.shape[:-1] + parts[0].shape)
    n = q.shape[-1]
    h = fd_step(q)
    flat = q + _offsets(n)[1:] * h
    if batched:
        vals = _checked(f, flat)
    else:
        vals = np.stack([_checked(f, p) for p in flat])
    return _combine(vals, h)


def dual_jacobian(f, q):
    """Exact Jacobian of an analytic field via one vector-seeded dual pass.

    Returns ``(value, jacobian)``.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    eye = np.eye(n)
    qd = np.empty(n, dtype=object)
    for i in range(n):
        qd[i] = Dual(q[i], eye[i])
    try:
        out = f(qd)
    except (ValueError, ZeroDivisionError, ArithmeticError) as exc:
        raise EvaluationFailure(f"field not evaluable at {q!r}: {exc}") from exc
    return _split_dual(out, n)


def jacobian(f, q, mode="fd", batched=True):
    """``(f(q), df(q))`` with derivatives stacked on the trailing axis."""
    if mode == "dual":
        return dual_jacobian(f, q)
    if mode != "fd":
        raise ValueError(f"unknown differentiation mode {mode!r}")
    q = np.asarray(q, dtype=float)
    if not batched:
        return _checked(f, q), fd_jacobian(f, q, batched=False)
    if q.ndim > 1:
        pairs = [jacobian(f, p) for p in q.reshape(-1, q.shape[-1])]
        lead = q.shape[:-1]
        return (np.stack([a for a, _ in pairs]).reshape(lead + pairs[0][0].shape),
                np.stack([b for _, b in pairs]).reshape(lead + pairs[0][1].shape))
    # one batched call for the centre and the whole stencil
    n = q.shape[-1]
    h = fd_step(q)
    vals = _checked(f, q + _offsets(n) * h)
    return vals[0], _combine(vals[1:], h)


_OFFSETS = {}


def _offsets(n):
    """Unit stencil offsets: a zero row, then 4 rows per coordinate."""
    off = _OFFSETS.get(n)
    if off is None:
        off = np.zeros((4 * n + 1, n))
        for i in range(n):
            off[1 + 4 * i: 5 + 4 * i, i] = _STENCIL
        _OFFSETS[n] = off
    return off


def _combine(vals, h):
    n = h.shape[0]
    out_shape = vals.shape[1:]
    flat = np.ascontiguousarray(vals).reshape(n, 4, -1)
    return _fast.fd_combine(flat, h).reshape(out_shape + (n,))


def differentiate(f, q, axis=0, mode="dual"):
    """Partial derivative of ``f`` at ``q`` along coordinate ``axis``.

    ``q`` may be a float (then ``f`` is a function of one real and ``axis``
    is ignored) or a point array.  The dual path is exact for analytic
    inputs; the finite-difference path uses the 4th-order central stencil.
    """
    scalar = np.isscalar(q) or np.ndim(q) == 0
    if mode == "dual":
        if scalar:
            out = f(Dual(float(q), 1.0))
        else:
            q = np.asarray(q, dtype=float)
            qd = np.array([Dual(x, 1.0 if i == axis else 0.0) for i, x in enumerate(q)],
                          dtype=object)
            out = f(qd)
        val, der = _split_dual(out, 1)
        d = der[..., 0]
        return float(d) if d.ndim == 0 else d
    if mode != "fd":
        raise ValueError(f"unknown differentiation mode {mode!r}")
    if scalar:
        x = float(q)
        h = float(fd_step(x))
        vals = [_checked(f, x + s * h) for s in _STENCIL]
    else:
        q = np.asarray(q, dtype=float)
        h = float(fd_step(q[axis]))
        vals = []
        for s in _STENCIL:
            p = q.copy()
            p[axis] += s * h
            vals.append(_checked(f, p))
    # grouped so that constant fields give exactly zero
    d = (vals[0] - vals[3] + 8.0 * (vals[2] - vals[1])) / (12.0 * h)
    return float(d) if np.ndim(d) == 0 else d


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------

def _mag(a):
    if a.dtype == object:
        return np.vectorize(lambda e: abs(_val(e)), otypes=[float])(a)
    return np.abs(a)


def _solve_small(M, B, rtol):
    # list-based elimination; faster than array ops for a single k <= 10 system
    k = len(M)
    r = len(B[0])
    rows = [list(M[i]) + list(B[i]) for i in range(k)]
    scale = [max(abs(_val(e)) for e in row[:k]) for row in rows]
    if min(scale) == 0.0:
        raise SingularMatrix("matrix has a zero row")
    for col in range(k):
        p = max(range(col, k), key=lambda i: abs(_val(rows[i][col])) / scale[i])
        if p != col:
            rows[col], rows[p] = rows[p], rows[col]
            scale[col], scale[p] = scale[p], scale[col]
        pivrow = rows[col]
        piv = pivrow[col]
        if abs(_val(piv)) < rtol * scale[col]:
            raise SingularMatrix(f"pivot below {rtol:g} x row scale in column {col}")
        for i in range(col + 1, k):
            row = rows[i]
            f = row[col] / piv
            if _val(f) != 0.0 or isinstance(f, Dual):
                for j in range(col + 1, k + r):
                    row[j] = row[j] - f * pivrow[j]
    x = [[0.0] * r for _ in range(k)]
    for i in range(k - 1, -1, -1):
        row = rows[i]
        for c in range(r):
            acc = row[k + c]
            for j in range(i + 1, k):
                acc = acc - row[j] * x[j][c]
            x[i][c] = acc / row[i]
    return x


def solve_linear(A, b, rtol=1e-13):
    """Gaussian elimination with partial pivoting.

    ``A`` has shape ``(..., k, k)`` and ``b`` shape ``(..., k)`` or
    ``(..., k, r)``; leading axes are solved independently.  Object arrays of
    :class:`Dual` are supported, which keeps solves transparent to forward
    differentiation.  Raises :class:`SingularMatrix` when a pivot falls below
    ``rtol`` times the scale of its original row.
    """
    A = np.asarray(A)
    b = np.asarray(b)
    dtype = object if (A.dtype == object or b.dtype == object) else float
    if A.shape[-1] != A.shape[-2]:
        raise ValueError(f"matrix must be square, got {A.shape[-2:]}")
    k = A.shape[-1]
    vector = b.ndim == A.ndim - 1
    if vector:
        b = b[..., None]
    if b.shape[-2] != k:
        raise ValueError(f"right-hand side length {b.shape[-2]} does not match {k}")
    if A.shape[:-2] == b.shape[:-2]:
        batch = A.shape[:-2]
    else:
        batch = np.broadcast_shapes(A.shape[:-2], b.shape[:-2])
        A = np.broadcast_to(A, batch + A.shape[-2:])
        b = np.broadcast_to(b, batch + b.shape[-2:])
    if dtype is float:
        Ms = np.ascontiguousarray(A, dtype=float)
        Bs = np.ascontiguousarray(b, dtype=float)
        x, status = _fast.lu_solve_batch(Ms.reshape(-1, k, k), Bs.reshape(-1, k, b.shape[-1]), rtol)
        if status >= 0:
            raise SingularMatrix(f"pivot below {rtol:g} x row scale in column {status}")
        x = x.reshape(batch + (k, b.shape[-1]))
        return x[..., 0] if vector else x
    if batch == ():
        x = np.array(_solve_small(A.tolist(), b.tolist(), rtol), dtype=object)
        return x[:, 0] if vector else x
    M = np.concatenate([np.broadcast_to(A, batch + A.shape[-2:]),
                        np.broadcast_to(b, batch + b.shape[-2:])], axis=-1).astype(dtype)
    M = M.reshape((-1,) + M.shape[-2:])
    N = M.shape[0]
    scale = _mag(M[:, :, :k]).max(axis=-1)
    if np.any(scale == 0.0):
        raise SingularMatrix("matrix has a zero row")
    rows = np.arange(N)
    for col in range(k):
        mag = _mag(M[:, col:, col]) / scale[:, col:]
        p = col + np.argmax(mag, axis=-1)
        if np.any(p != col):
            top = M[rows, col].copy()
            M[rows, col] = M[rows, p]
            M[rows, p] = top
            s = scale[rows, col].copy()
            scale[rows, col] = scale[rows, p]
            scale[rows, p] = s
        piv = M[:, col, col]
        if np.any(_mag(piv) < rtol * scale[:, col]):
            raise SingularMatrix(f"pivot below {rtol:g} x row scale in column {col}")
        if col + 1 < k:
            factors = M[:, col + 1:, col] / piv[:, None]
            M[:, col + 1:, col:] -= factors[:, :, None] * M[:, None, col, col:]
    x = M[:, :, k:].copy()
    for row in range(k - 1, -1, -1):
        acc = x[:, row]
        if row + 1 < k:
            acc = acc - (M[:, row, row + 1:k, None] * x[:, row + 1:]).sum(axis=1)
        x[:, row] = acc / M[:, row, row][:, None]
    x = x.reshape(batch + (k, x.shape[-1]))
    return x[..., 0] if vector else x


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

def simpson_integral(f, a, b, n_panels=64):
    """Composite Simpson rule for a function of one real."""
    if n_panels < 2 or n_panels % 2:
        raise ValueError(f"n_panels must be even and >= 2, got {n_panels}")
    if a == b:
        return 0.0
    x = np.linspace(a, b, n_panels + 1)
    y = np.array([f(xi) for xi in x], dtype=float)
    return simpson_samples(y, (b - a) / n_panels)


def simpson_samples(y, dx):
    """Composite Simpson over equally spaced samples along axis 0.

    An odd number of panels is handled with a 3/8 rule on the last three.
    """
    y = np.asarray(y, dtype=float)
    panels = y.shape[0] - 1
    if panels == 0:
        return np.zeros(y.shape[1:]) if y.ndim > 1 else 0.0
    if panels == 1:
        return 0.5 * dx * (y[0] + y[1])
    if panels % 2 == 0:
        return dx / 3.0 * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum(axis=0) + 2.0 * y[2:-1:2].sum(axis=0))
    head = simpson_samples(y[:-3], dx) if panels > 3 else 0.0
    tail = 3.0 * dx / 8.0 * (y[-4] + 3.0 * y[-3] + 3.0 * y[-2] + y[-1])
    return head + tail


def cumulative_simpson(y, dx):
    """Running integral ``I[k] = int_0^{t_k} y`` on an equally spaced grid.

    Even nodes use composite Simpson; each odd node adds the quadratic
    interpolant over its first half-panel, keeping fourth-order accuracy.
    """
    y = np.asarray(y, dtype=float)
    N = y.shape[0]
    out = np.zeros(N)
    if N == 1:
        return out
    if N == 2:
        out[1] = 0.5 * dx * (y[0] + y[1])
        return out
    pairs = dx / 3.0 * (y[0:-2:2] + 4.0 * y[1:-1:2] + y[2::2])
    out[2::2] = np.cumsum(pairs)
    # first half of the panel [t_{k-1}, t_{k+1}] from the quadratic through it
    k = np.arange(1, N - 1, 2)
    out[k] = out[k - 1] + dx / 12.0 * (5.0 * y[k - 1] + 8.0 * y[k] - y[k + 1])
    if N % 2 == 0:
        # last node is odd with no right neighbour: back half of the last panel
        j = N - 1
        out[j] = out[j - 1] + dx / 12.0 * (-y[j - 2] + 8.0 * y[j - 1] + 5.0 * y[j])
    return out


# --------------------------------------------------------------------------
# interpolation
# --------------------------------------------------------------------------

def hermite_interpolate(times, values, slopes, t):
    """Piecewise cubic Hermite interpolation of sampled values and slopes."""
    times = np.asarray(times, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < times[0] - 1e-12) or np.any(t > times[-1] + 1e-12):
        raise ValueError("query time outside the sampled interval")
    i = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
    h = times[i + 1] - times[i]
    s = ((t - times[i]) / h)[:, None]
    h = h[:, None]
    s2, s3 = s * s, s * s * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    return (h00 * values[i] + h10 * h * slopes[i]
            + h01 * values[i + 1] + h11 * h * slopes[i + 1])


# --------------------------------------------------------------------------
# Runge-Kutta
# --------------------------------------------------------------------------

def _finite(k, stage):
    if not math.isfinite(float(k.sum())):
        raise NonFiniteState(f"non-finite derivative in RK4 stage {stage}")
    return k


def rk4_step(f, y, dt):
    """One classical fourth-order Runge-Kutta step of ``y' = f(y)``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    y = np.asarray(y, dtype=float)
    k1 = _finite(f(y), 1)
    k2 = _finite(f(y + 0.5 * dt * k1), 2)
    k3 = _finite(f(y + 0.5 * dt * k2), 3)
    k4 = _finite(f(y + dt * k3), 4)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class OdeStepper:
    """Integration settings: ``rk4`` (fixed step) or ``rk4-doubling``."""

    method: str = "rk4"
    step: float = 1e-3
    tolerance: float = 1e-10

    def __post_init__(self):
        if self.method not in ("rk4", "rk4-doubling"):
            raise ValueError(f"unknown stepper method {self.method!r}")
        if not self.step > 0:
            raise ValueError("step must be positive")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def as_dict(self):
        return {"method": self.method, "step": self.step, "tolerance": self.tolerance}


def integrate(f, y0, T, stepper=OdeStepper()):
    """Integrate ``y' = f(y)`` over ``[0, T]``; returns ``(times, states)``."""
    y = np.asarray(y0, dtype=float).copy()
    if T <= 0:
        return np.zeros(1), y[None, :]
    _QUIET[0] += 1
    try:
        with np.errstate(all="ignore"):
            return _integrate(f, y, T, stepper)
    finally:
        _QUIET[0] -= 1


def _integrate(f, y, T, stepper):
    if stepper.method == "rk4":
        n = max(1, int(math.ceil(T / stepper.step - 1e-9)))
        times = np.minimum(np.arange(n + 1) * stepper.step, T)
        times[-1] = T
        states = np.empty((n + 1, y.size))
        states[0] = y
        for i in range(n):
            y = rk4_step(f, y, times[i + 1] - times[i])
            states[i + 1] = y
        return times, states
    return _integrate_doubling(f, y, T, stepper)


def _integrate_doubling(f, y, T, stepper):
    t, dt, tol = 0.0, stepper.step, stepper.tolerance
    times, states = [0.0], [y.copy()]
    while t < T - 1e-14:
        dt = min(dt, T - t)
        big = rk4_step(f, y, dt)
        half = rk4_step(f, rk4_step(f, y, 0.5 * dt), 0.5 * dt)
        err = np.max(np.abs(half - big)) / 15.0
        if err <= tol or dt < 1e-12:
            t += dt
            y = half
            times.append(t)
            states.append(y.copy())
        factor = 4.0 if err == 0 else min(4.0, max(0.1, 0.9 * (tol / err) ** 0.2))
        dt *= factor
    return np.array(times), np.array(states)

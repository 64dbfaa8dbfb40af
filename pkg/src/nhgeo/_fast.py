"""Compiled small dense kernels for the float hot paths.

Every routine here has a plain-numpy counterpart elsewhere in the package
and is only used on float arrays.  Status codes replace exceptions: a
negative status means success, otherwise it is the failing column.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _lu_solve_into(M, B, rtol, X):
    k = M.shape[0]
    r = B.shape[1]
    W = np.empty((k, k + r))
    scale = np.empty(k)
    for i in range(k):
        s = 0.0
        for j in range(k):
            W[i, j] = M[i, j]
            a = abs(M[i, j])
            if a > s:
                s = a
        for j in range(r):
            W[i, k + j] = B[i, j]
        scale[i] = s
        if s == 0.0:
            return 0
    for col in range(k):
        p = col
        best = -1.0
        for i in range(col, k):
            mag = abs(W[i, col]) / scale[i]
            if mag > best:
                p = i
                best = mag
        if p != col:
            for j in range(k + r):
                t = W[col, j]
                W[col, j] = W[p, j]
                W[p, j] = t
            t = scale[col]
            scale[col] = scale[p]
            scale[p] = t
        piv = W[col, col]
        if abs(piv) < rtol * scale[col]:
            return col
        for i in range(col + 1, k):
            f = W[i, col] / piv
            if f != 0.0:
                for j in range(col + 1, k + r):
                    W[i, j] -= f * W[col, j]
    for i in range(k - 1, -1, -1):
        for c in range(r):
            acc = W[i, k + c]
            for j in range(i + 1, k):
                acc -= W[i, j] * X[j, c]
            X[i, c] = acc / W[i, i]
    return -1


@njit(cache=True)
def lu_solve_batch(M, B, rtol):
    """Solve ``M[p] X[p] = B[p]`` for stacks ``(P, k, k)`` and ``(P, k, r)``."""
    P, k, r = B.shape[0], B.shape[1], B.shape[2]
    X = np.empty((P, k, r))
    for p in range(P):
        status = _lu_solve_into(M[p], B[p], rtol, X[p])
        if status >= 0:
            return X, status
    return X, -1


@njit(cache=True)
def geodesic_force(dG, v):
    """Lowered Christoffel contraction ``(d_l g_ij - 1/2 d_i g_jl) v^j v^l``."""
    n = v.shape[0]
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for j in range(n):
            for l in range(n):
                s += (dG[i, j, l] - 0.5 * dG[j, l, i]) * v[j] * v[l]
        out[i] = s
    return out


@njit(cache=True)
def saddle_acceleration(G, dG, A, dA, v, dV, rtol):
    """Accelerations and multipliers of the constrained Euler-Lagrange system."""
    n = G.shape[0]
    k = A.shape[0]
    S = np.zeros((n + k, n + k))
    rhs = np.zeros((n + k, 1))
    F = geodesic_force(dG, v)
    for i in range(n):
        for j in range(n):
            S[i, j] = G[i, j]
        rhs[i, 0] = -F[i] - dV[i]
    curv = np.zeros(k)
    for a in range(k):
        for i in range(n):
            S[i, n + a] = A[a, i]
            S[n + a, i] = A[a, i]
        s = 0.0
        for i in range(n):
            for l in range(n):
                s += dA[a, i, l] * v[l] * v[i]
        curv[a] = s
        rhs[n + a, 0] = -s
    X = np.empty((n + k, 1))
    status = _lu_solve_into(S, rhs, rtol, X)
    acc = X[:n, 0].copy()
    lam = np.empty(k)
    res = 0.0
    for a in range(k):
        lam[a] = -X[n + a, 0]
        s = curv[a]
        for i in range(n):
            s += A[a, i] * acc[i]
        if abs(s) > res:
            res = abs(s)
    return acc, lam, res, status


@njit(cache=True)
def geodesic_acceleration(G, dG, v, rtol):
    n = v.shape[0]
    F = geodesic_force(dG, v)
    rhs = np.empty((n, 1))
    for i in range(n):
        rhs[i, 0] = -F[i]
    X = np.empty((n, 1))
    status = _lu_solve_into(G, rhs, rtol, X)
    return X[:, 0].copy(), status


@njit(cache=True)
def principal_blocks(K, G, e2phi, m):
    """Principal metric from lifts and metric at ``q`` (first half of the
    batch) and at the section point (second half)."""
    B = K.shape[0] // 2
    n = G.shape[1]
    f = n - m
    H = np.zeros((B, n, n))
    for p in range(B):
        Kq = K[p]
        Ks = K[B + p]
        Gq = G[p]
        Gs = G[B + p]
        # reduced metric L^T g L at the section, L = [I; K]
        for a in range(m):
            for b in range(a, m):
                s = Gs[a, b]
                for u in range(f):
                    s += Gs[a, m + u] * Ks[u, b] + Gs[b, m + u] * Ks[u, a]
                    for w in range(f):
                        s += Ks[u, a] * Gs[m + u, m + w] * Ks[w, b]
                s *= e2phi[p]
                H[p, a, b] = s
                H[p, b, a] = s
        # vertical part N^T Gv N, N = [-K, I]
        for a in range(m):
            for b in range(a, m):
                s = 0.0
                for u in range(f):
                    for w in range(f):
                        s += Kq[u, a] * Gq[m + u, m + w] * Kq[w, b]
                H[p, a, b] += s
                if b != a:
                    H[p, b, a] += s
            for w in range(f):
                s = 0.0
                for u in range(f):
                    s -= Kq[u, a] * Gq[m + u, m + w]
                H[p, a, m + w] = s
                H[p, m + w, a] = s
        for u in range(f):
            for w in range(f):
                H[p, m + u, m + w] = Gq[m + u, m + w]
    return H


@njit(cache=True)
def fd_combine(vals, h):
    """Fourth-order central differences from stencil values ``(n, 4, P)``;
    returns ``(P, n)``."""
    n, P = vals.shape[0], vals.shape[2]
    out = np.empty((P, n))
    for i in range(n):
        inv = 1.0 / (12.0 * h[i])
        for p in range(P):
            out[p, i] = (vals[i, 0, p] - vals[i, 3, p] + 8.0 * (vals[i, 2, p] - vals[i, 1, p])) * inv
    return out

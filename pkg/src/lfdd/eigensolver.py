"""Dense symmetric eigensolver: Householder tridiagonalization + implicit QL.

Sized for desk-scale problems (a few hundred unknowns per block).  The
eigenvector updates are vectorized with numpy; the QL sweep itself is a
plain loop over the tridiagonal entries.
"""
from __future__ import annotations

import math

import numpy as np


class EigenError(ValueError):
    pass


def tridiagonalize(a):
    """Reduce symmetric ``a`` to tridiagonal form, ``a = q @ T @ q.T``.

    Returns
    -------
    d, e : ndarray
        Diagonal and sub-diagonal of ``T`` (``e[i]`` couples rows i and i+1,
        ``e[-1] = 0``).
    q : ndarray
        Orthogonal transformation.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = a[k + 1:, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0 or np.all(x[1:] == 0.0):
            continue
        u = x.copy()
        u[0] += math.copysign(alpha, x[0])
        u /= np.linalg.norm(u)
        # a <- H a H with H = I - 2 u u^T acting on rows/cols k+1:
        sub = a[k + 1:, k:]
        sub -= 2.0 * np.outer(u, u @ sub)
        a[k + 1:, k:] = sub
        blk = a[k:, k + 1:]
        blk -= 2.0 * np.outer(blk @ u, u)
        a[k:, k + 1:] = blk
        qs = q[:, k + 1:]
        qs -= 2.0 * np.outer(qs @ u, u)
        q[:, k + 1:] = qs
    d = np.diag(a).copy()
    e = np.zeros(n)
    e[: n - 1] = np.diag(a, -1)
    return d, e, q


def tql_implicit(d, e, z, max_iter=60):
    """Implicit QL with Wilkinson-type shifts on a symmetric tridiagonal matrix.

    ``d`` and ``e`` are overwritten; columns of ``z`` are rotated in place so
    that on exit ``z[:, i]`` is the eigenvector belonging to ``d[i]``.
    """
    n = d.shape[0]
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise EigenError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                z[:, i] = c * zi - s * z[:, i + 1]
                z[:, i + 1] = s * zi + c * z[:, i + 1]
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return d, z


def eigh(a):
    """Eigenvalues (ascending) and orthonormal eigenvectors of symmetric ``a``."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise EigenError(f"expected a square matrix, got shape {a.shape}")
    scale = max(np.abs(a).max(initial=0.0), 1.0)
    if np.abs(a - a.T).max(initial=0.0) > 1e-12 * scale:
        raise EigenError("matrix is not symmetric")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    blocks = _diagonal_blocks(a)
    vals = np.zeros(n)
    vecs = np.zeros((n, n))
    for idx in blocks:
        sub = a[np.ix_(idx, idx)]
        d, e, q = tridiagonalize(sub)
        d, q = tql_implicit(d, e, q)
        vals[idx] = d
        vecs[np.ix_(idx, idx)] = q
    order = np.argsort(vals, kind="stable")
    return vals[order], vecs[:, order]


def _diagonal_blocks(a):
    """Index sets of the connected components of the sparsity graph of ``a``."""
    n = a.shape[0]
    nz = a != 0.0
    seen = np.zeros(n, dtype=bool)
    blocks = []
    for start in range(n):
        if seen[start]:
            continue
        stack = [start]
        seen[start] = True
        comp = []
        while stack:
            i = stack.pop()
            comp.append(i)
            for j in np.flatnonzero(nz[i] & ~seen):
                seen[j] = True
                stack.append(j)
        blocks.append(np.array(sorted(comp)))
    return blocks

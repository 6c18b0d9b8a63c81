"""Eigenmodes of the constrained-elasticity limit operator on the slab.

The limit velocity satisfies ``rho v_tt = d1(A d1 v)`` with the acoustic
tensor ``A_ik = C_i1k1``.  It is discretized with the compact three-point
stencil (linear elements) and a lumped trapezoidal mass, which gives a
symmetric negative-semidefinite ``K`` and diagonal ``M``.  Each mode is then
tested against the dislocation constraint ``D(alpha) : sym(grad phi) = 0``:
modes that satisfy it may oscillate in the limit (Case 1), the others are
excluded (Case 2).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from . import eigensolver
from .fields import BC, div_stress, grad_v
from .tensors import build_D, dislocation_velocity, pack_sym, packed_matrix, unpack_sym

log = logging.getLogger(__name__)

REPEAT_RTOL = 1e-8


class Case(str, enum.Enum):
    CASE1 = "Case1"
    CASE2 = "Case2"


@dataclass(frozen=True)
class DofLayout:
    """Component-major ordering of the free (non-clamped) velocity unknowns."""

    n_nodes: int
    free_nodes: np.ndarray

    @property
    def n_dof(self):
        return 3 * len(self.free_nodes)

    def to_field(self, vec):
        vec = np.asarray(vec, dtype=float)
        out = np.zeros((self.n_nodes, 3))
        nf = len(self.free_nodes)
        for c in range(3):
            out[self.free_nodes, c] = vec[c * nf:(c + 1) * nf]
        return out

    def from_field(self, f):
        f = np.asarray(f, dtype=float)
        return np.concatenate([f[self.free_nodes, c] for c in range(3)])


def dof_layout(grid, bc):
    free = np.ones(grid.n_nodes, dtype=bool)
    for idx, kind in bc.ends():
        if kind == BC.CLAMPED:
            free[idx] = False
    return DofLayout(grid.n_nodes, np.flatnonzero(free))


def assemble_operator(grid, material, bc):
    """Stiffness ``K`` (symmetric, negative semidefinite) and lumped mass ``M``.

    Clamped nodes are eliminated; traction-free ends carry the natural
    boundary condition.  Both matrices use the :func:`dof_layout` ordering.
    """
    layout = dof_layout(grid, bc)
    n, h = grid.n_nodes, grid.h
    acoustic = material.acoustic_tensor()
    full = np.zeros((3 * n, 3 * n))
    # element-by-element assembly, component-major over all nodes
    for el in range(n - 1):
        for a_loc, a in ((0, el), (1, el + 1)):
            for b_loc, b in ((0, el), (1, el + 1)):
                sign = 1.0 if a_loc == b_loc else -1.0
                for i in range(3):
                    for k in range(3):
                        full[i * n + a, k * n + b] -= sign * acoustic[i, k] / h
    keep = np.concatenate([c * n + layout.free_nodes for c in range(3)])
    k_mat = full[np.ix_(keep, keep)]
    mass = np.tile(material.rho * grid.weights[layout.free_nodes], 3)
    return k_mat, np.diag(mass)


@dataclass
class ModeSet:
    frequencies: np.ndarray
    vectors: np.ndarray  # (n_dof, n_modes), M-orthonormal columns
    mass: np.ndarray  # diagonal of M
    repeated_eigenvalue_flag: bool
    layout: DofLayout | None = None
    residuals: np.ndarray | None = None
    labels: list = field(default_factory=list)

    def __len__(self):
        return len(self.frequencies)

    def mode_field(self, p):
        if self.layout is None:
            raise ValueError("mode set has no grid layout")
        return self.layout.to_field(self.vectors[:, p])

    def polarization(self, p):
        """Index (0, 1, 2) of the displacement component carrying most of the mass norm."""
        f = self.mode_field(p)
        return int(np.argmax((f ** 2).sum(axis=0)))

    def summary(self):
        counts = {c.value: sum(1 for lab in self.labels if lab == c) for c in Case}
        return {"n_modes": len(self), "repeated_eigenvalue_flag": self.repeated_eigenvalue_flag, **counts}


def _as_mass_diagonal(m):
    m = np.asarray(m, dtype=float)
    if m.ndim == 2:
        if np.any(m - np.diag(np.diag(m))):
            raise eigensolver.EigenError("mass matrix must be diagonal")
        m = np.diag(m)
    if np.any(m <= 0):
        raise eigensolver.EigenError("mass matrix must be positive")
    return m


def repeated_clusters(freqs, rtol=REPEAT_RTOL):
    """Groups of consecutive indices whose frequencies agree to ``rtol``."""
    clusters, cur = [], [0] if len(freqs) else []
    for p in range(1, len(freqs)):
        scale = max(abs(freqs[p]), abs(freqs[p - 1]))
        if abs(freqs[p] - freqs[p - 1]) <= rtol * scale:
            cur.append(p)
        else:
            clusters.append(cur)
            cur = [p]
    if cur:
        clusters.append(cur)
    return [c for c in clusters if len(c) > 1]


def eigenmodes(k, m, layout=None):
    """Solve ``K phi = -lam^2 M phi``; frequencies ascending, ``phi^T M phi = I``."""
    k = np.asarray(k, dtype=float)
    mass = _as_mass_diagonal(m)
    if k.shape != (mass.size, mass.size):
        raise eigensolver.EigenError(f"K has shape {k.shape}, M has size {mass.size}")
    scale = max(np.abs(k).max(initial=0.0), 1e-300)
    if np.abs(k - k.T).max(initial=0.0) > 1e-12 * scale:
        raise eigensolver.EigenError("stiffness matrix is not symmetric")
    s = 1.0 / np.sqrt(mass)
    a = -(s[:, None] * k * s[None, :])
    vals, vecs = eigensolver.eigh(0.5 * (a + a.T))
    freqs = np.sqrt(np.clip(vals, 0.0, None))
    order = np.argsort(freqs, kind="stable")
    freqs = freqs[order]
    phi = s[:, None] * vecs[:, order]
    flag = bool(repeated_clusters(freqs))
    if flag:
        log.warning("repeated eigenvalues detected; the no-repeat assumption behind the "
                    "per-mode limit condition does not hold for this problem")
    return ModeSet(freqs, phi, mass, flag, layout)


def mode_constraint_residual(mode, alpha, material, grid):
    """Relative size of ``D(alpha) : sym(grad phi)`` for one mode.

    ``||D : sym(grad phi)||_L2 / sqrt(int sym(grad phi) : C : sym(grad phi))``;
    invariant under rescaling of ``phi``.
    """
    mode = np.asarray(mode, dtype=float)
    eps = pack_sym(grad_v(grid, mode))
    d = build_D(alpha, material.stiffness)
    vel = dislocation_velocity(d, eps)
    num = grid.integrate(np.einsum("ns,ns->n", vel, vel))
    w6 = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    den = grid.integrate(np.einsum("nm,m,nm->n", eps, w6, eps @ packed_matrix(material.stiffness).T))
    if den <= 0:
        return 0.0
    return float(np.sqrt(max(num, 0.0) / den))


def _constraint_images(modes, alpha, material, grid):
    d = build_D(alpha, material.stiffness)
    imgs = []
    for p in range(len(modes)):
        eps = pack_sym(grad_v(grid, modes.mode_field(p)))
        imgs.append(dislocation_velocity(d, eps))
    return imgs


def align_repeated(modes, alpha, material, grid):
    """Rotate each repeated-frequency cluster so the constraint Gram matrix is diagonal.

    Inside a degenerate eigenspace any orthonormal basis is valid; this one
    separates constraint-compatible directions from incompatible ones.
    """
    clusters = repeated_clusters(modes.frequencies)
    if not clusters:
        return modes
    vectors = modes.vectors.copy()
    imgs = _constraint_images(modes, alpha, material, grid)
    w = grid.weights
    for cl in clusters:
        gram = np.array([[float(np.einsum("n,ns,ns->", w, imgs[a], imgs[b])) for b in cl] for a in cl])
        _, rot = eigensolver.eigh(0.5 * (gram + gram.T))
        vectors[:, cl] = vectors[:, cl] @ rot
    return replace(modes, vectors=vectors)


def classify(modes, tol=1e-8):
    """Label each mode Case1 (residual <= tol) or Case2."""
    if modes.residuals is None:
        raise ValueError("compute residuals before classifying")
    labels = [Case.CASE1 if r <= tol else Case.CASE2 for r in modes.residuals]
    out = replace(modes, labels=labels)
    log.info("mode classification: %s", out.summary())
    return out


def analyze(grid, material, bc, alpha, tol=1e-8):
    """Assemble, solve, align repeated clusters, compute residuals and classify."""
    k, m = assemble_operator(grid, material, bc)
    modes = eigenmodes(k, m, dof_layout(grid, bc))
    modes = align_repeated(modes, alpha, material, grid)
    res = np.array([mode_constraint_residual(modes.mode_field(p), alpha, material, grid)
                    for p in range(len(modes))])
    return classify(replace(modes, residuals=res), tol)


def project_initial_data(v0, modes):
    """Modal coefficients ``c_p = <rho v0, phi_p>`` (trapezoid-weighted)."""
    v0 = np.asarray(v0, dtype=float)
    vec = modes.layout.from_field(v0) if v0.ndim == 2 else v0
    return modes.vectors.T @ (modes.mass * vec)


def reconstruct(coeffs, modes):
    vec = modes.vectors @ np.asarray(coeffs, dtype=float)
    return modes.layout.to_field(vec) if modes.layout is not None else vec


def static_limit_check(eps, alpha, material, grid):
    """L2 norms of ``div(C : eps)`` and ``D(alpha) : eps`` over the slab."""
    eps = np.asarray(eps, dtype=float)
    stress = np.einsum("nm,km->nk", eps, packed_matrix(material.stiffness))
    div = div_stress(grid, unpack_sym(stress))
    eq = float(np.sqrt(grid.integrate(np.einsum("ni,ni->n", div, div))))
    vel = dislocation_velocity(build_D(alpha, material.stiffness), eps)
    cons = float(np.sqrt(grid.integrate(np.einsum("ns,ns->n", vel, vel))))
    return eq, cons

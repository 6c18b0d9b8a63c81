"""Small dense tensor algebra for the linearized dislocation model.

Conventions
-----------
* Second-order tensors are ``(3, 3)`` arrays.
* Symmetric tensors are packed as 6-vectors in the order
  ``(11, 22, 33, 23, 13, 12)`` holding the tensor components themselves
  (no factor of two on the shear entries, i.e. *not* engineering strain).
* Fourth-order tensors are ``(3, 3, 3, 3)`` arrays, third-order operators
  ``(3, 3, 3)`` arrays indexed ``(s, k, l)``.

All contractions are carried out on unpacked 3x3 arrays; packing is only a
storage format.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PACK_ORDER = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))

_DELTA = np.eye(3)


class TensorInputError(ValueError):
    """Invalid input to a tensor routine."""


def _levi_civita_array():
    e = np.zeros((3, 3, 3))
    e[0, 1, 2] = e[1, 2, 0] = e[2, 0, 1] = 1.0
    e[0, 2, 1] = e[2, 1, 0] = e[1, 0, 2] = -1.0
    return e


EPS3 = _levi_civita_array()
EPS3.flags.writeable = False


def levi_civita(i: int, j: int, k: int) -> int:
    """Permutation symbol with 1-based indices."""
    for idx in (i, j, k):
        if idx not in (1, 2, 3):
            raise TensorInputError(f"index {idx!r} not in {{1, 2, 3}}")
    return int(EPS3[i - 1, j - 1, k - 1])


def pack_sym(t):
    """Pack the symmetric part of ``t`` (shape ``(..., 3, 3)``) into 6-vectors."""
    t = np.asarray(t, dtype=float)
    s = 0.5 * (t + np.swapaxes(t, -1, -2))
    return np.stack([s[..., i, j] for i, j in PACK_ORDER], axis=-1)


def unpack_sym(e):
    """Inverse of :func:`pack_sym`; returns symmetric ``(..., 3, 3)`` arrays."""
    e = np.asarray(e, dtype=float)
    if e.shape[-1] != 6:
        raise TensorInputError(f"packed symmetric tensor needs 6 entries, got {e.shape[-1]}")
    out = np.zeros(e.shape[:-1] + (3, 3))
    for n, (i, j) in enumerate(PACK_ORDER):
        out[..., i, j] = e[..., n]
        out[..., j, i] = e[..., n]
    return out


def sym(t):
    """Symmetric part of a second-order tensor, packed."""
    return pack_sym(t)


def skew(t):
    """Antisymmetric part of a second-order tensor, as a full array."""
    t = np.asarray(t, dtype=float)
    return 0.5 * (t - np.swapaxes(t, -1, -2))


def symmetry_flags(c, atol=None):
    """Which of the minor-left, minor-right and major symmetries hold for ``c``."""
    c = np.asarray(c, dtype=float)
    if atol is None:
        atol = 4 * np.finfo(float).eps * max(1.0, float(np.abs(c).max(initial=0.0)))
    return {
        "minor_left": bool(np.allclose(c, c.transpose(1, 0, 2, 3), rtol=0, atol=atol)),
        "minor_right": bool(np.allclose(c, c.transpose(0, 1, 3, 2), rtol=0, atol=atol)),
        "major": bool(np.allclose(c, c.transpose(2, 3, 0, 1), rtol=0, atol=atol)),
    }


def _check_lame(lam, mu):
    if not mu > 0:
        raise TensorInputError(f"shear modulus must be positive, got mu={mu}")
    if not 3 * lam + 2 * mu > 0:
        raise TensorInputError(f"bulk modulus must be positive, got 3*lambda+2*mu={3 * lam + 2 * mu}")


def isotropic_stiffness(lam: float, mu: float) -> np.ndarray:
    _check_lame(lam, mu)
    d = _DELTA
    return (lam * np.einsum("ij,kl->ijkl", d, d)
            + mu * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)))


def isotropic_compliance(lam: float, mu: float) -> np.ndarray:
    _check_lame(lam, mu)
    d = _DELTA
    return ((np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d)) / (4 * mu)
            - lam / (2 * mu * (3 * lam + 2 * mu)) * np.einsum("ij,kl->ijkl", d, d))


def sym_basis():
    """The six unpacked tensors whose packed images are the unit 6-vectors."""
    return unpack_sym(np.eye(6))


def packed_matrix(c):
    """6x6 matrix of ``e -> pack(c : unpack(e))`` in the packed coordinates."""
    return pack_sym(np.einsum("ijkl,nkl->nij", c, sym_basis())).T


def compliance_from_stiffness(c):
    """Inverse of ``c`` on symmetric tensors, returned as a full 4th-order tensor."""
    s6 = np.linalg.inv(packed_matrix(c))
    # shear columns act on both (k, l) and (l, k), hence the half
    out = np.zeros((3, 3, 3, 3))
    for n, (k, l) in enumerate(PACK_ORDER):
        img = unpack_sym(s6[:, n])
        if k == l:
            out[:, :, k, l] = img
        else:
            out[:, :, k, l] = out[:, :, l, k] = 0.5 * img
    return out


def apply4(c, e):
    """Double contraction ``c : e`` for packed symmetric ``e`` (any leading shape)."""
    return pack_sym(np.einsum("ijkl,...kl->...ij", c, unpack_sym(e)))


def build_D(alpha, c):
    """Third-order operator ``D_skl = e_smn alpha_pn C_pmkl`` (symmetric in k, l).

    ``alpha`` may carry leading node axes: ``(..., 3, 3) -> (..., 3, 3, 3)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    d = np.einsum("smn,...pn,pmkl->...skl", EPS3, alpha, c)
    return 0.5 * (d + np.swapaxes(d, -1, -2))


def build_B(alpha, c):
    """``B_ijkl = e_sjr alpha_ir e_smn alpha_pn C_pmkl`` (minor-right symmetric only)."""
    alpha = np.asarray(alpha, dtype=float)
    return np.einsum("sjr,...ir,...skl->...ijkl", EPS3, alpha, build_D(alpha, c))


def flux_from_velocity(alpha, V):
    """Plastic distortion rate ``J_ij = e_sjr alpha_ir V_s``."""
    return np.einsum("sjr,...ir,...s->...ij", EPS3, alpha, V)


def dislocation_velocity(d, e):
    """``V = D : e`` for packed symmetric ``e``."""
    return np.einsum("...skl,...kl->...s", d, unpack_sym(e))


def dissipation_density(d, e):
    """``|D : e|^2``, the local dissipation."""
    v = dislocation_velocity(d, e)
    return np.einsum("...s,...s->...", v, v)


@dataclass(frozen=True, eq=False)
class Material:
    """Uniform elastic material: mass density and stiffness.

    ``compliance`` is derived when not supplied.  Construction validates the
    symmetries of the stiffness and a sampled positivity constant.
    """

    rho: float
    stiffness: np.ndarray
    compliance: np.ndarray = None
    positivity: float = field(init=False, default=0.0)

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise TensorInputError(f"density must be positive, got rho={self.rho}")
        c = np.array(self.stiffness, dtype=float)
        if c.shape != (3, 3, 3, 3):
            raise TensorInputError(f"stiffness must have shape (3,3,3,3), got {c.shape}")
        flags = symmetry_flags(c)
        missing = [k for k, ok in flags.items() if not ok]
        if missing:
            raise TensorInputError(f"stiffness lacks symmetries: {', '.join(missing)}")
        a0 = sampled_positivity(c)
        if not a0 > 0:
            raise TensorInputError(f"stiffness is not positive definite (sampled a0={a0:.3e})")
        s = compliance_from_stiffness(c) if self.compliance is None else np.array(self.compliance, dtype=float)
        c.flags.writeable = False
        s.flags.writeable = False
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "stiffness", c)
        object.__setattr__(self, "compliance", s)
        object.__setattr__(self, "positivity", a0)

    @classmethod
    def isotropic(cls, lam, mu, rho=1.0):
        return cls(rho, isotropic_stiffness(lam, mu), isotropic_compliance(lam, mu))

    def acoustic_tensor(self):
        """``A_ik = C_i1k1``: the stiffness seen by waves travelling along x1."""
        return self.stiffness[:, 0, :, 0]

    def max_wave_speed(self):
        return float(np.sqrt(np.linalg.eigvalsh(self.acoustic_tensor()).max() / self.rho))


def sampled_positivity(c, n_samples=10_000, seed=0):
    """Smallest Rayleigh quotient ``e:C:e / e:e`` over random symmetric ``e``."""
    rng = np.random.default_rng(seed)
    e = unpack_sym(rng.standard_normal((n_samples, 6)))
    num = np.einsum("nij,ijkl,nkl->n", e, c, e)
    den = np.einsum("nij,nij->n", e, e)
    return float((num / den).min())

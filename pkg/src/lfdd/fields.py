"""Slab discretization: nodal tensor fields that vary along x1 only."""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .tensors import (
    build_D,
    dislocation_velocity,
    packed_matrix,
)


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    x_left: float
    x_right: float
    n_nodes: int

    def __post_init__(self):
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise GridError(f"need at least 3 nodes, got n_nodes={self.n_nodes}")
        if not self.x_right > self.x_left:
            raise GridError(f"x_right ({self.x_right}) must exceed x_left ({self.x_left})")
        object.__setattr__(self, "n_nodes", int(self.n_nodes))

    @property
    def length(self):
        return self.x_right - self.x_left

    @property
    def h(self):
        return self.length / (self.n_nodes - 1)

    @property
    def x(self):
        return np.linspace(self.x_left, self.x_right, self.n_nodes)

    @property
    def weights(self):
        """Trapezoidal quadrature weights."""
        w = np.full(self.n_nodes, self.h)
        w[0] = w[-1] = 0.5 * self.h
        return w

    def integrate(self, f):
        """Trapezoidal integral of nodal values (first axis is the node axis)."""
        return np.tensordot(self.weights, np.asarray(f, dtype=float), axes=(0, 0))


class BC(str, enum.Enum):
    CLAMPED = "clamped"
    TRACTION_FREE = "traction_free"


@dataclass(frozen=True)
class BoundaryCondition:
    left: BC = BC.CLAMPED
    right: BC = BC.CLAMPED

    def __post_init__(self):
        object.__setattr__(self, "left", BC(self.left))
        object.__setattr__(self, "right", BC(self.right))

    def ends(self):
        return ((0, self.left), (-1, self.right))


@dataclass(frozen=True, eq=False)
class FieldState:
    """Nodal unknowns on the slab.

    ``eps`` is packed ``(N, 6)``, ``v`` is ``(N, 3)``, ``omega`` and the frozen
    base dislocation density ``alpha`` are ``(N, 3, 3)``.
    """

    eps: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        eps = np.array(self.eps, dtype=float)
        v = np.array(self.v, dtype=float)
        omega = np.array(self.omega, dtype=float)
        alpha = np.array(self.alpha, dtype=float)
        n = eps.shape[0]
        expected = {"eps": (n, 6), "v": (n, 3), "omega": (n, 3, 3), "alpha": (n, 3, 3)}
        for name, arr in zip(expected, (eps, v, omega, alpha)):
            if arr.shape != expected[name]:
                raise GridError(f"{name} has shape {arr.shape}, expected {expected[name]}")
        if not np.array_equal(omega, -np.swapaxes(omega, 1, 2), equal_nan=True):
            raise GridError("omega must be antisymmetric at every node")
        for name, arr in zip(expected, (eps, v, omega, alpha)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n_nodes(self):
        return self.eps.shape[0]

    @classmethod
    def zeros(cls, grid, alpha=None):
        n = grid.n_nodes
        if alpha is None:
            alpha = np.zeros((n, 3, 3))
        return cls(np.zeros((n, 6)), np.zeros((n, 3)), np.zeros((n, 3, 3)), alpha)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class PsiField:
    """Scalar potential A(x1) generating the crossed-grid dislocation field.

    Either ``samples`` (nodal values) or a named ``profile`` is given.
    Profiles: ``constant`` (A = amplitude), ``linear`` (A = slope * x),
    ``sine`` (A = amplitude * sin(wavenumber * x)).
    """

    profile: str = "linear"
    slope: float = 1.0
    amplitude: float = 1.0
    wavenumber: float = 1.0
    samples: tuple | None = None

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.samples is not None:
            a = np.asarray(self.samples, dtype=float)
            if a.shape != x.shape:
                raise GridError(f"psi samples have {a.size} values for {x.size} nodes")
        elif self.profile == "constant":
            a = np.full_like(x, self.amplitude)
        elif self.profile == "linear":
            with np.errstate(invalid="ignore", over="ignore"):
                a = self.slope * x
        elif self.profile == "sine":
            a = self.amplitude * np.sin(self.wavenumber * x)
        else:
            raise GridError(f"unknown psi profile {self.profile!r}")
        if not np.all(np.isfinite(a)):
            raise GridError("psi potential is not finite on the grid")
        return a


def _ghost_mode(bc_end, quantity):
    # velocity is odd about a clamped end, stress odd about a free end
    if bc_end is None:
        return "onesided"
    if quantity == "velocity":
        return "odd" if bc_end == BC.CLAMPED else "even"
    return "even" if bc_end == BC.CLAMPED else "odd"


def d1(f, h, left="onesided", right="onesided"):
    """Second-order derivative along axis 0.

    Interior nodes use central differences.  At each end the closure is
    ``onesided`` (second-order one-sided), ``even`` (ghost mirrors the
    first interior value) or ``odd`` (ghost reflected through the boundary
    value).
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] < 3:
        raise GridError(f"need at least 3 nodes, got {f.shape[0]}")
    out = np.empty_like(f)
    out[1:-1] = (f[2:] - f[:-2]) / (2 * h)
    if left == "onesided":
        out[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h)
    elif left == "even":
        out[0] = 0.0
    elif left == "odd":
        out[0] = (f[1] - f[0]) / h
    else:
        raise ValueError(left)
    if right == "onesided":
        out[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * h)
    elif right == "even":
        out[-1] = 0.0
    elif right == "odd":
        out[-1] = (f[-1] - f[-2]) / h
    else:
        raise ValueError(right)
    return out


def grad_v(grid, v, bc=None):
    """Velocity gradient ``(dv)_ij``; only the ``j = 1`` column is nonzero."""
    v = np.asarray(v, dtype=float)
    if v.shape[0] != grid.n_nodes:
        raise GridError(f"field has {v.shape[0]} nodes, grid has {grid.n_nodes}")
    left = _ghost_mode(bc.left if bc else None, "velocity")
    right = _ghost_mode(bc.right if bc else None, "velocity")
    g = np.zeros((grid.n_nodes, 3, 3))
    g[:, :, 0] = d1(v, grid.h, left, right)
    return g


def div_stress(grid, T, bc=None):
    """``d_1 T_i1`` for a nodal tensor field ``T`` of shape ``(N, 3, 3)``."""
    T = np.asarray(T, dtype=float)
    if T.shape[0] != grid.n_nodes:
        raise GridError(f"field has {T.shape[0]} nodes, grid has {grid.n_nodes}")
    left = _ghost_mode(bc.left if bc else None, "stress")
    right = _ghost_mode(bc.right if bc else None, "stress")
    return d1(T[:, :, 0], grid.h, left, right)


def traction_free_projector(material):
    """Packed 6x6 projector removing the traction ``T_i1`` from a strain.

    The projection is orthogonal in the energy inner product ``a:C:b``, so it
    never increases the elastic energy.
    """
    cp = packed_matrix(material.stiffness)
    w = np.diag([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])  # Frobenius metric in packed form
    n = np.zeros((6, 3))
    n[0, 0] = 1.0  # sym(e1 x e1)
    n[5, 1] = 0.5  # sym(e2 x e1)
    n[4, 2] = 0.5  # sym(e3 x e1)
    wc = w @ cp
    gram = n.T @ wc @ n
    return np.eye(6) - n @ np.linalg.solve(gram, n.T @ wc)


def apply_bcs(state, bc, material):
    """Enforce v = 0 at clamped ends and T_i1 = 0 at traction-free ends."""
    eps = state.eps.copy()
    v = state.v.copy()
    proj = None
    for idx, kind in bc.ends():
        if kind == BC.CLAMPED:
            v[idx] = 0.0
        else:
            if proj is None:
                proj = traction_free_projector(material)
            eps[idx] = proj @ eps[idx]
    return state.replace(eps=eps, v=v)


def alpha_from_psi(grid, psi):
    """Crossed-grid dislocation density from ``psi = A(x1) e1``.

    With ``a = dA/dx1``: alpha_22 = alpha_33 = -a, every other entry zero.
    """
    a = d1(psi.evaluate(grid.x), grid.h)
    alpha = np.zeros((grid.n_nodes, 3, 3))
    alpha[:, 1, 1] = -a
    alpha[:, 2, 2] = -a
    return alpha


def uniform_alpha(grid, tensor):
    return np.broadcast_to(np.asarray(tensor, dtype=float), (grid.n_nodes, 3, 3)).copy()


def constraint_residual_field(state, material):
    """Nodal ``|D(alpha) : eps|``, the magnitude of the dislocation velocity."""
    d = build_D(state.alpha, material.stiffness)
    return np.linalg.norm(dislocation_velocity(d, state.eps), axis=-1)

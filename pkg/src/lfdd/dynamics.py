"""Time integration of the linearized dislocation system on the slab.

Unknowns are the elastic strain ``eps``, the velocity ``v`` and the elastic
rotation ``omega``; the base dislocation density ``alpha`` is frozen.  The
semi-discrete rates are

    d eps/dt   = sym(grad v) - sym(J)
    rho dv/dt  = div(C : eps)
    d omega/dt = skew(grad v) - skew(J),      J_ij = e_sjr alpha_ir V_s,
                                              V = D(alpha) : eps.

At the slab ends the difference operators use ghost reflections matched to
the boundary condition, which makes the discrete wave operator exactly skew
in the trapezoid-weighted energy inner product.  The discrete energy then
changes only through the dissipation ``-sum w |V|^2``.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded

from .fields import (
    BC,
    BoundaryCondition,
    FieldState,
    Grid1D,
    apply_bcs,
    div_stress,
    grad_v,
    traction_free_projector,
)
from .tensors import (
    EPS3,
    Material,
    build_D,
    pack_sym,
    packed_matrix,
    skew,
    sym_basis,
    unpack_sym,
)

log = logging.getLogger(__name__)

# Frobenius metric for packed symmetric tensors
_W6 = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class Integrator(str, enum.Enum):
    RK4 = "rk4"
    BACKWARD_EULER = "backward_euler"


class SlabOperator:
    """Per-node linear maps for a fixed grid, material, boundary data and alpha.

    Everything that depends only on ``alpha`` and ``C`` is assembled once in
    packed coordinates, so evaluating the rates is a handful of batched
    matrix products.
    """

    def __init__(self, grid, material, bc, alpha):
        self.grid = grid
        self.material = material
        self.bc = bc
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (grid.n_nodes, 3, 3):
            raise ConfigError(f"alpha has shape {alpha.shape}, expected {(grid.n_nodes, 3, 3)}")
        self.alpha = alpha
        c = material.stiffness
        self.c6 = packed_matrix(c)
        d = build_D(alpha, c)
        # V = d6 @ eps_packed
        self.d6 = np.einsum("nskl,mkl->nsm", d, sym_basis())
        # J_ij = flux[n, i, j, s] V_s
        self.flux = np.einsum("sjr,nir->nijs", EPS3, alpha)
        # sym(J) = bs6 @ eps_packed
        self.bs6 = np.einsum("mij,nijs,nsq->nmq", self._pack_basis(), self.flux, self.d6)
        self.proj = traction_free_projector(material)
        self.free_ends = [idx for idx, kind in bc.ends() if kind == BC.TRACTION_FREE]
        self.clamped_ends = [idx for idx, kind in bc.ends() if kind == BC.CLAMPED]

    @staticmethod
    def _pack_basis():
        # pack_sym(t)[m] = sum_ij pb[m, i, j] t_ij
        pb = np.zeros((6, 3, 3))
        for m, (i, j) in enumerate(((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))):
            pb[m, i, j] += 0.5
            pb[m, j, i] += 0.5
        return pb

    # --- pointwise maps -------------------------------------------------
    def stress(self, eps):
        return unpack_sym(eps @ self.c6.T)

    def velocity(self, eps):
        """Dislocation velocity ``V = D : eps`` at every node."""
        return np.einsum("nsm,nm->ns", self.d6, eps)

    def flux_of(self, eps):
        return np.einsum("nijs,ns->nij", self.flux, self.velocity(eps))

    # --- rates ------------------------------------------------------------
    def rates(self, eps, v, with_omega=True):
        gv = grad_v(self.grid, v, self.bc)
        j = self.flux_of(eps)
        deps = pack_sym(gv) - pack_sym(j)
        dv = div_stress(self.grid, self.stress(eps), self.bc) / self.material.rho
        for idx in self.clamped_ends:
            dv[idx] = 0.0
        for idx in self.free_ends:
            deps[idx] = self.proj @ deps[idx]
        domega = skew(gv) - skew(j) if with_omega else None
        return deps, dv, domega

    # --- monitors -----------------------------------------------------------
    def energy_density(self, eps, v):
        strain = np.einsum("nm,m,nm->n", eps, _W6, eps @ self.c6.T)
        return 0.5 * self.material.rho * np.einsum("ni,ni->n", v, v) + 0.5 * strain

    def energy(self, eps, v):
        return float(self.grid.integrate(self.energy_density(eps, v)))

    def dissipation_rate(self, eps):
        vel = self.velocity(eps)
        return float(self.grid.integrate(np.einsum("ns,ns->n", vel, vel)))

    def inner(self, a_eps, a_v, b_eps, b_v):
        """Trapezoid-weighted energy inner product."""
        dens = (np.einsum("nm,m,nm->n", a_eps, _W6, b_eps @ self.c6.T)
                + self.material.rho * np.einsum("ni,ni->n", a_v, b_v))
        return float(self.grid.integrate(dens))

    def project_bcs(self, eps, v):
        eps = eps.copy()
        v = v.copy()
        for idx in self.clamped_ends:
            v[idx] = 0.0
        for idx in self.free_ends:
            eps[idx] = self.proj @ eps[idx]
        return eps, v

    def max_decay_rate(self):
        """Largest eigenvalue of the pointwise dissipative map ``eps -> sym(B:eps)``."""
        return float(np.abs(np.linalg.eigvals(self.bs6)).max(initial=0.0))


def rhs(state, material, bc, grid=None, ops=None):
    """Rates ``(d eps/dt, dv/dt, d omega/dt)`` for ``state``."""
    if ops is None:
        if grid is None:
            raise ConfigError("rhs needs the grid when no operator is supplied")
        ops = SlabOperator(grid, material, bc, state.alpha)
    return ops.rates(state.eps, state.v)


def energy(state, material, grid, bc=None):
    ops = SlabOperator(grid, material, bc or BoundaryCondition(), state.alpha)
    return ops.energy(state.eps, state.v)


def dissipation_rate(state, material, grid, bc=None):
    ops = SlabOperator(grid, material, bc or BoundaryCondition(), state.alpha)
    return ops.dissipation_rate(state.eps)


class ResolventSolver:
    """Direct solver for ``(lam I - A) U = F`` on the slab.

    The strain is eliminated node by node,
    ``eps = (lam I + P B_sym)^-1 P (sym(grad v) + f)``, and the remaining
    velocity system is banded.  Multiplied by the trapezoid mass ``rho H`` it
    is symmetric positive definite, and is factored once by banded Cholesky.
    ``F = (f, g)`` is given in rate units: ``g`` has velocity/time units.
    """

    def __init__(self, ops, lam):
        if not lam > 0:
            raise ConfigError(f"resolvent parameter must be positive, got {lam}")
        self.ops = ops
        self.lam = float(lam)
        n = ops.grid.n_nodes
        shift = np.broadcast_to(np.eye(6), (n, 6, 6)).copy()
        proj_nodes = np.broadcast_to(np.eye(6), (n, 6, 6)).copy()
        for idx in ops.free_ends:
            proj_nodes[idx] = ops.proj
        self.proj_nodes = proj_nodes
        self.kmat = np.linalg.inv(self.lam * shift + proj_nodes @ ops.bs6)
        self.ndof = 3 * n
        clamped = np.zeros(n, dtype=bool)
        clamped[ops.clamped_ends] = True
        self.fixed = np.repeat(clamped, 3)
        self.free = ~self.fixed
        self._factor()

    def _strain(self, v, f):
        gv = pack_sym(grad_v(self.ops.grid, v, self.ops.bc))
        rhs_ = np.einsum("nab,nb->na", self.proj_nodes, gv + f)
        return np.einsum("nab,nb->na", self.kmat, rhs_)

    def _apply(self, vflat):
        """Velocity operator ``v -> lam v - div(C eps(v))/rho`` (no data)."""
        v = vflat.reshape(-1, 3)
        eps = self._strain(v, 0.0)
        dv = div_stress(self.ops.grid, self.ops.stress(eps), self.ops.bc) / self.ops.material.rho
        return (self.lam * v - dv).ravel()

    def _factor(self):
        n = self.ops.grid.n_nodes
        band = 8  # node stencil reaches +-2 nodes, 3 dofs per node
        full = np.zeros((self.ndof, self.ndof))
        for color in range(5):
            for comp in range(3):
                probe = np.zeros((n, 3))
                probe[color::5, comp] = 1.0
                out = self._apply(probe.ravel())
                for node in range(color, n, 5):
                    lo, hi = 3 * max(0, node - 2), 3 * min(n, node + 3)
                    full[lo:hi, 3 * node + comp] = out[lo:hi]
        self.matrix = full
        weights = np.repeat(self.ops.material.rho * self.ops.grid.weights, 3)
        wmat = weights[:, None] * full
        free = np.flatnonzero(self.free)
        a = wmat[np.ix_(free, free)]
        asym = np.abs(a - a.T).max(initial=0.0) / max(np.abs(a).max(initial=0.0), 1e-300)
        if asym > 1e-10:
            raise NumericalError(f"velocity system is not symmetric (relative asymmetry {asym:.2e})")
        m = a.shape[0]
        ab = np.zeros((band + 1, m))
        for k in range(band + 1):
            ab[k, : m - k] = np.diagonal(a, -k)
        try:
            self._chol = cholesky_banded(ab, lower=True)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"velocity system not positive definite: {exc}") from exc
        self._weights = weights
        self._free_idx = free

    def solve(self, f, g):
        """Return ``(eps, v)`` solving ``lam U - A U = (f, g)``."""
        ops = self.ops
        f = np.asarray(f, dtype=float)
        g = np.asarray(g, dtype=float)
        n = ops.grid.n_nodes
        v = np.zeros((n, 3))
        # clamped rows read lam v = g
        v.reshape(-1)[self.fixed] = g.reshape(-1)[self.fixed] / self.lam
        eps_data = self._strain(np.zeros((n, 3)), f)
        rhs_ = g + div_stress(ops.grid, ops.stress(eps_data), ops.bc) / ops.material.rho
        rhs_flat = rhs_.ravel() - self.matrix[:, self.fixed] @ v.reshape(-1)[self.fixed]
        b = (self._weights * rhs_flat)[self._free_idx]
        v.reshape(-1)[self._free_idx] = cho_solve_banded((self._chol, True), b)
        eps = self._strain(v, f)
        return eps, v

    def residual(self, eps, v, f, g):
        """Relative energy-norm residual of ``lam U - A U - F``."""
        deps, dv, _ = self.ops.rates(eps, v, with_omega=False)
        r_eps = self.lam * eps - deps - f
        r_v = self.lam * v - dv - g
        num = math.sqrt(max(self.ops.inner(r_eps, r_v, r_eps, r_v), 0.0))
        den = math.sqrt(max(self.ops.inner(f, g, f, g), 0.0))
        return num / den if den > 0 else num


@dataclass
class SimConfig:
    grid: Grid1D
    material: Material
    bc: BoundaryCondition
    initial_state: FieldState
    dt: float
    t_end: float
    integrator: Integrator = Integrator.RK4
    record_every: int = 1
    snapshot_every: int = 0
    cfl_safety: float = 0.5
    alpha_source: object = None

    def __post_init__(self):
        self.integrator = Integrator(self.integrator)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not self.t_end >= self.dt * (1 - 1e-12):
            raise ConfigError(f"t_end ({self.t_end}) must be at least dt ({self.dt})")
        if self.record_every < 1:
            raise ConfigError("record_every must be >= 1")
        if self.initial_state.n_nodes != self.grid.n_nodes:
            raise ConfigError("initial state and grid disagree on the node count")
        if self.integrator == Integrator.RK4:
            limit = self.cfl_limit()
            if self.dt > limit * (1 + 1e-12):
                raise ConfigError(
                    f"dt={self.dt:.6g} violates the RK4 stability limit {limit:.6g} "
                    f"(cfl_safety={self.cfl_safety})")

    def cfl_limit(self):
        """Largest admissible RK4 step: wave CFL bound and pointwise decay bound."""
        wave = self.cfl_safety * self.grid.h / self.material.max_wave_speed()
        ops = SlabOperator(self.grid, self.material, self.bc, self.initial_state.alpha)
        rate = ops.max_decay_rate()
        # real-axis RK4 stability reaches ~2.78; keep a margin
        decay = 2.5 / rate if rate > 0 else math.inf
        return min(wave, decay)

    @property
    def n_steps(self):
        return max(1, math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def step_size(self):
        """Effective step so that ``n_steps * step_size == t_end``."""
        return self.t_end / self.n_steps


def _check_finite(eps, v, omega, step):
    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(v)) and np.all(np.isfinite(omega))):
        raise NumericalError("non-finite values in the state", step=step)


def step_rk4(state, config, ops=None, dt=None):
    ops = ops or SlabOperator(config.grid, config.material, config.bc, state.alpha)
    dt = config.step_size if dt is None else dt
    e0, v0, w0 = state.eps, state.v, state.omega
    k1 = ops.rates(e0, v0)
    k2 = ops.rates(e0 + 0.5 * dt * k1[0], v0 + 0.5 * dt * k1[1])
    k3 = ops.rates(e0 + 0.5 * dt * k2[0], v0 + 0.5 * dt * k2[1])
    k4 = ops.rates(e0 + dt * k3[0], v0 + dt * k3[1])
    comb = [(a + 2 * b + 2 * c + d) * (dt / 6) for a, b, c, d in zip(k1, k2, k3, k4)]
    eps, v = ops.project_bcs(e0 + comb[0], v0 + comb[1])
    omega = w0 + comb[2]
    omega = 0.5 * (omega - np.swapaxes(omega, 1, 2))
    return state.replace(eps=eps, v=v, omega=omega, t=state.t + dt)


def step_backward_euler(state, config, solver=None, dt=None):
    dt = config.step_size if dt is None else dt
    if solver is None:
        ops = SlabOperator(config.grid, config.material, config.bc, state.alpha)
        solver = ResolventSolver(ops, 1.0 / dt)
    lam = solver.lam
    eps, v = solver.solve(lam * state.eps, lam * state.v)
    _, _, domega = solver.ops.rates(eps, v)
    omega = state.omega + domega / lam
    omega = 0.5 * (omega - np.swapaxes(omega, 1, 2))
    return state.replace(eps=eps, v=v, omega=omega, t=state.t + 1.0 / lam)


@dataclass
class SimRecord:
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    diss_rate: list = field(default_factory=list)
    cum_diss: list = field(default_factory=list)
    max_residual: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    final_state: FieldState = None

    def append(self, step, t, e, d, r):
        if self.times:
            dt = t - self.times[-1]
            self.cum_diss.append(self.cum_diss[-1] + 0.5 * dt * (d + self.diss_rate[-1]))
        else:
            self.cum_diss.append(0.0)
        self.steps.append(step)
        self.times.append(t)
        self.energy.append(e)
        self.diss_rate.append(d)
        self.max_residual.append(r)

    def as_arrays(self):
        return {k: np.asarray(getattr(self, k)) for k in
                ("steps", "times", "energy", "diss_rate", "cum_diss", "max_residual")}


def run(config, callback=None):
    """Integrate from ``t = 0`` to ``t_end``; returns the :class:`SimRecord`.

    ``callback(step, state)`` is invoked after every step when given.
    """
    state = apply_bcs(config.initial_state, config.bc, config.material)
    ops = SlabOperator(config.grid, config.material, config.bc, state.alpha)
    dt = config.step_size
    solver = None
    if config.integrator == Integrator.BACKWARD_EULER:
        solver = ResolventSolver(ops, 1.0 / dt)
    rec = SimRecord()

    def monitor(step, st):
        vel = np.linalg.norm(ops.velocity(st.eps), axis=-1)
        rec.append(step, st.t, ops.energy(st.eps, st.v), ops.dissipation_rate(st.eps),
                   float(vel.max(initial=0.0)))

    monitor(0, state)
    if config.snapshot_every:
        rec.snapshots.append((0, state))
    n_steps = config.n_steps
    for step in range(1, n_steps + 1):
        if solver is None:
            state = step_rk4(state, config, ops, dt)
        else:
            state = step_backward_euler(state, config, solver, dt)
        state = state.replace(t=step * dt)
        _check_finite(state.eps, state.v, state.omega, step)
        if step % config.record_every == 0 or step == n_steps:
            monitor(step, state)
            if not math.isfinite(rec.energy[-1]):
                raise NumericalError("energy overflow", step=step)
        if config.snapshot_every and (step % config.snapshot_every == 0 or step == n_steps):
            rec.snapshots.append((step, state))
        if callback is not None:
            callback(step, state)
    rec.final_state = state
    log.debug("run finished: %d steps, E(0)=%.6g, E(end)=%.6g", n_steps, rec.energy[0], rec.energy[-1])
    return rec


def energy_budget(record):
    """Largest ``|E(t) - E(0) + int_0^t Ddot ds|`` over the recorded times."""
    if len(record.times) < 2:
        raise ValueError("energy budget needs at least two samples")
    e = np.asarray(record.energy)
    c = np.asarray(record.cum_diss)
    return float(np.abs(e - e[0] + c).max())

"""Named presets with closed-form or brute-force oracles.

Each builder returns a :class:`Scenario` holding a ready-to-run
:class:`~lfdd.dynamics.SimConfig` and an oracle ``oracle(t) -> (eps, v)``
giving the reference nodal state.  On construction the oracle is checked
against the semi-discrete rates; a residual above the declared tolerance
raises :class:`ScenarioError`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .dynamics import SimConfig, SlabOperator
from .fields import BoundaryCondition, FieldState, Grid1D, PsiField, alpha_from_psi, uniform_alpha
from .tensors import Material, apply4, pack_sym


class ScenarioError(ValueError):
    pass


@dataclass
class Scenario:
    name: str
    description: str
    config: SimConfig
    oracle: Callable[[float], tuple]
    tolerance: float
    params: dict = field(default_factory=dict)
    oracle_rates: Callable[[float], tuple] | None = None

    @property
    def grid(self):
        return self.config.grid

    def operator(self):
        c = self.config
        return SlabOperator(c.grid, c.material, c.bc, c.initial_state.alpha)

    def oracle_residual(self, times=(0.0,)):
        """Largest relative mismatch between discrete rates and oracle time derivatives."""
        ops = self.operator()
        worst = 0.0
        for t in times:
            eps, v = self.oracle(t)
            deps, dv, _ = ops.rates(eps, v, with_omega=False)
            if self.oracle_rates is None:
                te, tv = np.zeros_like(eps), np.zeros_like(v)
            else:
                te, tv = self.oracle_rates(t)
            num = math.sqrt(ops.inner(deps - te, dv - tv, deps - te, dv - tv))
            scale = math.sqrt(ops.inner(te, tv, te, tv)) + math.sqrt(ops.inner(eps, v, eps, v))
            worst = max(worst, num / scale if scale > 0 else num)
        return worst

    def verify(self, times=(0.0,)):
        r = self.oracle_residual(times)
        if r > self.tolerance:
            raise ScenarioError(f"{self.name}: oracle residual {r:.3e} exceeds {self.tolerance:.1e}")
        return r

    def oracle_state(self, t):
        eps, v = self.oracle(t)
        return self.config.initial_state.replace(eps=eps, v=v, t=t)


def _time_step(grid, material, dt, cfl):
    return dt if dt is not None else cfl * grid.h / material.max_wave_speed()


def static_uniaxial(sigma0=1.0, lam=2.0, mu=3.0, rho=1.0, n_nodes=101, length=1.0, slope=1.0,
                    t_transits=10.0, dt=None, integrator="rk4", grid=None):
    """Uniform uniaxial stress under the crossed-grid density: a fixed point.

    Both ends are clamped.  ``t_end`` defaults to ``t_transits`` transit
    times ``L / c_max``.
    """
    grid = grid or Grid1D(0.0, length, n_nodes)
    material = Material.isotropic(lam, mu, rho)
    alpha = alpha_from_psi(grid, PsiField("linear", slope=slope))
    stress = np.zeros((3, 3))
    stress[0, 0] = sigma0
    eps0 = np.broadcast_to(apply4(material.compliance, pack_sym(stress)), (grid.n_nodes, 6)).copy()
    v0 = np.zeros((grid.n_nodes, 3))
    state = FieldState(eps0, v0, np.zeros((grid.n_nodes, 3, 3)), alpha)
    t_end = t_transits * grid.length / material.max_wave_speed()
    config = SimConfig(grid, material, BoundaryCondition(), state,
                       dt=_time_step(grid, material, dt, 0.5), t_end=t_end, integrator=integrator,
                       alpha_source=PsiField("linear", slope=slope))
    sc = Scenario("static_uniaxial", "uniform uniaxial stress, crossed-grid alpha, clamped ends",
                  config, lambda t: (eps0.copy(), v0.copy()), 1e-10,
                  params=dict(sigma0=sigma0, lam=lam, mu=mu, rho=rho))
    sc.verify()
    return sc


def oscillating_shear(mu=0.5, rho=1.0, length=math.pi, p=1, amplitude=1.0, n_nodes=201,
                      x_left=0.0, periods=1.0, dt=None, integrator="rk4", cfl=0.5):
    """Longitudinal standing wave that the crossed-grid density does not feel.

    ``U = U0 sin(k (x - x_l)) cos(omega t)`` with ``k = p pi / L`` and
    ``omega = k sqrt(2 mu / rho)``; the strain is ``eps_11 = dU/dx`` and the
    velocity ``v_1 = dU/dt``.  The second Lame parameter is zero.
    """
    if int(p) != p or p < 1:
        raise ScenarioError(f"mode index must be a positive integer, got p={p}")
    grid = Grid1D(x_left, x_left + length, n_nodes)
    material = Material.isotropic(0.0, mu, rho)
    alpha = alpha_from_psi(grid, PsiField("linear"))
    k = p * math.pi / length
    omega = k * math.sqrt(2 * mu / rho)
    xi = grid.x - x_left

    def oracle(t):
        eps = np.zeros((grid.n_nodes, 6))
        v = np.zeros((grid.n_nodes, 3))
        eps[:, 0] = amplitude * k * np.cos(k * xi) * math.cos(omega * t)
        v[:, 0] = -amplitude * omega * np.sin(k * xi) * math.sin(omega * t)
        return eps, v

    def oracle_rates(t):
        deps = np.zeros((grid.n_nodes, 6))
        dv = np.zeros((grid.n_nodes, 3))
        deps[:, 0] = -amplitude * k * omega * np.cos(k * xi) * math.sin(omega * t)
        dv[:, 0] = -amplitude * omega ** 2 * np.sin(k * xi) * math.cos(omega * t)
        return deps, dv

    eps0, v0 = oracle(0.0)
    state = FieldState(eps0, v0, np.zeros((grid.n_nodes, 3, 3)), alpha)
    period = 2 * math.pi / omega
    config = SimConfig(grid, material, BoundaryCondition(), state,
                       dt=_time_step(grid, material, dt, cfl), t_end=periods * period,
                       integrator=integrator, cfl_safety=max(cfl, 0.5), alpha_source=PsiField("linear"))
    # oracle derivatives are sampled on the grid: second-order consistency
    tol = 2.0 * (k * grid.h) ** 2 + 1e-12
    sc = Scenario("oscillating_shear", "longitudinal standing wave, crossed-grid alpha, clamped ends",
                  config, oracle, tol, params=dict(mu=mu, rho=rho, length=length, p=p,
                                                   amplitude=amplitude, omega=omega, period=period),
                  oracle_rates=oracle_rates)
    sc.verify(times=np.linspace(0.0, period, 9))
    return sc


def slowest_decay_rate(bs6, tol=1e-12):
    """Smallest strictly positive eigenvalue of the pointwise decay map."""
    ev = np.linalg.eigvals(bs6).real
    scale = max(np.abs(ev).max(initial=0.0), 1.0)
    pos = ev[ev > tol * scale]
    if pos.size == 0:
        raise ScenarioError("decay map has no positive eigenvalue")
    return float(pos.min())


def dissipative_homogeneous(mu=1.0, g0=1.0, alpha0=1.0, lam=0.0, rho=1.0, n_nodes=11, length=1.0,
                            t_rates=50.0, dt=None, integrator="rk4", cfl=0.25):
    """Uniform shear ``eps_13 = g0`` relaxing under a uniform screw density.

    Gradients vanish, so each node follows ``d eps/dt = -Bs eps`` whose
    solution is the dense matrix exponential.  Ends are clamped: a uniform
    ``eps_13`` carries the traction ``T_31``, so a traction-free end would
    break homogeneity.  ``t_end`` is ``t_rates`` over the slowest decay rate.
    """
    grid = Grid1D(0.0, length, n_nodes)
    material = Material.isotropic(lam, mu, rho)
    a = np.zeros((3, 3))
    a[2, 2] = alpha0
    alpha = uniform_alpha(grid, a)
    bs6 = SlabOperator(grid, material, BoundaryCondition(), alpha).bs6[0]
    e0 = np.zeros(6)
    e0[4] = g0
    rate = slowest_decay_rate(bs6) if np.any(bs6) else 1.0
    n = grid.n_nodes

    def oracle(t):
        e = expm(-bs6 * t) @ e0
        return np.broadcast_to(e, (n, 6)).copy(), np.zeros((n, 3))

    def oracle_rates(t):
        e = -bs6 @ (expm(-bs6 * t) @ e0)
        return np.broadcast_to(e, (n, 6)).copy(), np.zeros((n, 3))

    eps0, v0 = oracle(0.0)
    state = FieldState(eps0, v0, np.zeros((n, 3, 3)), alpha)
    config = SimConfig(grid, material, BoundaryCondition(), state,
                       dt=_time_step(grid, material, dt, cfl), t_end=t_rates / rate, integrator=integrator)
    sc = Scenario("dissipative_homogeneous", "uniform shear relaxing under a screw density, clamped ends",
                  config, oracle, 1e-10,
                  params=dict(mu=mu, g0=g0, alpha0=alpha0, lam=lam, rho=rho, rate=rate, bs6=bs6),
                  oracle_rates=oracle_rates)
    sc.verify(times=np.linspace(0.0, 5.0 / rate, 6))
    return sc


BUILDERS = {
    "static_uniaxial": static_uniaxial,
    "oscillating_shear": oscillating_shear,
    "dissipative_homogeneous": dissipative_homogeneous,
}


def list_scenarios():
    """``[(name, description)]`` in a stable order."""
    return [(name, (fn.__doc__ or "").strip().splitlines()[0]) for name, fn in BUILDERS.items()]


def build(name, **params):
    try:
        fn = BUILDERS[name]
    except KeyError:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {sorted(BUILDERS)}") from None
    return fn(**params)

import dataclasses
import math

import numpy as np
import pytest

from lfdd.dynamics import (
    ConfigError,
    Integrator,
    NumericalError,
    ResolventSolver,
    SimConfig,
    SimRecord,
    SlabOperator,
    dissipation_rate,
    energy,
    energy_budget,
    rhs,
    run,
    step_backward_euler,
    step_rk4,
)
from lfdd.fields import BC, BoundaryCondition, FieldState, Grid1D, uniform_alpha
from lfdd.tensors import Material, packed_matrix

ALL_BCS = [BoundaryCondition(a, b) for a in BC for b in BC]


@pytest.fixture
def material():
    return Material.isotropic(1.3, 0.7, 1.2)


def random_state(grid, rng, alpha_scale=1.0):
    n = grid.n_nodes
    w = rng.standard_normal((n, 3, 3))
    return FieldState(rng.standard_normal((n, 6)), rng.standard_normal((n, 3)),
                      w - w.swapaxes(1, 2), alpha_scale * rng.standard_normal((n, 3, 3)))


def dense_operator(ops):
    """Brute-force matrix of U -> A U by unit probes (eps block then v block)."""
    n = ops.grid.n_nodes
    size = 9 * n
    cols = []
    for k in range(size):
        u = np.zeros(size)
        u[k] = 1.0
        eps, v = u[:6 * n].reshape(n, 6), u[6 * n:].reshape(n, 3)
        de, dv, _ = ops.rates(eps, v, with_omega=False)
        cols.append(np.concatenate([de.ravel(), dv.ravel()]))
    return np.array(cols).T


class TestRates:
    def test_zero_state_has_zero_rates(self, material):
        g = Grid1D(0.0, 1.0, 7)
        s = FieldState.zeros(g, uniform_alpha(g, np.eye(3)))
        for r in rhs(s, material, BoundaryCondition(), grid=g):
            assert not np.any(r)

    def test_rhs_needs_grid(self, material):
        g = Grid1D(0.0, 1.0, 4)
        with pytest.raises(ConfigError):
            rhs(FieldState.zeros(g), material, BoundaryCondition())

    def test_alpha_shape_checked(self, material):
        g = Grid1D(0.0, 1.0, 4)
        with pytest.raises(ConfigError):
            SlabOperator(g, material, BoundaryCondition(), np.zeros((3, 3, 3)))

    @pytest.mark.parametrize("bc", ALL_BCS, ids=lambda b: f"{b.left.value}-{b.right.value}")
    def test_energy_rate_equals_minus_dissipation(self, material, bc):
        # semi-discrete identity dE/dt = -sum w |V|^2 for states satisfying the BCs
        rng = np.random.default_rng(0)
        g = Grid1D(0.0, 1.0, 15)
        s = random_state(g, rng)
        ops = SlabOperator(g, material, bc, s.alpha)
        eps, v = ops.project_bcs(s.eps, s.v)
        de, dv, _ = ops.rates(eps, v)
        de_dt = ops.inner(eps, v, de, dv)
        assert de_dt == pytest.approx(-ops.dissipation_rate(eps), rel=1e-11, abs=1e-11)

    def test_wave_part_is_skew(self, material):
        g = Grid1D(0.0, 1.0, 9)
        ops = SlabOperator(g, material, BoundaryCondition("clamped", "clamped"), np.zeros((9, 3, 3)))
        a = dense_operator(ops)
        n = 9
        # energy Gram matrix H
        c6 = packed_matrix(material.stiffness)
        blocks = [np.diag([1.0, 1, 1, 2, 2, 2]) @ c6 * wi for wi in g.weights]
        h = np.zeros((9 * n, 9 * n))
        for i, b in enumerate(blocks):
            h[6 * i:6 * i + 6, 6 * i:6 * i + 6] = b
        h[6 * n:, 6 * n:] = np.diag(np.repeat(material.rho * g.weights, 3))
        # restrict to the clamped-admissible subspace (v = 0 at both ends)
        keep = np.ones(9 * n, dtype=bool)
        for node in (0, n - 1):
            keep[6 * n + 3 * node:6 * n + 3 * node + 3] = False
        ha = (h @ a)[np.ix_(keep, keep)]
        np.testing.assert_allclose(ha, -ha.T, atol=1e-10)

    def test_module_level_monitors(self, material):
        g = Grid1D(0.0, 2.0, 5)
        eps = np.zeros((5, 6))
        eps[:, 0] = 0.1
        s = FieldState(eps, np.ones((5, 3)), np.zeros((5, 3, 3)), np.zeros((5, 3, 3)))
        # E = L (rho |v|^2 / 2 + (lam + 2 mu) e11^2 / 2)
        expected = 2.0 * (0.5 * 1.2 * 3 + 0.5 * (1.3 + 1.4) * 0.01)
        assert energy(s, material, g) == pytest.approx(expected)
        assert dissipation_rate(s, material, g) == 0.0


class TestResolvent:
    @pytest.mark.parametrize("bc", ALL_BCS, ids=lambda b: f"{b.left.value}-{b.right.value}")
    @pytest.mark.parametrize("lam", [0.5, 10.0, 1000.0])
    def test_matches_dense_solve(self, material, bc, lam):
        rng = np.random.default_rng(2)
        g = Grid1D(0.0, 1.0, 8)
        alpha = rng.standard_normal((8, 3, 3))
        ops = SlabOperator(g, material, bc, alpha)
        f, gg = ops.project_bcs(rng.standard_normal((8, 6)), rng.standard_normal((8, 3)))
        eps, v = ResolventSolver(ops, lam).solve(f, gg)
        a = dense_operator(ops)
        rhs_ = np.concatenate([f.ravel(), gg.ravel()])
        u = np.linalg.solve(lam * np.eye(a.shape[0]) - a, rhs_)
        np.testing.assert_allclose(eps.ravel(), u[:48], atol=1e-10)
        np.testing.assert_allclose(v.ravel(), u[48:], atol=1e-10)

    def test_residual_small(self, material):
        rng = np.random.default_rng(3)
        g = Grid1D(0.0, 1.0, 30)
        ops = SlabOperator(g, material, BoundaryCondition("traction_free", "clamped"), rng.standard_normal((30, 3, 3)))
        solver = ResolventSolver(ops, 100.0)
        f, gg = ops.project_bcs(rng.standard_normal((30, 6)), rng.standard_normal((30, 3)))
        eps, v = solver.solve(f, gg)
        assert solver.residual(eps, v, f, gg) <= 1e-12

    def test_rejects_nonpositive_parameter(self, material):
        g = Grid1D(0.0, 1.0, 5)
        ops = SlabOperator(g, material, BoundaryCondition(), np.zeros((5, 3, 3)))
        with pytest.raises(ConfigError):
            ResolventSolver(ops, 0.0)


def shear_wave_config(material, integrator="rk4", dt=None, t_end=0.3, n=21, **kw):
    g = Grid1D(0.0, 1.0, n)
    v = np.zeros((n, 3))
    v[:, 1] = np.sin(np.pi * g.x)
    s = FieldState(np.zeros((n, 6)), v, np.zeros((n, 3, 3)), np.zeros((n, 3, 3)))
    dt = 0.25 * g.h / material.max_wave_speed() if dt is None else dt
    return SimConfig(g, material, BoundaryCondition(), s, dt=dt, t_end=t_end, integrator=integrator, **kw)


class TestSimConfig:
    def test_step_size_divides_interval(self, material):
        c = shear_wave_config(material, dt=0.007, t_end=0.1)
        assert c.n_steps == 15
        assert c.n_steps * c.step_size == pytest.approx(0.1)

    @pytest.mark.parametrize("kw,match", [
        (dict(dt=0.0), "dt"),
        (dict(dt=0.01, t_end=0.001), "t_end"),
        (dict(record_every=0), "record_every"),
        (dict(dt=1.0, t_end=2.0), "stability"),
    ])
    def test_invalid(self, material, kw, match):
        with pytest.raises(ConfigError, match=match):
            shear_wave_config(material, **kw)

    def test_backward_euler_ignores_cfl(self, material):
        c = shear_wave_config(material, integrator="backward_euler", dt=1.0, t_end=2.0)
        assert c.integrator is Integrator.BACKWARD_EULER

    def test_grid_state_mismatch(self, material):
        c = shear_wave_config(material)
        with pytest.raises(ConfigError):
            dataclasses.replace(c, grid=Grid1D(0.0, 1.0, 5))

    def test_decay_rate_limits_rk4_step(self, material):
        g = Grid1D(0.0, 1.0, 5)
        # a multiple of the identity would give B = 0
        a = np.zeros((3, 3))
        a[2, 2] = 30.0
        s = FieldState.zeros(g, uniform_alpha(g, a))
        c = SimConfig(g, material, BoundaryCondition(), s, dt=1e-5, t_end=1e-4)
        rate = SlabOperator(g, material, BoundaryCondition(), s.alpha).max_decay_rate()
        assert c.cfl_limit() == pytest.approx(2.5 / rate)


class TestIntegrators:
    def test_rk4_fourth_order_in_time(self, material):
        # fixed grid; compare against a much finer time step
        ref = run(shear_wave_config(material, dt=0.25 * 0.05 / 1.5 / 8)).final_state
        errs = []
        for fac in (1, 2):
            st = run(shear_wave_config(material, dt=0.25 * 0.05 / 1.5 / fac)).final_state
            errs.append(np.abs(st.v - ref.v).max())
        assert errs[0] / errs[1] > 12

    def test_backward_euler_first_order(self, material):
        ref = run(shear_wave_config(material, "backward_euler", dt=1e-4)).final_state
        errs = []
        for dt in (4e-3, 2e-3):
            st = run(shear_wave_config(material, "backward_euler", dt=dt)).final_state
            errs.append(np.abs(st.v - ref.v).max())
        assert 1.6 < errs[0] / errs[1] < 2.4

    @pytest.mark.parametrize("integrator", ["rk4", "backward_euler"])
    def test_rotation_follows_skew_velocity_gradient(self, material, integrator):
        # alpha = 0: omega_21 = -omega_12 = (1/2) d1 u_2
        c = shear_wave_config(material, integrator, t_end=0.05)
        rec = run(c)
        st = rec.final_state
        np.testing.assert_allclose(st.omega, -st.omega.swapaxes(1, 2))
        np.testing.assert_allclose(st.omega[:, 1, 0], st.eps[:, 5], atol=1e-12)

    def test_single_steps_match_run(self, material):
        c = shear_wave_config(material, t_end=None or 0.01, dt=0.005)
        s1 = step_rk4(c.initial_state, c)
        s2 = step_backward_euler(c.initial_state, c)
        assert s1.t == pytest.approx(0.005) and s2.t == pytest.approx(0.005)

    def test_energy_conserved_without_dislocations(self, material):
        rec = run(shear_wave_config(material, t_end=1.0))
        e = np.array(rec.energy)
        assert np.abs(e - e[0]).max() <= 1e-6 * e[0]

    def test_backward_euler_monotone(self, material):
        g = Grid1D(0.0, 1.0, 21)
        rng = np.random.default_rng(4)
        s = random_state(g, rng)
        s = s.replace(omega=np.zeros((21, 3, 3)))
        c = SimConfig(g, material, BoundaryCondition("clamped", "traction_free"), s, dt=0.05, t_end=1.0,
                      integrator="backward_euler")
        e = np.array(run(c).energy)
        assert np.all(np.diff(e) <= 1e-14 * e[0])


class TestRun:
    def test_records_and_callback(self, material):
        calls = []
        c = shear_wave_config(material, dt=0.01, t_end=0.1, record_every=3, snapshot_every=4)
        rec = run(c, lambda k, s: calls.append(k))
        assert calls == list(range(1, 11))
        assert rec.steps == [0, 3, 6, 9, 10]
        assert [k for k, _ in rec.snapshots] == [0, 4, 8, 10]
        assert rec.final_state.t == pytest.approx(0.1)
        arrays = rec.as_arrays()
        assert set(arrays) == {"steps", "times", "energy", "diss_rate", "cum_diss", "max_residual"}

    def test_nan_raises_with_step(self, material):
        c = shear_wave_config(material, dt=0.01, t_end=0.05)
        eps = c.initial_state.eps.copy()
        eps[3, 0] = np.nan
        c = dataclasses.replace(c, initial_state=c.initial_state.replace(eps=eps))
        with pytest.raises(NumericalError) as info:
            run(c)
        assert info.value.step == 1

    def test_cumulative_dissipation_trapezoid(self):
        rec = SimRecord()
        for k, t in enumerate([0.0, 1.0, 3.0]):
            rec.append(k, t, 10.0 - t, 2.0 * t, 0.0)
        assert rec.cum_diss == [0.0, 1.0, 9.0]

    def test_energy_budget_needs_two_samples(self):
        rec = SimRecord()
        rec.append(0, 0.0, 1.0, 0.0, 0.0)
        with pytest.raises(ValueError):
            energy_budget(rec)

    def test_energy_budget_closes_for_decaying_run(self, material):
        g = Grid1D(0.0, 1.0, 11)
        a = np.zeros((3, 3))
        a[2, 2] = 1.0
        eps = np.zeros((11, 6))
        eps[:, 4] = 1.0
        s = FieldState(eps, np.zeros((11, 3)), np.zeros((11, 3, 3)), uniform_alpha(g, a))
        budgets = []
        for dt in (0.02, 0.01):
            rec = run(SimConfig(g, material, BoundaryCondition(), s, dt=dt, t_end=2.0))
            budgets.append(energy_budget(rec) / rec.energy[0])
        assert budgets[0] < 1e-3
        assert budgets[0] / budgets[1] == pytest.approx(4.0, rel=0.05)
        assert math.isfinite(budgets[1])

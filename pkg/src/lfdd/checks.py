"""Property and acceptance checks shared by the ``check`` command and the tests.

Every check returns a :class:`CheckResult` carrying the measured quantity
and the threshold it was compared against.  :func:`run_suite` runs the
``fast`` or ``full`` selection.  :func:`inject_fault` swaps in a corrupted
``B`` construction so that the suite's ability to detect it can be tested.
"""
from __future__ import annotations

import contextlib
import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from . import tensors
from .dynamics import Integrator, ResolventSolver, SlabOperator, energy_budget, run
from .fields import BC, BoundaryCondition, Grid1D, PsiField, alpha_from_psi, uniform_alpha
from .scenarios import dissipative_homogeneous, oscillating_shear, static_uniaxial
from .spectral import Case, analyze, assemble_operator, static_limit_check
from .tensors import Material, isotropic_stiffness

_B_BUILDER = tensors.build_B


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"[{status}] {self.name}: measured={self.measured:.3e} threshold={self.threshold:.1e}{extra}"


@contextlib.contextmanager
def inject_fault(kind="corrupt_b"):
    """Temporarily replace the ``B`` construction used by the checks."""
    global _B_BUILDER
    if kind != "corrupt_b":
        raise ValueError(f"unknown fault {kind!r}")
    saved = _B_BUILDER
    _B_BUILDER = lambda alpha, c: 1.01 * saved(alpha, c)  # noqa: E731
    try:
        yield
    finally:
        _B_BUILDER = saved


def _random_triples(n, seed):
    rng = np.random.default_rng(seed)
    mu = rng.uniform(0.1, 10.0, n)
    lam = rng.uniform(-0.6, 10.0, n) * mu
    c = np.stack([isotropic_stiffness(l, m) for l, m in zip(lam, mu)])
    alpha = rng.standard_normal((n, 3, 3))
    eps = rng.standard_normal((n, 6))
    return alpha, c, eps


def dissipation_identity(n=1000, seed=1):
    """``T : J = |V|^2`` with ``J = B : eps``, ``T = C : eps``, ``V = D : eps``."""
    alpha, c, eps = _random_triples(n, seed)
    e = tensors.unpack_sym(eps)
    stress = np.einsum("zijkl,zkl->zij", c, e)
    d = np.einsum("smn,zpn,zpmkl->zskl", tensors.EPS3, alpha, c)
    vel = np.einsum("zskl,zkl->zs", d, e)
    b = np.stack([_B_BUILDER(alpha[i], c[i]) for i in range(n)])
    flux = np.einsum("zijkl,zkl->zij", b, e)
    work = np.einsum("zij,zij->z", stress, flux)
    v2 = np.einsum("zs,zs->z", vel, vel)
    err = float((np.abs(work - v2) / np.maximum(1.0, v2)).max())
    return CheckResult("dissipation identity T:J = |V|^2", err <= 1e-12, err, 1e-12, f"samples={n}")


def b_minor_symmetry(n=1000, seed=2):
    alpha, c, _ = _random_triples(n, seed)
    worst = 0.0
    for i in range(n):
        b = _B_BUILDER(alpha[i], c[i])
        worst = max(worst, float(np.abs(b - b.swapaxes(2, 3)).max()))
    return CheckResult("B minor symmetry B_ijkl = B_ijlk", worst <= 1e-15, worst, 1e-15, f"samples={n}")


def _energies(config):
    return np.asarray(run(config).energy)


def _with(config, **kw):
    return dataclasses.replace(config, **kw)


def contraction(quick=False):
    """Energy never increases: exactly for backward Euler, to 1e-10 E0 per step for RK4."""
    scen = [
        static_uniaxial(t_transits=2.0 if quick else 10.0),
        oscillating_shear(n_nodes=101 if quick else 201, periods=0.5 if quick else 1.0),
        dissipative_homogeneous(t_rates=5.0 if quick else 10.0),
    ]
    worst_be, worst_rk = -math.inf, -math.inf
    details = []
    for sc in scen:
        for integ in (Integrator.BACKWARD_EULER, Integrator.RK4):
            cfg = _with(sc.config, integrator=integ)
            e = _energies(cfg)
            rise = float(np.diff(e).max(initial=-math.inf)) / max(e[0], 1e-300)
            if integ == Integrator.BACKWARD_EULER:
                worst_be = max(worst_be, rise)
            else:
                worst_rk = max(worst_rk, rise)
            details.append(f"{sc.name}/{integ.value}={rise:.1e}")
    # backward Euler must not rise beyond floating-point roundoff of E
    be_tol = 1e-14
    passed = worst_be <= be_tol and worst_rk <= 1e-10
    return CheckResult("contraction (BE monotone, RK4 within 1e-10 E0/step)", passed,
                       max(worst_be, worst_rk), 1e-10, "; ".join(details))


def energy_budget_check(n_nodes=201, t_rates=5.0):
    """Energy budget defect for the dissipative scenario and its decrease when dt halves."""
    sc = dissipative_homogeneous(n_nodes=n_nodes, t_rates=t_rates)
    defects = []
    for fac in (1.0, 0.5):
        rec = run(_with(sc.config, dt=sc.config.dt * fac))
        defects.append(energy_budget(rec) / rec.energy[0])
    ratio = defects[0] / defects[1] if defects[1] > 0 else math.inf
    passed = defects[0] <= 1e-6 and ratio >= 3.5
    return CheckResult("energy budget |E - E0 + int D| / E0", passed, defects[0], 1e-6,
                       f"halved-dt ratio={ratio:.2f} (>= 3.5)")


def static_fixed_point(n_nodes=101, t_transits=10.0):
    sc = static_uniaxial(n_nodes=n_nodes, t_transits=t_transits)
    rec = run(sc.config)
    ops = sc.operator()
    s0, s1 = sc.config.initial_state, rec.final_state
    de, dv = s1.eps - s0.eps, s1.v - s0.v
    drift = math.sqrt(ops.inner(de, dv, de, dv))
    eq, cons = static_limit_check(s0.eps, s0.alpha, sc.config.material, sc.grid)
    passed = drift <= 1e-10 and eq <= 1e-12 and cons <= 1e-12
    return CheckResult("static uniaxial fixed point", passed, drift, 1e-10,
                       f"equilibrium={eq:.1e} constraint={cons:.1e} (<= 1e-12)")


def _standing_wave_error(n_nodes, callback=None):
    sc = oscillating_shear(n_nodes=n_nodes)
    rec = run(sc.config, callback)
    ops = sc.operator()
    eps, v = sc.oracle(rec.final_state.t)
    de, dv = rec.final_state.eps - eps, rec.final_state.v - v
    return math.sqrt(ops.inner(de, dv, de, dv) / ops.inner(eps, v, eps, v)), sc


def measured_period(n_nodes=201):
    """Period from zero crossings of the projection of ``eps_11`` on the mode shape."""
    sc = oscillating_shear(n_nodes=n_nodes, periods=1.5)
    grid = sc.grid
    k = sc.params["p"] * math.pi / sc.params["length"]
    shape = np.cos(k * (grid.x - grid.x_left))
    ts, qs = [0.0], [float(grid.integrate(sc.config.initial_state.eps[:, 0] * shape))]

    def cb(step, st):
        ts.append(st.t)
        qs.append(float(grid.integrate(st.eps[:, 0] * shape)))

    run(sc.config, cb)
    ts, qs = np.array(ts), np.array(qs)
    idx = np.flatnonzero(np.sign(qs[:-1]) * np.sign(qs[1:]) < 0)
    crossings = ts[idx] - qs[idx] * (ts[idx + 1] - ts[idx]) / (qs[idx + 1] - qs[idx])
    if crossings.size < 3:
        raise RuntimeError("not enough zero crossings to measure a period")
    return float(crossings[2] - crossings[0]), sc.params["period"]


def oscillating(coarse=201, fine=401):
    err_c, _ = _standing_wave_error(coarse)
    err_f, _ = _standing_wave_error(fine)
    ratio = err_c / err_f
    period, expected = measured_period(coarse)
    rel = abs(period - expected) / expected
    passed = err_c <= 1e-3 and ratio >= 3.5 and rel <= 0.01
    return CheckResult("oscillating standing wave vs oracle", passed, err_c, 1e-3,
                       f"refinement ratio={ratio:.2f} (>= 3.5) period error={rel:.1e} (<= 1e-2)")


def _bar_modes(n_nodes, alpha_kind="crossed"):
    grid = Grid1D(0.0, math.pi, n_nodes)
    material = Material.isotropic(0.0, 0.5, 1.0)
    bc = BoundaryCondition()
    if alpha_kind == "crossed":
        alpha = alpha_from_psi(grid, PsiField("linear"))
    else:
        a = np.zeros((3, 3))
        a[2, 2] = 1.0
        alpha = uniform_alpha(grid, a)
    return grid, material, bc, analyze(grid, material, bc, alpha)


def _longitudinal_errors(modes, n=5):
    # c = sqrt(2 mu / rho) = 1 and L = pi, so the exact frequencies are 1..n
    lon = [p for p in range(len(modes)) if modes.polarization(p) == 0][:n]
    return np.array([abs(modes.frequencies[p] - (i + 1)) for i, p in enumerate(lon)])


def _orthonormality_defect(modes):
    g = modes.vectors.T @ (modes.mass[:, None] * modes.vectors)
    return float(np.abs(g - np.eye(g.shape[0])).max())


def _eigen_residual(grid, material, bc, modes):
    k, m = assemble_operator(grid, material, bc)
    worst = 0.0
    for p in range(len(modes)):
        phi = modes.vectors[:, p]
        lam2 = modes.frequencies[p] ** 2
        mphi = modes.mass * phi
        r = np.linalg.norm(k @ phi + lam2 * mphi) / (np.linalg.norm(mphi) * max(lam2, 1.0))
        worst = max(worst, float(r))
    return worst


def eigen_convergence(coarse=101, fine=201, quick=False):
    g1, m1, b1, modes_c = _bar_modes(coarse)
    err_c = _longitudinal_errors(modes_c)
    ortho = _orthonormality_defect(modes_c)
    resid = _eigen_residual(g1, m1, b1, modes_c)
    if quick:
        ratio = math.inf
    else:
        _, _, _, modes_f = _bar_modes(fine)
        err_f = _longitudinal_errors(modes_f)
        ortho = max(ortho, _orthonormality_defect(modes_f))
        ratio = float((err_c / err_f).min())
    passed = ratio >= 3.5 and ortho <= 1e-10 and resid <= 1e-9
    detail = f"min error ratio p<=5={ratio:.2f} (>= 3.5) eigen-residual={resid:.1e} (<= 1e-9)"
    return CheckResult("eigenproblem convergence and M-orthonormality", passed, ortho, 1e-10, detail)


def classification(n_nodes=101):
    _, _, _, crossed = _bar_modes(n_nodes, "crossed")
    lon = [p for p in range(len(crossed)) if crossed.polarization(p) == 0]
    lon_res = float(max(crossed.residuals[p] for p in lon))
    lon_ok = all(crossed.labels[p] == Case.CASE1 for p in lon) and lon_res <= 1e-12
    _, _, _, screw = _bar_modes(n_nodes, "screw")
    tr = [p for p in range(len(screw)) if screw.polarization(p) == 2]
    tr_res = float(min(screw.residuals[p] for p in tr))
    tr_ok = all(screw.labels[p] == Case.CASE2 for p in tr) and tr_res >= 1e-2
    return CheckResult("Case classification", lon_ok and tr_ok, lon_res, 1e-12,
                       f"crossed-grid longitudinal max residual={lon_res:.1e}; "
                       f"screw e3-transverse min residual={tr_res:.2e} (>= 1e-2)")


def long_time_constraint(t_rates=50.0):
    sc = dissipative_homogeneous(t_rates=t_rates)
    ops = sc.operator()
    worst = [0.0]

    def cb(step, st):
        eps, _ = sc.oracle(st.t)
        worst[0] = max(worst[0], float(np.abs(st.eps - eps).max()), float(np.abs(st.v).max()))

    rec = run(sc.config, cb)
    v0 = np.linalg.norm(ops.velocity(sc.config.initial_state.eps), axis=-1).max()
    v1 = np.linalg.norm(ops.velocity(rec.final_state.eps), axis=-1).max()
    ratio = float(v1 / v0)
    passed = ratio <= 1e-8 and worst[0] <= 1e-8
    return CheckResult("long-time constraint |D:eps| decay", passed, ratio, 1e-8,
                       f"max deviation from matrix-exponential oracle={worst[0]:.1e} (<= 1e-8)")


def resolvent(n_nodes=41, n_rhs=10, seed=3):
    rng = np.random.default_rng(seed)
    grid = Grid1D(0.0, 1.0, n_nodes)
    material = Material.isotropic(1.3, 0.7, 1.2)
    alpha = rng.standard_normal((n_nodes, 3, 3))
    worst = 0.0
    for left in BC:
        for right in BC:
            ops = SlabOperator(grid, material, BoundaryCondition(left, right), alpha)
            for lam in (10.0, 100.0, 1000.0):
                solver = ResolventSolver(ops, lam)
                for _ in range(n_rhs):
                    f = rng.standard_normal((n_nodes, 6))
                    g = rng.standard_normal((n_nodes, 3))
                    f, g = ops.project_bcs(f, g)
                    eps, v = solver.solve(f, g)
                    worst = max(worst, solver.residual(eps, v, f, g))
    return CheckResult("resolvent solve residual", worst <= 1e-10, worst, 1e-10,
                       f"lambda in (10, 100, 1000), {n_rhs} right-hand sides, all end conditions")


def oscillating_no_dissipation(n_samples=100):
    """The standing wave keeps ``|V| = 0`` along the oracle trajectory."""
    sc = oscillating_shear()
    ops = sc.operator()
    worst = 0.0
    for t in np.linspace(0.0, sc.params["period"], n_samples):
        eps, _ = sc.oracle(t)
        worst = max(worst, ops.dissipation_rate(eps))
    return CheckResult("standing wave dissipation rate", worst <= 1e-12, worst, 1e-12, f"times={n_samples}")


def scenario_oracles():
    worst = 0.0
    for sc in (static_uniaxial(), dissipative_homogeneous()):
        worst = max(worst, sc.oracle_residual(np.linspace(0.0, 5.0, 6)))
    return CheckResult("scenario oracles satisfy the discrete rates", worst <= 1e-10, worst, 1e-10)


ACCEPTANCE = {
    1: dissipation_identity,
    2: b_minor_symmetry,
    3: contraction,
    4: energy_budget_check,
    5: static_fixed_point,
    6: oscillating,
    7: eigen_convergence,
    8: classification,
    9: long_time_constraint,
    10: resolvent,
}


def suite(level="fast"):
    """``[(label, callable)]`` for the requested level."""
    if level not in ("fast", "full"):
        raise ValueError(f"level must be 'fast' or 'full', got {level!r}")
    if level == "full":
        items = [(f"criterion {k}", fn) for k, fn in ACCEPTANCE.items()]
    else:
        items = [
            ("criterion 1", dissipation_identity),
            ("criterion 2", b_minor_symmetry),
            ("criterion 3 (short runs)", lambda: contraction(quick=True)),
            ("criterion 5", static_fixed_point),
            ("criterion 7 (single grid)", lambda: eigen_convergence(quick=True)),
            ("criterion 8", classification),
            ("criterion 9", long_time_constraint),
            ("criterion 10", resolvent),
        ]
    items += [("property", oscillating_no_dissipation), ("property", scenario_oracles)]
    return items


def run_suite(level="fast", report=print):
    """Run the checks in order; returns the list of results."""
    results = []
    for label, fn in suite(level):
        t0 = time.perf_counter()
        try:
            res = fn()
        except Exception as exc:  # a crashing check is a failing check
            res = CheckResult(getattr(fn, "__name__", "check"), False, math.nan, math.nan, f"error: {exc}")
        res.seconds = time.perf_counter() - t0
        results.append(res)
        if report is not None:
            report(f"{label}: {res.line()} ({res.seconds:.1f}s)")
    return results

import logging
import math

import numpy as np
import pytest

from evflux.constitutive import MollifierKernel, PressureParams, affine_law, constant_law
from evflux.diagnostics import (
    COLUMNS,
    IDENTITY,
    ZLOGZ,
    DiagnosticsSeries,
    Renormalization,
    TestFunctionBank,
    bf_transport_residual,
    check_renormalization,
    convexity_defect,
    dissipation_rates,
    energy,
    energy_ledger,
    eps_terms,
    evf_constitutive,
    evf_dynamic,
    evf_hodge,
    evf_weak_continuity_probe,
    integrability_monitor,
    l2_ledger,
    mass_ledger,
    oscillation_defect,
    power_renormalization,
    record,
    renorm_residual,
    trapezoid_weights,
    truncation_bound,
    weak_product_defect,
)
from evflux.grid import Grid
from evflux.solver import Manufactured, Solver, SolverParams, State, Trajectory, initial_data

from conftest import dense_for

KERNEL = MollifierKernel(0.6)
FOUR_PI2 = 4 * math.pi**2


def _solver(grid, **kw):
    base = dict(kernel=KERNEL)
    base.update(kw)
    return Solver(grid, SolverParams(**base))


def _state(grid, rho, u):
    return State(0.0, rho, rho * u)


# -- energy and dissipation -------------------------------------------------


def test_energy_examples(grid32):
    ctx = _solver(grid32, pressure=PressureParams(A=1.0, gamma=2.0, delta=0.1, beta=5.0))
    one = np.ones(grid32.shape)
    zero = np.zeros((2,) + grid32.shape)
    e = energy(_state(grid32, one, zero), ctx)
    assert e["E_kin"] == 0.0
    assert e["E_int"] == pytest.approx(FOUR_PI2 * (1 + 0.1 / 4), rel=1e-14)
    u = np.stack([one, 0 * one])
    e = energy(_state(grid32, one, u), ctx)
    assert e["E_kin"] == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert e["E"] == pytest.approx(e["E_kin"] + e["E_int"])


def test_shear_dissipation(grid32):
    ctx = _solver(grid32, law=constant_law(1.0))
    _, y = grid32.mesh()
    u = np.stack([np.sin(y), np.zeros_like(y)])
    d_v, d_a, d_s = dissipation_rates(_state(grid32, np.ones(grid32.shape), u), ctx)
    assert d_v == pytest.approx(2 * math.pi**2, rel=1e-13)
    assert d_s == pytest.approx(2 * math.pi**2, rel=1e-13)
    assert d_a == 0.0


def test_constant_law_dissipation_forms_agree(grid32, rng):
    ctx = _solver(grid32, law=constant_law(0.3, 0.1))
    s = initial_data("taylor-green", grid32, amp=0.1, seed=2, U=0.7)
    d_v, _, d_s = dissipation_rates(s, ctx)
    assert d_s == pytest.approx(d_v, rel=1e-12)


def test_artificial_dissipation_example(grid32):
    eps = 0.01
    ctx = _solver(grid32, pressure=PressureParams(A=1.0, gamma=2.0), eps=eps)
    x, _ = grid32.mesh()
    rho = 1 + 0.1 * np.cos(x)
    # H'' = A gamma rho^(gamma - 2) = 2, |grad rho|^2 = 0.01 sin^2 x
    _, d_a, _ = dissipation_rates(State(0.0, rho, np.zeros((2,) + grid32.shape)), ctx)
    assert d_a == pytest.approx(eps * 2 * 0.01 * 2 * math.pi**2, rel=1e-12)


# -- effective viscous flux ------------------------------------------------


def _band_limited_state(grid, rng):
    x, y = grid.mesh()
    rho = 1 + 0.2 * np.cos(x) + 0.1 * np.sin(x + 2 * y)
    u = np.stack([0.5 * np.sin(y) + 0.2 * np.cos(2 * x), 0.3 * np.cos(x - y)])
    return _state(grid, rho, u), u


def test_evf_routes_match_dense_oracle(rng):
    g = Grid.square(32)
    ctx = _solver(g, pressure=PressureParams(A=1.0, gamma=1.4), law=affine_law(0.1, 0.3, 0.05, 0.1),
                  kernel=MollifierKernel(0.8))
    s, u = _band_limited_state(g, rng)
    o = dense_for(g)
    # oracle: P - div Lap^-1 div S with S built from oracle derivatives
    eta = ctx.mollified(s.rho)
    mu, lam = 0.1 + 0.3 * eta, 0.05 + 0.1 * eta
    du = [[o.deriv(u[i], j) for j in range(2)] for i in range(2)]
    div = du[0][0] + du[1][1]
    acc = 0.0
    for i in range(2):
        for j in range(2):
            S = (lam * div if i == j else 0.0) + mu * (du[i][j] + du[j][i])
            acc = acc + o.apply(S, -(o.ik(i) * o.ik(j)).real * o.inv_k2())
    oracle = s.rho**1.4 - acc
    qc = evf_constitutive(s, ctx, u)
    qh = evf_hodge(s, ctx, u)
    for q in (qc, qh):
        assert np.abs((q - q.mean()) - (oracle - oracle.mean())).max() < 1e-12


def test_evf_at_rest_is_pressure(grid32):
    ctx = _solver(grid32, law=affine_law(0.1, 0.2))
    x, _ = grid32.mesh()
    rho = 1 + 0.3 * np.cos(x)
    s = State(0.0, rho, np.zeros((2,) + grid32.shape))
    assert np.abs(evf_constitutive(s, ctx) - rho**2).max() < 1e-14


def test_evf_dynamic_on_manufactured_solution():
    g = Grid.square(32)
    base = SolverParams(pressure=PressureParams(gamma=1.4), law=affine_law(0.05, 0.05), kernel=KERNEL,
                        eps=0.01, cfl=0.2, t_end=0.3)
    mms = Manufactured(g, base)
    ctx = Solver(g, mms.solver_params())
    window = [mms.state(t) for t in (0.2, 0.21, 0.23)]
    out = evf_dynamic(window, ctx)
    assert out.gap < 1e-3
    assert 0 < out.eps_correction < 1
    with pytest.raises(ValueError):
        evf_dynamic(window[:2], ctx)
    with pytest.raises(ValueError):
        evf_dynamic(window[::-1], ctx)


def test_constant_state_row_is_clean(grid32):
    ctx = _solver(grid32, law=affine_law(0.1, 0.1), eps=0.01, pressure=PressureParams(gamma=2.0, delta=0.1, beta=5.0))
    row = record(ctx, initial_data("uniform", grid32, rho0=1.2, velocity=(0.3, 0.0)))
    assert set(COLUMNS) <= set(row)
    for key in ("evf_residual", "renorm_resid_id", "renorm_resid_zlogz", "D_v", "D_a", "D_S"):
        assert abs(row[key]) < 1e-13
    assert row["Lbeta"] == pytest.approx(1.2 * FOUR_PI2 ** (1 / 5), rel=1e-13)


def test_record_residuals_on_evolving_state(grid32):
    ctx = _solver(grid32, law=affine_law(0.05, 0.05), eps=0.01)
    row = record(ctx, initial_data("taylor-green", grid32, amp=0.2, seed=4))
    assert row["evf_residual"] < 1e-12
    assert row["renorm_resid_id"] < 1e-12
    assert row["renorm_resid_zlogz"] < 1e-2


# -- ledgers ---------------------------------------------------------------


def test_energy_ledger_on_closed_form_series():
    t = np.linspace(0, 1, 41)
    rows = [dict(t=ti, E=math.exp(-ti), D_S=math.exp(-ti), D_a=0.0, mass=1.0) for ti in t]
    led = energy_ledger(DiagnosticsSeries(rows), tol=1e-3)
    assert led["closure"] < 1e-6 and led["pass"]
    rows = [dict(t=ti, E=1.0 + 0.1 * ti, D_S=0.0, D_a=0.0) for ti in t]
    led = energy_ledger(DiagnosticsSeries(rows), tol=1e-2)
    assert not led["pass"] and led["max_excess"] == pytest.approx(0.1)


def test_ledgers_on_run(grid32):
    eps = 0.01
    ctx = _solver(grid32, law=affine_law(0.05, 0.05), eps=eps, cfl=0.2, t_end=0.3)
    traj = ctx.run(initial_data("taylor-green", grid32, amp=0.2, seed=5))
    series = DiagnosticsSeries.of(traj)
    assert mass_ledger(series)["rel_drift"] < 1e-13
    led = energy_ledger(series)
    assert led["pass"] and led["closure"] < 1e-4
    assert l2_ledger(series, eps)["closure"] < 1e-8


# -- weak residuals -------------------------------------------------------


def test_bank_profiles(grid32):
    bank = TestFunctionBank(grid32, 0.0, 2.0)
    assert len(bank) == 18
    psi, dpsi = bank.psi(np.array([0.0, 2.0, -1.0, 3.0]))
    assert np.abs(psi).max() < 1e-30 and np.abs(dpsi).max() < 1e-28
    t = np.linspace(0, 2, 21)
    psi, dpsi = bank.psi(t)
    h = 1e-6
    fd = (bank.psi(t + h)[0] - bank.psi(t - h)[0]) / (2 * h)
    assert np.allclose(dpsi, fd, atol=1e-7)
    # exact quadrature of a derivative of a periodic trig polynomial
    assert np.abs(dpsi @ trapezoid_weights(t)).max() < 1e-13
    with pytest.raises(ValueError):
        TestFunctionBank(grid32, 1.0, 1.0)


def test_bank_warns_for_few_snapshots(grid32, caplog):
    traj = Trajectory(snapshots=[State(float(t), None, None) for t in range(5)])
    with caplog.at_level(logging.WARNING):
        TestFunctionBank.for_trajectory(traj, grid32)
    assert "only 5 snapshots" in caplog.text


@pytest.fixture(scope="module")
def short_run():
    g = Grid.square(32)
    ctx = Solver(g, SolverParams(law=affine_law(0.05, 0.05), kernel=KERNEL, eps=0.01, cfl=0.1, t_end=0.38))
    outs = np.linspace(0, 0.38, 20)[1:]
    traj = ctx.run(initial_data("taylor-green", g, amp=0.2, seed=6), outputs=outs, recorder=lambda c, s: {})
    return ctx, traj


def test_weak_renormalization_residuals(short_run):
    ctx, traj = short_run
    assert renorm_residual(traj, IDENTITY, ctx) < 1e-7
    assert renorm_residual(traj, ZLOGZ, ctx) < 1e-4
    assert renorm_residual(traj, power_renormalization(1.5), ctx) < 1e-4
    assert bf_transport_residual(traj, IDENTITY, ctx) < 1e-4


def test_bf_factorizes_for_constant_law(grid32):
    law = constant_law(0.2, 0.1)
    ctx = Solver(grid32, SolverParams(law=law, kernel=KERNEL, eps=0.01, cfl=0.2, t_end=0.2))
    traj = ctx.run(initial_data("taylor-green", grid32, amp=0.2, seed=8), outputs=np.linspace(0, 0.2, 17)[1:],
                   recorder=lambda c, s: {})
    r = renorm_residual(traj, ZLOGZ, ctx, values=True)
    b = bf_transport_residual(traj, ZLOGZ, ctx, values=True)
    keep = np.abs(r) > 1e-14
    assert np.allclose(b[keep] / r[keep], 1 / (0.1 + 2 * 0.2), rtol=1e-10)


def test_renormalization_admissibility():
    check_renormalization(ZLOGZ, 2.0, np.array([0.0, 1.0, 2.0]))
    bad = Renormalization("sqrt-shift", lambda z: np.sqrt(z - 2.0), lambda z: 0.5 / np.sqrt(z - 2.0))
    with np.errstate(invalid="ignore"), pytest.raises(ValueError):
        check_renormalization(bad, 2.0, np.array([1.0, 3.0]))
    with pytest.raises(ValueError):
        power_renormalization(0.0)
    z = np.array([0.5, 2.0])
    assert ZLOGZ.b(z) == pytest.approx(z)


# -- probe --------------------------------------------------------------


def test_probe_identical_runs_and_ratio(short_run):
    ctx, traj = short_run
    rep = evf_weak_continuity_probe([traj, traj], IDENTITY, ctx)
    assert rep.deviations[0] == rep.deviations[1]
    assert rep.product_deviations[0] == rep.product_deviations[1]
    with pytest.raises(ValueError):
        evf_weak_continuity_probe([], IDENTITY, ctx)


def test_probe_ratio_is_viscosity_for_constant_law(grid32):
    ctx = Solver(grid32, SolverParams(law=constant_law(0.2, 0.1), kernel=KERNEL, cfl=0.2, t_end=0.1))
    traj = ctx.run(initial_data("taylor-green", grid32, amp=0.2, seed=8), outputs=np.linspace(0, 0.1, 17)[1:],
                   recorder=lambda c, s: {})
    rep = evf_weak_continuity_probe([traj], IDENTITY, ctx, block=1)
    assert np.allclose(rep.ratio_JI(), 0.5, rtol=1e-10)
    # block 1 makes the coarse proxy the run itself
    assert rep.deviations[0] < 1e-12 * np.abs(rep.I_star).max()


# -- defects and monitors --------------------------------------------------


def test_convexity_two_point_example():
    g = Grid.square(16, length=1.0)
    f = np.ones(g.shape)
    f[1::2, :] = 3.0
    zlogz = lambda z: z * np.log(z)  # noqa: E731
    expect = 1.5 * math.log(3) - 2 * math.log(2)  # 0.26158...
    assert convexity_defect(f, zlogz, 2, g) == pytest.approx(expect, rel=1e-13)
    assert abs(convexity_defect(np.full(g.shape, 2.0), zlogz, 4, g)) < 1e-15
    with np.errstate(invalid="ignore", divide="ignore"), pytest.raises(ValueError):
        convexity_defect(f - 2.0, np.log, 2, g)


def test_defects_nonnegative(grid32, rng):
    rho = 1 + 0.5 * rng.random(grid32.shape)
    assert convexity_defect(rho, lambda z: z**2.5, 4, grid32) >= 0
    assert weak_product_defect(rho, rho**1.4, 4, grid32) >= 0


def test_oscillation_defect_example(grid32):
    one = np.ones(grid32.shape)
    assert oscillation_defect([one, one], one, 10.0, 2.0, grid32) == 0.0
    assert oscillation_defect([2 * one], one, 10.0, 2.0, grid32) == pytest.approx(FOUR_PI2 ** (1 / 3))
    # both above 3M: truncations agree
    assert oscillation_defect([40 * one], 50 * one, 10.0, 2.0, grid32) == 0.0


def test_truncation_bound(grid32, rng):
    rho = 3 * rng.random(grid32.shape) ** 4
    for M in (0.5, 1.0, 2.0):
        lhs, rhs = truncation_bound(rho, M, 1.0, 2.0, grid32)
        assert lhs <= rhs
    with pytest.raises(ValueError):
        truncation_bound(rho, 1.0, 2.0, 2.0, grid32)


def test_integrability_monitor_constant(grid32):
    ctx = _solver(grid32, pressure=PressureParams(gamma=2.0, delta=0.1, beta=5.0))
    one = np.ones(grid32.shape)
    z = np.zeros((2,) + grid32.shape)
    traj = Trajectory(snapshots=[State(t, one, z) for t in (0.0, 0.5, 1.5)])
    mon = integrability_monitor(traj, ctx, 0.3)
    assert mon["gamma_p1"] == pytest.approx(1.5 * FOUR_PI2)
    assert mon["delta_beta_omega"] == pytest.approx(0.1 * 1.5 * FOUR_PI2)
    with pytest.raises(ValueError, match="omega"):
        integrability_monitor(traj, ctx, 0.6)


def test_eps_terms_scale_with_eps(grid32):
    s = initial_data("taylor-green", grid32, amp=0.2, seed=1)
    traj = Trajectory(snapshots=[State(0.0, s.rho, s.m), State(1.0, s.rho, s.m)])
    a = eps_terms(traj, _solver(grid32, eps=0.01))
    b = eps_terms(traj, _solver(grid32, eps=0.02))
    for k in a:
        assert b[k] == pytest.approx(2 * a[k], rel=1e-12)


def test_oscillation_defect_below_truncation_is_plain_distance(grid32, rng):
    ref = 1 + 0.5 * rng.random(grid32.shape)
    rho = 1 + 0.5 * rng.random(grid32.shape)
    from evflux.grid import lp_norm

    # both fields stay below M = 2, where T_M is the identity
    assert oscillation_defect([rho], ref, 2.0, 2.0, grid32) == pytest.approx(lp_norm(rho - ref, grid32, 3.0), rel=1e-14)
    x, _ = grid32.mesh()
    for i in (1, 2, 3):
        bump = np.sin(i * x)
        assert oscillation_defect([ref + bump], ref, 1.0, 2.0, grid32) <= lp_norm(bump, grid32, 3.0) + 1e-12


def test_probe_accepts_external_snapshot_sequences(tmp_path, grid32):
    from evflux.io import load_trajectory, write_snapshot

    ctx = _solver(grid32, law=affine_law(0.05, 0.05))
    x, y = grid32.mesh()
    runs = []
    for n in (2, 4):
        paths = []
        for k, t in enumerate(np.linspace(0, 1, 17)):
            rho = 1 + 0.3 * np.sin(n * x) * np.cos(y) * (1 + 0.1 * t)
            m = np.stack([0.1 * rho * np.sin(n * y), 0 * rho])
            p = tmp_path / f"n{n}_{k:02d}.evfx"
            write_snapshot(State(float(t), rho, m), grid32, p)
            paths.append(p)
        runs.append(load_trajectory(paths)[0])
    rep = evf_weak_continuity_probe(runs, IDENTITY, ctx)
    assert len(rep.deviations) == 2 and all(np.isfinite(rep.deviations))

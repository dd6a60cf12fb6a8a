"""Energy and mass ledgers, effective-viscous-flux routes, weak residuals and defect measures.

Most functions take a :class:`~evflux.solver.Solver` as context; it bundles
the grid, spectral operators and physical parameters.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson, simpson

from . import kernels
from .constitutive import internal_energy_density, mollify, pressure, stress, truncate
from .grid import Grid, coarse_average, integrate, lp_norm
from .solver import Solver, State, Trajectory

log = logging.getLogger(__name__)

COLUMNS = (
    "t", "E", "E_kin", "E_int", "D_v", "D_a", "D_S", "mass", "min_rho", "clip_count",
    "evf_residual", "renorm_resid_id", "renorm_resid_zlogz",
    "Lgamma", "Lgammap1", "Lbeta", "Lbetap1",
)


@dataclass
class DiagnosticsSeries:
    """Time-indexed diagnostic rows; each row carries every name in ``COLUMNS`` plus ledger extras."""

    rows: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: dict) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    @classmethod
    def of(cls, traj: Trajectory) -> "DiagnosticsSeries":
        return cls(list(traj.series))


# --------------------------------------------------------------------------
# renormalizations


@dataclass(frozen=True)
class Renormalization:
    """``B`` with ``B'`` and ``b(z) = z B'(z) - B(z)``."""

    name: str
    B: Callable[[np.ndarray], np.ndarray]
    dB: Callable[[np.ndarray], np.ndarray]

    def b(self, z: np.ndarray) -> np.ndarray:
        return z * self.dB(z) - self.B(z)


def _zlogz(z):
    z = np.asarray(z, dtype=float)
    return np.where(z > 0, z * np.log(np.where(z > 0, z, 1.0)), 0.0)


IDENTITY = Renormalization("id", lambda z: np.asarray(z, dtype=float), lambda z: np.ones_like(np.asarray(z, dtype=float)))
ZLOGZ = Renormalization("zlogz", _zlogz, lambda z: np.log(np.maximum(z, 1e-300)) + 1.0)


def power_renormalization(theta: float) -> Renormalization:
    if not 0 < theta:
        raise ValueError(f"renormalization exponent must be positive, got {theta}")
    return Renormalization(f"z^{theta:g}", lambda z: np.maximum(z, 0.0) ** theta,
                           lambda z: theta * np.maximum(z, 1e-300) ** (theta - 1.0))


RENORMALIZATIONS = {"id": IDENTITY, "zlogz": ZLOGZ}


def check_renormalization(B: Renormalization, gamma: float, rho: np.ndarray) -> None:
    """Growth test ``|z B'(z)| <= C (z^theta + z^(gamma/2))`` sampled on the range of ``rho``.

    A finite ratio on ``[min rho, max rho]`` with ``theta = 1`` is accepted; non-finite
    values or a vanishing-density blow-up faster than ``z^0`` are rejected.
    """
    z = np.linspace(max(float(np.min(rho)), 1e-12), max(float(np.max(rho)), 1e-12) * 1.5, 257)
    g = np.abs(z * B.dB(z))
    if not np.isfinite(g).all() or not np.isfinite(B.B(z)).all():
        raise ValueError(f"renormalization {B.name!r} is not admissible on the density range")


# --------------------------------------------------------------------------
# energy and dissipation


def energy(s: State, ctx: Solver) -> dict:
    p = ctx.params
    g = ctx.grid
    r = np.maximum(s.rho, p.rho_floor)
    kin = integrate(0.5 * (s.m * s.m).sum(axis=0) / r, g)
    internal = integrate(internal_energy_density(s.rho, p.pressure), g)
    return {"E": kin + internal, "E_kin": kin, "E_int": internal}


def dissipation_rates(s: State, ctx: Solver, u: np.ndarray | None = None) -> tuple[float, float, float]:
    """``(D_v, D_a, D_S)``: the classical form, the artificial term and the exact power ``int S : grad u``."""
    p = ctx.params
    g = ctx.grid
    sp = ctx.sp
    if u is None:
        u = ctx.velocity(s)
    du = sp.velocity_gradient(u)
    div = np.trace(du, axis1=0, axis2=1)
    mu, lam = ctx.viscosities(s.rho)
    d_v = integrate(mu * (du * du).sum(axis=(0, 1)) + (lam + mu) * div * div, g)
    S = stress(u, mu, lam, sp)
    d_s = integrate((S * du).sum(axis=(0, 1)), g)
    if p.eps:
        grad = sp.gradient(s.rho)
        pp = p.pressure
        h2 = kernels.pressure_curvature(s.rho, p.rho_floor, pp.A, pp.gamma, pp.delta, pp.beta)
        d_a = p.eps * integrate(h2 * (grad * grad).sum(axis=0), g)
    else:
        d_a = 0.0
    return d_v, d_a, d_s


# --------------------------------------------------------------------------
# effective viscous flux


def evf_constitutive(s: State, ctx: Solver, u: np.ndarray | None = None) -> np.ndarray:
    """``q = P - (lam + 2 mu) div u - 2 sum_ij [mu; R_i R_j] D_ij(u)``."""
    sp = ctx.sp
    if u is None:
        u = ctx.velocity(s)
    mu, lam = ctx.viscosities(s.rho)
    D = sp.sym_gradient(u)
    div = np.trace(D, axis1=0, axis2=1)
    q = pressure(s.rho, ctx.params.pressure) - sp.product(lam + 2.0 * mu, div)
    if not ctx.params.law.is_constant:
        q = q - 2.0 * sp.commutator_contract(mu, D)
    return q


def evf_hodge(s: State, ctx: Solver, u: np.ndarray | None = None) -> np.ndarray:
    """``P - div Delta^-1 div S``; equals :func:`evf_constitutive` up to an additive constant."""
    sp = ctx.sp
    if u is None:
        u = ctx.velocity(s)
    mu, lam = ctx.viscosities(s.rho)
    return pressure(s.rho, ctx.params.pressure) - sp.double_riesz_contract(stress(u, mu, lam, sp))


def _div_inv_lap(sp, v: np.ndarray) -> np.ndarray:
    return sp.inv_laplacian(sp.divergence(v))


def _convective(ctx: Solver, s: State, u: np.ndarray) -> np.ndarray:
    """``div Delta^-1 div (m (x) u)`` with the same dealiasing as the solver."""
    sp = ctx.sp
    n = ctx.grid.ndim
    acc = 0.0
    for i in range(n):
        for j in range(n):
            acc = acc + sp.hodge_symbol(i, j) * sp.mask * sp.fft(s.m[i] * u[j])
    return sp.ifft(acc)


def _eps_force(ctx: Solver, s: State, u: np.ndarray) -> np.ndarray:
    sp = ctx.sp
    du = sp.velocity_gradient(u)
    x = kernels.eps_cross(du, sp.gradient(s.rho), ctx.params.eps)
    return np.stack([sp.dealias(xi) for xi in x])


def _match_mean(q: np.ndarray, ref: np.ndarray) -> np.ndarray:
    return q - q.mean() + ref.mean()


def rel_gap(a: np.ndarray, b: np.ndarray) -> float:
    """``||a - b|| / ||b - mean b||`` on the grid (means matched beforehand by callers).

    When ``b`` is constant up to round-off the absolute difference is returned.
    """
    scale = float(np.sqrt(np.mean((b - b.mean()) ** 2)))
    diff = float(np.sqrt(np.mean((a - b) ** 2)))
    if scale <= 1e-12 * max(float(np.abs(b).max()), 1.0):
        return diff
    return diff / scale


@dataclass
class EVFDynamic:
    q: np.ndarray
    q_constitutive: np.ndarray
    eps_correction: float
    gap: float


def evf_dynamic(window: Sequence[State], ctx: Solver) -> EVFDynamic:
    """Momentum-equation route: ``-div Delta^-1 d_t m - div Delta^-1 div(m (x) u)``.

    ``d_t m`` is the centered difference over three snapshots (non-uniform
    spacing allowed).  The eps-term ``-eps div Delta^-1 ((grad u) grad rho)``
    and any manufactured forcing are added; the eps contribution is reported
    separately as a relative size.
    """
    if len(window) < 3:
        raise ValueError("evf_dynamic needs three consecutive snapshots")
    s0, s1, s2 = window[-3], window[-2], window[-1]
    h1, h2 = s1.t - s0.t, s2.t - s1.t
    if not (h1 > 0 and h2 > 0):
        raise ValueError("snapshot times must be strictly increasing")
    dm = (-h2 / (h1 * (h1 + h2))) * s0.m + ((h2 - h1) / (h1 * h2)) * s1.m + (h1 / (h2 * (h1 + h2))) * s2.m
    p = ctx.params
    if p.forcing is not None:
        _, f = p.forcing(s1.t)
        dm = dm - f
    sp = ctx.sp
    u = ctx.velocity(s1)
    q = -_div_inv_lap(sp, dm) - _convective(ctx, s1, u)
    eps_size = 0.0
    if p.eps:
        corr = -_div_inv_lap(sp, _eps_force(ctx, s1, u))
        q = q + corr
    qc = evf_constitutive(s1, ctx, u)
    q = _match_mean(q, qc)
    if p.eps:
        scale = float(np.sqrt(np.mean((qc - qc.mean()) ** 2)))
        eps_size = float(np.sqrt(np.mean((corr - corr.mean()) ** 2))) / max(scale, 1e-300)
    return EVFDynamic(q, qc, eps_size, rel_gap(q, qc))


def evf_instant_residual(s: State, ctx: Solver, dm: np.ndarray, u: np.ndarray) -> float:
    """Two-route gap with the exact right-hand side in place of a snapshot difference."""
    p = ctx.params
    if p.forcing is not None:
        dm = dm - p.forcing(s.t)[1]
    sp = ctx.sp
    q = -_div_inv_lap(sp, dm) - _convective(ctx, s, u)
    if p.eps:
        q = q - _div_inv_lap(sp, _eps_force(ctx, s, u))
    qc = evf_constitutive(s, ctx, u)
    return rel_gap(_match_mean(q, qc), qc)


# --------------------------------------------------------------------------
# per-step record


def _safe_norm(rho: np.ndarray, grid: Grid, p: float) -> float:
    return lp_norm(rho, grid, p) if p >= 1 else 0.0


def _chain_rule_residual(ctx: Solver, s: State, drho: np.ndarray, u: np.ndarray, B: Renormalization) -> float:
    """Relative L2 size of ``B'(rho) d_t rho + div(B u) + b div u - eps B' Lap rho``.

    The transported flux is ``B(rho) m / rho`` so that ``B = id`` reproduces the
    solver's mass flux exactly; ``div u`` uses the dealiased velocity.
    """
    sp = ctx.sp
    r = np.maximum(s.rho, ctx.params.rho_floor)
    div = sp.divergence(u)
    dBr = B.dB(r)
    transport = sp.divergence(B.B(r) * (s.m / r))
    res = dBr * drho + transport + B.b(r) * div
    if ctx.params.eps:
        res = res - ctx.params.eps * dBr * sp.laplacian(s.rho)
    if ctx.params.forcing is not None:
        res = res - dBr * ctx.params.forcing(s.t)[0]
    scale = float(np.sqrt(np.mean((dBr * drho) ** 2 + transport**2)))
    val = float(np.sqrt(np.mean(res**2)))
    ref = float(np.abs(B.B(r) * s.m / r).max()) * max(ctx.grid.dims)
    if scale <= 1e-12 * max(ref, 1.0):
        return val
    return val / scale


def record(ctx: Solver, s: State) -> dict:
    """One diagnostics row (CSV columns plus ledger extras prefixed ``x_``)."""
    p = ctx.params
    g = ctx.grid
    sp = ctx.sp
    u = ctx.velocity(s)
    drho, dm = ctx.rhs(s)
    row = {"t": float(s.t)}
    row.update(energy(s, ctx))
    d_v, d_a, d_s = dissipation_rates(s, ctx, u)
    row.update(D_v=d_v, D_a=d_a, D_S=d_s)
    row["mass"] = integrate(s.rho, g)
    row["min_rho"] = float(s.rho.min())
    row["clip_count"] = int(ctx.clip_count)
    row["evf_residual"] = evf_instant_residual(s, ctx, dm, u)
    row["renorm_resid_id"] = _chain_rule_residual(ctx, s, drho, u, IDENTITY)
    row["renorm_resid_zlogz"] = _chain_rule_residual(ctx, s, drho, u, ZLOGZ)
    pp = p.pressure
    row["Lgamma"] = _safe_norm(s.rho, g, pp.gamma)
    row["Lgammap1"] = _safe_norm(s.rho, g, pp.gamma + 1)
    row["Lbeta"] = _safe_norm(s.rho, g, pp.beta) if pp.delta else 0.0
    row["Lbetap1"] = _safe_norm(s.rho, g, pp.beta + 1) if pp.delta else 0.0
    grad = sp.gradient(s.rho)
    row["x_l2_sq"] = integrate(s.rho * s.rho, g)
    row["x_grad_sq"] = integrate((grad * grad).sum(axis=0), g)
    row["x_rho2_divu"] = integrate(s.rho * s.rho * sp.divergence(u), g)
    row["x_rho_divm"] = integrate(s.rho * sp.divergence(s.m), g)
    return row


# --------------------------------------------------------------------------
# ledgers over a series


def _cumulative(y: np.ndarray, t: np.ndarray) -> np.ndarray:
    if t.size < 3:
        out = np.zeros_like(y)
        if t.size == 2:
            out[1] = 0.5 * (y[0] + y[1]) * (t[1] - t[0])
        return out
    return np.concatenate([[0.0], cumulative_simpson(y, x=t)])


def energy_ledger(series: DiagnosticsSeries, tol: float = 1e-2) -> dict:
    """Discrete energy inequality ``E(t) + int_0^t (D_S + D_a) <= E(0)(1 + tol)``."""
    t = series.column("t")
    E = series.column("E")
    spent = _cumulative(series.column("D_S") + series.column("D_a"), t)
    lhs = E + spent
    excess = float(np.max(lhs / E[0] - 1.0)) if E.size else 0.0
    return {
        "E0": float(E[0]),
        "E_end": float(E[-1]),
        "dissipated": float(spent[-1]),
        "max_excess": excess,
        "closure": float(np.max(np.abs(lhs - E[0])) / E[0]),
        "pass": bool(excess <= tol),
        "margin": float(tol - excess),
    }


def mass_ledger(series: DiagnosticsSeries) -> dict:
    m = series.column("mass")
    drift = float(np.max(np.abs(m - m[0]))) if m.size else 0.0
    return {"mass0": float(m[0]), "drift": drift, "rel_drift": drift / abs(m[0])}


def l2_ledger(series: DiagnosticsSeries, eps: float) -> dict:
    """``||rho(t)||^2 + 2 eps int|grad rho|^2 + int int rho^2 div u = ||rho_0||^2``, relative closure."""
    t = series.column("t")
    l2 = series.column("x_l2_sq")
    spent = _cumulative(2 * eps * series.column("x_grad_sq") + series.column("x_rho2_divu"), t)
    lhs = l2 + spent
    return {"l2_0": float(l2[0]), "l2_end": float(l2[-1]), "closure": float(np.max(np.abs(lhs - l2[0])) / l2[0])}


# --------------------------------------------------------------------------
# test functions and weak residuals


class TestFunctionBank:
    """18 test functions ``psi_a(t) chi_b(x)``: 3 time profiles times 6 low Fourier modes.

    With ``tau = (t - t0)/(t1 - t0)`` the profiles are ``sin(pi tau)^8 (1 + c_a sin(2 pi tau))``
    for ``c_a`` in ``(0, 1/2, -1/2)``.  They vanish to eighth order at both ends
    and are trigonometric polynomials of period one in ``tau``, so the
    trapezoid rule on uniformly spaced snapshots integrates them (and their
    derivatives) exactly and the weak pairings converge at high order.
    """

    __test__ = False  # not a pytest class

    SHAPES = (0.0, 0.5, -0.5)
    POWER = 8
    # profiles carry harmonics up to 5 cycles per window; resolve them comfortably
    MIN_SNAPSHOTS = 16
    MODES = ("one", "cos1", "sin1", "cos2", "sin2", "cos12")

    def __init__(self, grid: Grid, t0: float, t1: float):
        if not t1 > t0:
            raise ValueError("test-function window must have positive length")
        self.grid = grid
        self.t0, self.t1 = float(t0), float(t1)
        x = [c * (2 * np.pi / length) for c, length in zip(grid.coords, grid.lengths)]
        k = [2 * np.pi / length for length in grid.lengths]
        one = np.ones(grid.shape)
        zero = np.zeros(grid.shape)

        def full(a):
            return np.broadcast_to(a, grid.shape).copy()

        def grad(*comps):
            out = [full(c) for c in comps]
            out += [zero] * (grid.ndim - len(out))
            return np.stack(out)

        c1, s1, c2, s2 = np.cos(x[0]), np.sin(x[0]), np.cos(x[1]), np.sin(x[1])
        c12, s12 = np.cos(x[0] + x[1]), np.sin(x[0] + x[1])
        self.chi = [one, full(c1), full(s1), full(c2), full(s2), full(c12)]
        self.grad_chi = [
            grad(zero),
            grad(-k[0] * s1),
            grad(k[0] * c1),
            grad(zero, -k[1] * s2),
            grad(zero, k[1] * c2),
            grad(-k[0] * s12, -k[1] * s12),
        ]

    def __len__(self) -> int:
        return len(self.SHAPES) * len(self.chi)

    def psi(self, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Time profiles and their derivatives, shape ``(3, len(t))``; zero outside the window."""
        T = self.t1 - self.t0
        tau = (np.asarray(t, dtype=float) - self.t0) / T
        inside = (tau >= 0) & (tau <= 1)
        sn, cs = np.sin(np.pi * tau), np.cos(np.pi * tau)
        n = self.POWER
        base = sn**n
        dbase = n * np.pi * sn ** (n - 1) * cs
        vals, ders = [], []
        for c in self.SHAPES:
            w = 1.0 + c * np.sin(2 * np.pi * tau)
            dw = 2 * np.pi * c * np.cos(2 * np.pi * tau)
            vals.append(np.where(inside, base * w, 0.0))
            ders.append(np.where(inside, (dbase * w + base * dw) / T, 0.0))
        return np.array(vals), np.array(ders)

    @classmethod
    def for_trajectory(cls, traj: Trajectory, grid: Grid) -> "TestFunctionBank":
        ts = traj.times
        if ts.size < cls.MIN_SNAPSHOTS:
            log.warning("only %d snapshots; weak residuals are dominated by time quadrature below %d",
                        ts.size, cls.MIN_SNAPSHOTS)
        return cls(grid, float(ts[0]), float(ts[-1]))


def trapezoid_weights(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    w = np.zeros_like(t)
    if t.size > 1:
        dt = np.diff(t)
        w[:-1] += 0.5 * dt
        w[1:] += 0.5 * dt
    return w


def _weak(bank: TestFunctionBank, times: np.ndarray, density, flux, source) -> np.ndarray:
    """``int int Z phi_t + Z v . grad phi + h phi`` for every bank function.

    ``density[k]``, ``flux[k]`` (vector) and ``source[k]`` are the fields at
    snapshot ``k``; spatial pairings by the rectangle rule, time by trapezoid.
    """
    g = bank.grid
    psi, dpsi = bank.psi(times)
    w = trapezoid_weights(times)
    nmodes = len(bank.chi)
    out = np.zeros((psi.shape[0], nmodes))
    for k in range(len(times)):
        z_chi = [integrate(density[k] * c, g) for c in bank.chi]
        f_gchi = [integrate((flux[k] * gc).sum(axis=0), g) for gc in bank.grad_chi]
        h_chi = [integrate(source[k] * c, g) for c in bank.chi]
        for a in range(psi.shape[0]):
            for b in range(nmodes):
                out[a, b] += w[k] * (dpsi[a, k] * z_chi[b] + psi[a, k] * (f_gchi[b] + h_chi[b]))
    return out.ravel()


def _snapshot_fields(ctx: Solver, s: State):
    r = np.maximum(s.rho, ctx.params.rho_floor)
    u_pt = s.m / r
    u = ctx.velocity(s)
    div = ctx.sp.divergence(u)
    return r, u_pt, u, div


def _renorm_terms(ctx: Solver, s: State, B: Renormalization):
    r, u_pt, _, div = _snapshot_fields(ctx, s)
    Bz = B.B(r)
    src = -B.b(r) * div
    if ctx.params.eps:
        src = src + ctx.params.eps * B.dB(r) * ctx.sp.laplacian(s.rho)
    if ctx.params.forcing is not None:
        src = src + B.dB(r) * ctx.params.forcing(s.t)[0]
    return Bz, Bz * u_pt, src


def renorm_residual(traj: Trajectory, B: Renormalization, ctx: Solver, bank: TestFunctionBank | None = None,
                    *, values: bool = False):
    """Max over the bank of the weak residual of ``d_t B + div(B u) + b div u = eps B' Lap rho``."""
    snaps = traj.snapshots
    check_renormalization(B, ctx.params.pressure.gamma, np.concatenate([s.rho.ravel() for s in snaps]))
    bank = bank or TestFunctionBank.for_trajectory(traj, ctx.grid)
    terms = [_renorm_terms(ctx, s, B) for s in snaps]
    r = _weak(bank, traj.times, [t[0] for t in terms], [t[1] for t in terms], [t[2] for t in terms])
    return r if values else float(np.max(np.abs(r)))


def _bf_terms(ctx: Solver, s: State, B: Renormalization):
    p = ctx.params
    sp = ctx.sp
    law = p.law
    r, u_pt, u, div = _snapshot_fields(ctx, s)
    rho_eta = ctx.mollified(s.rho)
    F = law.F(rho_eta)
    Fp = law.F_prime(rho_eta)
    Bz = B.B(r)
    Z = Bz * F
    h = -F * B.b(r) * div
    if not law.is_constant:
        bracket = sp.divergence(rho_eta * u) - sp.divergence(np.stack([ctx.mollified(mi) for mi in s.m]))
        if p.eps:
            bracket = bracket + p.eps * sp.laplacian(rho_eta)
        if p.forcing is not None:
            bracket = bracket + ctx.mollified(p.forcing(s.t)[0])
        h = h + Bz * Fp * bracket - Bz * rho_eta * Fp * div
    if p.eps:
        h = h + p.eps * F * B.dB(r) * sp.laplacian(s.rho)
    if p.forcing is not None:
        h = h + F * B.dB(r) * p.forcing(s.t)[0]
    return Z, Z * u_pt, h


def bf_transport_residual(traj: Trajectory, B: Renormalization, ctx: Solver, bank: TestFunctionBank | None = None,
                          *, values: bool = False):
    """Weak residual of ``d_t(B(rho) F([rho]^eta)) + div(B F u) = h``."""
    snaps = traj.snapshots
    check_renormalization(B, ctx.params.pressure.gamma, np.concatenate([s.rho.ravel() for s in snaps]))
    bank = bank or TestFunctionBank.for_trajectory(traj, ctx.grid)
    terms = [_bf_terms(ctx, s, B) for s in snaps]
    r = _weak(bank, traj.times, [t[0] for t in terms], [t[1] for t in terms], [t[2] for t in terms])
    return r if values else float(np.max(np.abs(r)))


# --------------------------------------------------------------------------
# weak-continuity probe


def _pairings(bank: TestFunctionBank, times: np.ndarray, fields: list[np.ndarray]) -> np.ndarray:
    """``int int phi f`` for every bank function."""
    psi, _ = bank.psi(times)
    w = trapezoid_weights(times)
    g = bank.grid
    chi = np.array([[integrate(f * c, g) for c in bank.chi] for f in fields])  # (K, modes)
    return np.einsum("k,ak,kb->ab", w, psi, chi).ravel()


@dataclass
class ProbeReport:
    deviations: list[float]
    product_deviations: list[float]
    I: list[np.ndarray]
    J: list[np.ndarray]
    I_star: np.ndarray
    J_star: np.ndarray

    def ratio_JI(self) -> np.ndarray:
        """Elementwise ``J_n / I_n`` over all runs and test functions with ``|I| > 0``."""
        I = np.concatenate(self.I)
        J = np.concatenate(self.J)
        keep = np.abs(I) > 1e-12 * max(np.abs(I).max(), 1e-300)
        return J[keep] / I[keep]


def evf_weak_continuity_probe(runs: Sequence[Trajectory], B: Renormalization, ctx: Solver,
                              bank: TestFunctionBank | None = None, block: int | None = None) -> ProbeReport:
    """Compare ``I_n[phi] = int int phi B(rho_n)[P(rho_n) F([rho_n]^eta) - div u_n]`` to a coarse limit proxy.

    ``I*`` uses block averages of ``B P`` and ``B`` from the last (finest)
    run, ``F`` of the mollified block-averaged density and that run's
    velocity.  ``J`` is the product form with ``(2 mu + lam)`` in place of
    ``F``.
    """
    if not runs:
        raise ValueError("probe needs at least one run")
    g = ctx.grid
    times = runs[0].times
    for r in runs:
        if r.snapshots[0].rho.shape != g.shape:
            raise ValueError("probe runs must share the grid")
        if r.times.shape != times.shape or not np.allclose(r.times, times, rtol=0, atol=1e-12):
            raise ValueError("probe runs must share snapshot times")
    block = block or max(1, min(g.dims) // 8)
    bank = bank or TestFunctionBank(g, float(times[0]), float(times[-1]))
    law = ctx.params.law
    pp = ctx.params.pressure

    def per_run(traj):
        fi, fj = [], []
        for s in traj.snapshots:
            r, _, _, div = _snapshot_fields(ctx, s)
            rho_eta = ctx.mollified(s.rho)
            Bz = B.B(r)
            P = pressure(s.rho, pp)
            visc = law.lam(rho_eta) + 2.0 * law.mu(rho_eta)
            fi.append(Bz * (P / visc - div))
            fj.append(Bz * (P - visc * div))
        return _pairings(bank, times, fi), _pairings(bank, times, fj)

    I, J = zip(*(per_run(r) for r in runs))
    fin_i, fin_j = [], []
    for s in runs[-1].snapshots:
        r, _, _, div = _snapshot_fields(ctx, s)
        Bz = B.B(r)
        P = pressure(s.rho, pp)
        rho_bar = coarse_average(s.rho, block)
        eta_bar = mollify(rho_bar, ctx.params.kernel, g, ctx.sp)
        visc = law.lam(eta_bar) + 2.0 * law.mu(eta_bar)
        bp = coarse_average(Bz * P, block)
        bb = coarse_average(Bz, block)
        fin_i.append(bp / visc - bb * div)
        fin_j.append(bp - visc * bb * div)
    I_star = _pairings(bank, times, fin_i)
    J_star = _pairings(bank, times, fin_j)
    dev = [float(np.max(np.abs(i - I_star))) for i in I]
    devj = [float(np.max(np.abs(j - J_star))) for j in J]
    return ProbeReport(dev, devj, list(I), list(J), I_star, J_star)


# --------------------------------------------------------------------------
# defects and monitors


def oscillation_defect(rho_seq: Sequence[np.ndarray], rho_ref: np.ndarray, M: float, gamma: float, grid: Grid) -> float:
    """``max_i ||T_M(rho_i) - T_M(rho_ref)||_{L^(gamma+1)}``."""
    ref = truncate(rho_ref, M)
    if not len(rho_seq):
        return 0.0
    return max(lp_norm(truncate(r, M) - ref, grid, gamma + 1) for r in rho_seq)


def convexity_defect(f: np.ndarray, phi: Callable[[np.ndarray], np.ndarray], block: int, grid: Grid) -> float:
    """``int coarse(phi(f)) - phi(coarse(f))``; nonnegative for convex ``phi`` by Jensen."""
    pf = phi(f)
    pc = phi(coarse_average(f, block))
    if not (np.isfinite(pf).all() and np.isfinite(pc).all()):
        raise ValueError("convex function is undefined on the range of the field")
    return integrate(coarse_average(pf, block) - pc, grid)


def weak_product_defect(rho: np.ndarray, P: np.ndarray, block: int, grid: Grid) -> float:
    """``int coarse(rho P) - coarse(rho) coarse(P)``; nonnegative when ``P`` is nondecreasing in ``rho``."""
    return integrate(coarse_average(rho * P, block) - coarse_average(rho, block) * coarse_average(P, block), grid)


def truncation_bound(rho: np.ndarray, M: float, p: float, gamma: float, grid: Grid) -> tuple[float, float]:
    """``(||T_M(rho) - rho||_p^p, ||rho||_gamma^gamma / M^(gamma - p))``; the first never exceeds the second."""
    if not 1 <= p < gamma:
        raise ValueError(f"need 1 <= p < gamma, got p={p}, gamma={gamma}")
    lhs = integrate(np.abs(truncate(rho, M) - rho) ** p, grid)
    rhs = integrate(np.abs(rho) ** gamma, grid) / M ** (gamma - p)
    return lhs, rhs


def omega_range(gamma: float, ndim: int) -> float:
    return min(1.0 / ndim, 2.0 * gamma / ndim - 1.0)


def integrability_monitor(traj: Trajectory, ctx: Solver, omega: float) -> dict:
    """Time-integrated ``int rho^(gamma+1)``, ``int rho^(beta+1)``, ``int rho^(gamma+omega)``, ``delta int rho^(beta+omega)``."""
    pp = ctx.params.pressure
    n = ctx.grid.ndim
    hi = omega_range(pp.gamma, n)
    if not 0 < omega < hi:
        raise ValueError(f"omega must lie in (0, {hi:g}), got {omega}")
    g = ctx.grid
    times = traj.times
    w = trapezoid_weights(times)

    def tint(power):
        return float(sum(wk * integrate(np.maximum(s.rho, 0.0) ** power, g) for wk, s in zip(w, traj.snapshots)))

    out = {"gamma_p1": tint(pp.gamma + 1), "gamma_omega": tint(pp.gamma + omega)}
    if pp.delta:
        out["beta_p1"] = tint(pp.beta + 1)
        out["delta_beta_omega"] = pp.delta * tint(pp.beta + omega)
    else:
        out["beta_p1"] = 0.0
        out["delta_beta_omega"] = 0.0
    return out


def eps_terms(traj: Trajectory, ctx: Solver) -> dict:
    """Time-integrated ``||eps (grad u) grad rho||_L1``, ``||eps Lap rho||_H^-1`` squared and ``eps int int |grad rho|^2``."""
    eps = ctx.params.eps
    sp = ctx.sp
    g = ctx.grid
    w = trapezoid_weights(traj.times)
    l1 = hm1 = grad2 = 0.0
    for wk, s in zip(w, traj.snapshots):
        u = ctx.velocity(s)
        grad = sp.gradient(s.rho)
        x = kernels.eps_cross(sp.velocity_gradient(u), grad, eps)
        l1 += wk * integrate(np.sqrt((x * x).sum(axis=0)), g)
        hm1 += wk * sp.hinv_norm(eps * sp.laplacian(s.rho)) ** 2
        grad2 += wk * eps * integrate((grad * grad).sum(axis=0), g)
    return {"cross_L1": l1, "lap_L2Hm1": math.sqrt(hm1), "eps_grad_sq": grad2}


def time_integral(y: np.ndarray, t: np.ndarray) -> float:
    return float(simpson(y, x=t)) if len(t) >= 3 else float(np.trapezoid(y, t)) if len(t) == 2 else 0.0

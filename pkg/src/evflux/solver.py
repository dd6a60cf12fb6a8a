"""Time integration of the regularized barotropic system on the periodic torus.

Evolved variables are the density ``rho`` and momentum ``m = rho u``::

    d_t rho = -div m + eps Lap rho
    d_t m   = -div(m (x) u) - grad P(rho) + div S - eps (grad u) grad rho

with ``S = lam([rho]^eta) div(u) I + 2 mu([rho]^eta) D(u)``.  The component
form of the last term is ``eps * sum_j d_j u_i d_j rho``; it enters with the
sign that cancels the kinetic-energy production of ``eps Lap rho``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .constitutive import (
    AdmissibilityError,
    MollifierKernel,
    PressureParams,
    ViscosityLaw,
    constant_law,
    mollify,
)
from .grid import Grid, integrate
from .spectral import Spectral

log = logging.getLogger(__name__)

Forcing = Callable[[float], tuple[np.ndarray, np.ndarray]]


class SolverAbort(RuntimeError):
    """Non-finite values or a blow-up; ``last_good`` holds the last finite state."""

    def __init__(self, message: str, last_good: "State | None" = None, trajectory: "Trajectory | None" = None):
        super().__init__(message)
        self.last_good = last_good
        self.trajectory = trajectory


@dataclass
class State:
    t: float
    rho: np.ndarray
    m: np.ndarray

    def copy(self) -> "State":
        return State(float(self.t), self.rho.copy(), self.m.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.rho).all() and np.isfinite(self.m).all())


@dataclass(frozen=True)
class SolverParams:
    pressure: PressureParams = PressureParams()
    law: ViscosityLaw = field(default_factory=constant_law)
    kernel: MollifierKernel = MollifierKernel()
    eps: float = 0.0
    cfl: float = 0.4
    dt: float | None = None
    t_end: float = 1.0
    rho_floor: float = 1e-8
    integrating_factor: bool = False
    forcing: Forcing | None = field(default=None, compare=False)

    def violations(self, ndim: int) -> list[str]:
        out = list(self.pressure.violations(ndim))
        if self.eps < 0:
            out.append(f"eps must be >= 0, got {self.eps}")
        if not 0 < self.cfl <= 1:
            out.append(f"CFL number must lie in (0, 1], got {self.cfl}")
        if self.dt is not None and not self.dt > 0:
            out.append(f"fixed dt must be positive, got {self.dt}")
        if not self.rho_floor > 0:
            out.append(f"rho_floor must be positive, got {self.rho_floor}")
        if not self.t_end > 0:
            out.append(f"t_end must be positive, got {self.t_end}")
        return out


@dataclass
class Trajectory:
    snapshots: list[State] = field(default_factory=list)
    series: list[dict] = field(default_factory=list)
    clip_count: int = 0
    steps: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.snapshots])


# --------------------------------------------------------------------------


class Solver:
    """Pseudo-spectral right-hand side, SSP-RK3 stepping and the run loop for one grid."""

    def __init__(self, grid: Grid, params: SolverParams):
        problems = params.violations(grid.ndim)
        if problems:
            raise ValueError("; ".join(problems))
        self.grid = grid
        self.params = params
        self.sp = Spectral(grid)
        self.clip_count = 0
        self.floor_count = 0

    # -- pieces shared with diagnostics ---------------------------------
    def velocity(self, s: State) -> np.ndarray:
        r = np.maximum(s.rho, self.params.rho_floor)
        low = int(np.count_nonzero(s.rho < self.params.rho_floor))
        if low:
            self.floor_count += low
            log.info("rho_floor guard active on %d cells at t=%g", low, s.t)
        return np.stack([self.sp.dealias(mi / r) for mi in s.m])

    def mollified(self, rho: np.ndarray) -> np.ndarray:
        return mollify(rho, self.params.kernel, self.grid, self.sp)

    def viscosities(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.params.law.check(self.mollified(rho), self.grid.ndim)

    # -- right-hand side -----------------------------------------------
    def rhs(self, s: State, *, with_eps_diffusion: bool = True) -> tuple[np.ndarray, np.ndarray]:
        p = self.params
        sp = self.sp
        n = self.grid.ndim
        u = self.velocity(s)
        du = sp.velocity_gradient(u)
        mu, lam = self.viscosities(s.rho)
        pr, _ = kernels.pressure_law(s.rho, p.pressure.A, p.pressure.gamma, p.pressure.delta, p.pressure.beta)
        flux = kernels.momentum_flux(s.m, u, du, mu, lam)
        for i in range(n):
            flux[i, i] += pr
        rho_h = sp.fft(s.rho)
        dm = np.empty_like(s.m)
        for i in range(n):
            acc = sum(sp.fft(flux[i, j]) * sp._dk[j] for j in range(n))
            dm[i] = -sp.ifft(acc * sp.mask)
        if p.eps:
            drho = np.stack([sp.ifft(rho_h * d) for d in sp._dk])
            x = kernels.eps_cross(du, drho, p.eps)
            for i in range(n):
                dm[i] -= sp.dealias(x[i])
        div_m = sum(sp.fft(s.m[j]) * sp._dk[j] for j in range(n))
        drho_h = -div_m
        if p.eps and with_eps_diffusion:
            drho_h = drho_h - p.eps * sp.k2 * rho_h
        drho_dt = sp.ifft(drho_h)
        if p.forcing is not None:
            g, f = p.forcing(s.t)
            drho_dt = drho_dt + g
            dm = dm + f
        if not (np.isfinite(drho_dt).all() and np.isfinite(dm).all()):
            raise SolverAbort(f"non-finite right-hand side at t={s.t}", last_good=s)
        return drho_dt, dm

    # -- time step -----------------------------------------------------
    def cfl_dt(self, s: State) -> float:
        p = self.params
        h = min(self.grid.spacing)
        n = self.grid.ndim
        u = self.velocity(s)
        umax = float(np.sqrt((u * u).sum(axis=0)).max())
        c = math.sqrt(float(np.max(kernels.sound_speed_sq(s.rho, p.pressure.A, p.pressure.gamma, p.pressure.delta, p.pressure.beta))))
        limits = []
        if umax + c > 0:
            limits.append(h / (umax + c))
        if p.eps > 0 and not p.integrating_factor:
            limits.append(h * h / (2 * n * p.eps))
        mu, lam = self.viscosities(s.rho)
        nu = float(np.max((lam + 2 * mu) / np.maximum(s.rho, p.rho_floor)))
        if nu > 0:
            limits.append(h * h / (2 * n * nu))
        dt = p.cfl * min(limits) if limits else math.inf
        if not dt > 0:
            raise SolverAbort(f"CFL time step is not positive: {dt}", last_good=s)
        return dt

    def _heat(self, rho: np.ndarray, tau: float) -> np.ndarray:
        return self.sp.ifft(self.sp.fft(rho) * np.exp(-self.params.eps * self.sp.k2 * tau))

    def step(self, s: State, dt: float) -> State:
        """One SSP-RK3 (Shu-Osher) step, optionally with an integrating factor for ``eps Lap``."""
        if self.params.integrating_factor and self.params.eps > 0:
            new = self._step_if(s, dt)
        else:
            k_r, k_m = self.rhs(s)
            s1 = State(s.t + dt, s.rho + dt * k_r, s.m + dt * k_m)
            k_r, k_m = self.rhs(s1)
            s2 = State(s.t + 0.5 * dt, 0.75 * s.rho + 0.25 * (s1.rho + dt * k_r), 0.75 * s.m + 0.25 * (s1.m + dt * k_m))
            k_r, k_m = self.rhs(s2)
            new = State(s.t + dt, s.rho / 3 + 2.0 / 3 * (s2.rho + dt * k_r), s.m / 3 + 2.0 / 3 * (s2.m + dt * k_m))
        return self._finish(s, new)

    def _step_if(self, s: State, dt: float) -> State:
        heat = self._heat
        k_r, k_m = self.rhs(s, with_eps_diffusion=False)
        r1 = heat(s.rho + dt * k_r, dt)
        s1 = State(s.t + dt, r1, s.m + dt * k_m)
        k_r, k_m = self.rhs(s1, with_eps_diffusion=False)
        r2 = 0.75 * heat(s.rho, 0.5 * dt) + 0.25 * heat(s1.rho + dt * k_r, -0.5 * dt)
        s2 = State(s.t + 0.5 * dt, r2, 0.75 * s.m + 0.25 * (s1.m + dt * k_m))
        k_r, k_m = self.rhs(s2, with_eps_diffusion=False)
        r3 = heat(s.rho, dt) / 3 + 2.0 / 3 * heat(s2.rho + dt * k_r, 0.5 * dt)
        return State(s.t + dt, r3, s.m / 3 + 2.0 / 3 * (s2.m + dt * k_m))

    def _finish(self, old: State, new: State) -> State:
        if not new.is_finite():
            raise SolverAbort(f"non-finite state after step to t={new.t}", last_good=old)
        neg = new.rho < 0
        if neg.any():
            k = int(np.count_nonzero(neg))
            self.clip_count += k
            log.warning("negative density on %d cells at t=%g; clipped to rho_floor", k, new.t)
            new.rho = np.where(neg, self.params.rho_floor, new.rho)
        return new

    # -- run loop ------------------------------------------------------
    def run(
        self,
        init: State,
        outputs: Sequence[float] | None = None,
        recorder: Callable[["Solver", State], dict] | None = None,
        max_steps: int = 10_000_000,
    ) -> Trajectory:
        """Integrate to ``t_end``.

        ``outputs`` are snapshot times (hit exactly); ``None`` keeps every
        step.  ``recorder`` is called on every accepted state (including the
        initial one) and its rows form ``Trajectory.series``.
        """
        p = self.params
        t_end = float(p.t_end)
        if outputs is None:
            targets: list[float] = []
            keep_all = True
        else:
            targets = sorted(float(t) for t in outputs if init.t < t <= t_end + 1e-12)
            keep_all = False
        if recorder is None:
            from .diagnostics import record as recorder  # noqa: PLC0415
        traj = Trajectory()
        s = init.copy()
        traj.snapshots.append(s.copy())
        traj.series.append(recorder(self, s))
        stops = sorted(set(targets) | {t_end})
        nxt = 0
        while s.t < t_end - 1e-12 * max(1.0, t_end):
            if traj.steps >= max_steps:
                raise SolverAbort("step budget exhausted", last_good=s, trajectory=traj)
            try:
                dt = p.dt if p.dt is not None else self.cfl_dt(s)
                remaining = stops[nxt] - s.t
                if dt >= remaining * (1 - 1e-12):
                    dt = remaining
                    hit = True
                else:
                    hit = False
                new = self.step(s, dt)
            except SolverAbort as exc:
                exc.trajectory = traj
                if exc.last_good is None:
                    exc.last_good = s
                raise
            except AdmissibilityError as exc:
                # a blown-up density left the range where the viscosity law is admissible
                raise SolverAbort(f"at t={s.t}: {exc}", last_good=s, trajectory=traj) from exc
            if hit:
                new.t = stops[nxt]
                nxt += 1
            s = new
            traj.steps += 1
            traj.series.append(recorder(self, s))
            if keep_all or (hit and s.t in targets):
                traj.snapshots.append(s.copy())
        traj.clip_count = self.clip_count
        return traj


# --------------------------------------------------------------------------
# module-level entry points


def rhs(s: State, grid: Grid, p: SolverParams) -> tuple[np.ndarray, np.ndarray]:
    return Solver(grid, p).rhs(s)


def step(s: State, dt: float, grid: Grid, p: SolverParams) -> State:
    return Solver(grid, p).step(s, dt)


def cfl_dt(s: State, grid: Grid, p: SolverParams) -> float:
    return Solver(grid, p).cfl_dt(s)


def run(init: State, grid: Grid, p: SolverParams, outputs: Sequence[float] | None = None, recorder=None) -> Trajectory:
    return Solver(grid, p).run(init, outputs, recorder)


def mass(s: State, grid: Grid) -> float:
    return integrate(s.rho, grid)


# --------------------------------------------------------------------------
# initial data


def _unit_phase(grid: Grid, axis: int) -> np.ndarray:
    return grid.coords[axis] * (2 * np.pi / grid.lengths[axis])


def _low_modes(grid: Grid, seed: int | None, kmax: int) -> np.ndarray:
    """Deterministic random combination of low Fourier modes, scaled to max |.| = 1."""
    if seed is None:
        return np.broadcast_to(np.cos(_unit_phase(grid, 0)), grid.shape).copy()
    rng = np.random.default_rng(seed)
    sp = Spectral(grid)
    fh = np.zeros(sp.spec_shape, dtype=complex)
    ints = [np.rint(k * length / (2 * np.pi)) for k, length in zip(sp.k, grid.lengths)]
    kmag = np.sqrt(sum(i * i for i in ints))
    sel = (kmag > 0) & (kmag <= kmax)
    fh[sel] = rng.standard_normal(int(sel.sum())) + 1j * rng.standard_normal(int(sel.sum()))
    f = sp.ifft(fh)
    return f / np.abs(f).max()


def taylor_green(grid: Grid, U: float = 1.0) -> np.ndarray:
    x = [_unit_phase(grid, a) for a in range(grid.ndim)]
    if grid.ndim == 2:
        u = [np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]
    else:
        u = [
            np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
            -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
            np.zeros_like(x[0] * x[1] * x[2]),
        ]
    return U * np.stack([np.broadcast_to(c, grid.shape) for c in u])


def initial_data(kind: str, grid: Grid, **params) -> State:
    """Build a starting state.

    kinds: ``uniform`` (rho0, velocity), ``perturbed`` (rho0, amp, seed,
    kmax, U), ``taylor-green`` (rho0, U, amp, seed, kmax), ``delta-approx``
    (rho0 array, m0 array, delta, beta, kernel).
    """
    sp = Spectral(grid)
    t0 = float(params.get("t0", 0.0))
    if kind == "uniform":
        rho0 = float(params.get("rho0", 1.0))
        vel = params.get("velocity", (0.0,) * grid.ndim)
        rho = np.full(grid.shape, rho0)
        m = np.stack([np.full(grid.shape, rho0 * float(v)) for v in vel])
        return _checked(State(t0, rho, m))
    if kind in ("perturbed", "taylor-green"):
        rho0 = float(params.get("rho0", 1.0))
        amp = float(params.get("amp", 0.2 if kind == "perturbed" else 0.0))
        U = float(params.get("U", 0.0 if kind == "perturbed" else 1.0))
        pert = _low_modes(grid, params.get("seed"), int(params.get("kmax", 2)))
        rho = rho0 * (1.0 + amp * pert) if params.get("relative", False) else rho0 + amp * pert
        if rho.min() <= 0:
            raise ValueError(f"initial density must be positive; min is {rho.min()!r}")
        u = taylor_green(grid, U) if U else np.zeros((grid.ndim,) + grid.shape)
        m = np.stack([sp.dealias(rho * ui) for ui in u])
        return _checked(State(t0, rho, m))
    if kind == "delta-approx":
        return delta_approx(grid, params["rho0"], params.get("m0"), float(params["delta"]),
                            float(params["beta"]), params.get("kernel", MollifierKernel()), t0)
    raise ValueError(f"unknown initial-data kind {kind!r}")


def delta_approx(grid: Grid, rho0: np.ndarray, m0: np.ndarray | None, delta: float, beta: float,
                 kernel: MollifierKernel = MollifierKernel(), t0: float = 0.0) -> State:
    """Smooth data with ``delta <= rho <= delta^(-1/(2 beta))``: clamp, mollify, clamp rounding."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    rho0 = np.asarray(rho0, dtype=float)
    if rho0.min() < 0:
        raise ValueError("rho0 must be nonnegative")
    lo, hi = delta, delta ** (-1.0 / (2.0 * beta))
    sp = Spectral(grid)
    rho = np.clip(mollify(np.clip(rho0, lo, hi), kernel, grid, sp), lo, hi)
    if m0 is None:
        m = np.zeros((grid.ndim,) + grid.shape)
    else:
        m0 = np.asarray(m0, dtype=float)
        safe = np.where(rho0 > 0, rho0, 1.0)
        w = np.where(rho0 > 0, np.sqrt(np.clip(rho0, lo, hi)) * m0 / np.sqrt(safe), 0.0)
        m = np.stack([mollify(wi, kernel, grid, sp) for wi in w])
    return _checked(State(t0, rho, m))


def _checked(s: State) -> State:
    if not s.is_finite():
        raise ValueError("initial state contains non-finite values")
    return s


# --------------------------------------------------------------------------
# manufactured solutions


@dataclass
class Manufactured:
    """Prescribed smooth ``(rho*, u*)`` and the forcing that makes it an exact solution.

    ``rho* = rho0 + a sin(x1 + x2) cos(omega t)``;
    ``u* = U cos(t) TG(x) + b sin(x1) sin(omega t) e_1``.
    The forcing is assembled with the solver's own discrete operators, so the
    sampled exact solution satisfies the semi-discrete system up to aliasing.
    """

    grid: Grid
    params: SolverParams
    rho0: float = 1.0
    a: float = 0.2
    U: float = 0.5
    b: float = 0.2
    omega: float = 1.0

    def fields(self, t: float):
        g = self.grid
        x = [_unit_phase(g, k) for k in range(g.ndim)]
        ph = np.broadcast_to(np.sin(x[0] + x[1]), g.shape)
        rho = self.rho0 + self.a * ph * math.cos(self.omega * t)
        drho = -self.a * self.omega * ph * math.sin(self.omega * t)
        tg = taylor_green(g, 1.0)
        e1 = np.zeros_like(tg)
        e1[0] = np.broadcast_to(np.sin(x[0]), g.shape)
        u = self.U * math.cos(t) * tg + self.b * math.sin(self.omega * t) * e1
        du = -self.U * math.sin(t) * tg + self.b * self.omega * math.cos(self.omega * t) * e1
        return rho, drho, u, du

    def state(self, t: float) -> State:
        rho, _, u, _ = self.fields(t)
        return State(t, rho, rho * u)

    def __post_init__(self) -> None:
        self._unforced = Solver(self.grid, replace(self.params, forcing=None))

    def forcing(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        sol = self._unforced
        rho, drho, u, du = self.fields(t)
        s = State(t, rho, rho * u)
        r_rho, r_m = sol.rhs(s)
        dm = drho * u + rho * du
        return drho - r_rho, dm - r_m

    def solver_params(self) -> SolverParams:
        return replace(self.params, forcing=self.forcing)

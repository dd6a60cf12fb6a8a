"""Mollifier, viscosity laws, pressure law, the coefficient F and the truncations T_M."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from . import kernels
from .grid import Grid
from .spectral import Spectral

log = logging.getLogger(__name__)


class AdmissibilityError(ValueError):
    """A viscosity law violated ``mu >= mu0 > 0`` or ``lam + 2 mu / N >= 0``."""


# --------------------------------------------------------------------------
# mollifier


@dataclass(frozen=True)
class MollifierKernel:
    """Normalized C-infinity bump ``exp(-1/(1-(r/h)^2))`` of radius ``h``.

    ``radius=None`` means 8 grid spacings on the grid it is bound to.
    """

    radius: float | None = None
    normalize: bool = True
    cells: int = 8

    def resolve_radius(self, grid: Grid) -> float:
        return float(self.radius) if self.radius is not None else self.cells * min(grid.spacing)

    def weights(self, grid: Grid) -> np.ndarray:
        return _kernel_weights(grid, self.resolve_radius(grid), self.normalize)

    def symbol(self, grid: Grid) -> np.ndarray:
        return _kernel_symbol(grid, self.resolve_radius(grid), self.normalize)


def _bump(r: np.ndarray, h: float) -> np.ndarray:
    s2 = (r / h) ** 2
    out = np.zeros_like(r)
    inside = s2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s2[inside]))
    return out


@lru_cache(maxsize=32)
def _kernel_weights(grid: Grid, h: float, normalize: bool) -> np.ndarray:
    if not 0 < h < min(grid.lengths) / 4:
        raise ValueError(f"mollifier radius {h} must lie in (0, min(lengths)/4)")
    r2 = 0.0
    for c, length in zip(grid.coords, grid.lengths):
        d = np.minimum(c, length - c)
        r2 = r2 + d * d
    w = _bump(np.sqrt(np.broadcast_to(r2, grid.shape)), h)
    if normalize:
        w = w / (w.sum() * grid.cell_volume)
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def _kernel_symbol(grid: Grid, h: float, normalize: bool) -> np.ndarray:
    sp = Spectral(grid)
    # kernel is even on the torus, so its transform is real
    sym = (sp.fft(_kernel_weights(grid, h, normalize)) * grid.cell_volume).real
    sym.setflags(write=False)
    return sym


def mollify(rho: np.ndarray, kernel: MollifierKernel, grid: Grid, spectral: Spectral | None = None) -> np.ndarray:
    """Periodic convolution ``eta * rho`` evaluated as a Fourier product."""
    sp = spectral or Spectral(grid)
    return sp.ifft(sp.fft(rho) * kernel.symbol(grid))


# --------------------------------------------------------------------------
# viscosity laws


@dataclass(frozen=True)
class ViscosityLaw:
    """``zeta -> (mu(zeta), lam(zeta))`` with derivatives and the floor ``mu0``."""

    mu: Callable[[np.ndarray], np.ndarray]
    lam: Callable[[np.ndarray], np.ndarray]
    mu0: float
    dmu: Callable[[np.ndarray], np.ndarray] | None = None
    dlam: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.mu0 > 0:
            raise AdmissibilityError(f"mu0 must be positive, got {self.mu0}")

    def check(self, zeta: np.ndarray, ndim: int) -> tuple[np.ndarray, np.ndarray]:
        zeta = np.asarray(zeta, dtype=float)
        mu = np.broadcast_to(np.asarray(self.mu(zeta), dtype=float), zeta.shape)
        lam = np.broadcast_to(np.asarray(self.lam(zeta), dtype=float), zeta.shape)
        bad = ~np.isfinite(mu) | ~np.isfinite(lam)
        bad |= mu < self.mu0
        bad |= lam + 2.0 * mu / ndim < 0
        if bad.any():
            z = float(zeta[bad].flat[0])
            raise AdmissibilityError(
                f"viscosity law {self.name!r} inadmissible at zeta={z!r}: "
                f"mu={float(self.mu(np.array(z)))!r}, lam={float(self.lam(np.array(z)))!r}"
            )
        return np.array(mu), np.array(lam)

    def F(self, zeta: np.ndarray) -> np.ndarray:
        return 1.0 / (self.lam(zeta) + 2.0 * self.mu(zeta))

    def F_prime(self, zeta: np.ndarray) -> np.ndarray:
        if self.dmu is None or self.dlam is None:
            # central difference; step scaled to zeta
            h = 1e-6 * np.maximum(1.0, np.abs(zeta))
            return (self.F(zeta + h) - self.F(zeta - h)) / (2 * h)
        denom = self.lam(zeta) + 2.0 * self.mu(zeta)
        return -(self.dlam(zeta) + 2.0 * self.dmu(zeta)) / denom**2

    @property
    def is_constant(self) -> bool:
        return self.name == "constant"


def _const(c: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda z: np.full(np.shape(z), c, dtype=float)


def constant_law(mu0: float = 1.0, lam0: float = 0.0) -> ViscosityLaw:
    return ViscosityLaw(
        mu=_const(mu0), lam=_const(lam0), mu0=mu0, dmu=_const(0.0), dlam=_const(0.0),
        name="constant", params={"mu0": mu0, "lam0": lam0},
    )


def affine_law(mu0: float = 1.0, a: float = 0.0, lam0: float = 0.0, b: float = 0.0) -> ViscosityLaw:
    return ViscosityLaw(
        mu=lambda z: mu0 + a * np.asarray(z, dtype=float),
        lam=lambda z: lam0 + b * np.asarray(z, dtype=float),
        mu0=mu0, dmu=_const(a), dlam=_const(b),
        name="affine", params={"mu0": mu0, "a": a, "lam0": lam0, "b": b},
    )


def power_law(mu0: float = 1.0, a: float = 0.0, k: float = 2.0, lam0: float = 0.0) -> ViscosityLaw:
    return ViscosityLaw(
        mu=lambda z: mu0 + a * np.asarray(z, dtype=float) ** k,
        lam=_const(lam0),
        mu0=mu0,
        dmu=lambda z: a * k * np.asarray(z, dtype=float) ** (k - 1),
        dlam=_const(0.0),
        name="power", params={"mu0": mu0, "a": a, "k": k, "lam0": lam0},
    )


LAWS: dict[str, Callable[..., ViscosityLaw]] = {
    "constant": constant_law,
    "affine": affine_law,
    "power": power_law,
}


def viscosity_law(name: str, **params: float) -> ViscosityLaw:
    try:
        factory = LAWS[name]
    except KeyError:
        raise ValueError(f"unknown viscosity law {name!r}; choose from {sorted(LAWS)}") from None
    return factory(**params)


def viscosity_fields(law: ViscosityLaw, rho_eta: np.ndarray, ndim: int) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise ``(mu([rho]^eta), lam([rho]^eta))``; raises on inadmissible values."""
    return law.check(rho_eta, ndim)


# --------------------------------------------------------------------------
# pressure


@dataclass(frozen=True)
class PressureParams:
    """``P(rho) = A rho^gamma + delta rho^beta``."""

    A: float = 1.0
    gamma: float = 2.0
    delta: float = 0.0
    beta: float = 0.0

    def violations(self, ndim: int) -> list[str]:
        out = []
        if not self.A > 0:
            out.append(f"A must be positive, got {self.A}")
        if not self.gamma > ndim / 2:
            out.append(f"gamma > N/2 violated: gamma={self.gamma}, N={ndim}")
        if self.delta < 0:
            out.append(f"delta must be >= 0, got {self.delta}")
        if self.delta > 0:
            bound = max(4.0, 1.5 * ndim, self.gamma)
            if not self.beta > bound:
                out.append(f"beta > max(4, 3N/2, gamma) = {bound} violated: beta={self.beta}")
        return out

    def validate(self, ndim: int) -> "PressureParams":
        problems = self.violations(ndim)
        if problems:
            raise ValueError("; ".join(problems))
        return self


def pressure(rho: np.ndarray, p: PressureParams) -> np.ndarray:
    """``A rho^gamma + delta rho^beta`` with negative densities clipped to zero."""
    out, nneg = kernels.pressure_law(rho, p.A, p.gamma, p.delta, p.beta)
    if nneg:
        log.warning("pressure: clipped %d negative density values", nneg)
    return out


def sound_speed_sq(rho: np.ndarray, p: PressureParams) -> np.ndarray:
    return kernels.sound_speed_sq(rho, p.A, p.gamma, p.delta, p.beta)


def internal_energy_density(rho: np.ndarray, p: PressureParams) -> np.ndarray:
    r = np.maximum(rho, 0.0)
    h = p.A / (p.gamma - 1.0) * r**p.gamma
    if p.delta:
        h = h + p.delta / (p.beta - 1.0) * r**p.beta
    return h


# --------------------------------------------------------------------------
# F and stress


def coeff_F(mu: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """``1 / (lam + 2 mu)``."""
    denom = lam + 2.0 * mu
    if np.any(denom <= 0):
        raise AdmissibilityError(f"lam + 2 mu must be positive; min is {float(np.min(denom))!r}")
    return 1.0 / denom


def stress(u: np.ndarray, mu: np.ndarray, lam: np.ndarray, spectral: Spectral) -> np.ndarray:
    """``S = lam (div u) I + 2 mu D(u)`` with dealiased products."""
    n = u.shape[0]
    d = spectral.sym_gradient(u)
    div = np.trace(d, axis1=0, axis2=1)
    s = np.empty_like(d)
    ldiv = spectral.product(lam, div)
    for i in range(n):
        for j in range(i, n):
            s[i, j] = 2.0 * spectral.product(mu, d[i, j])
            if i == j:
                s[i, j] += ldiv
            else:
                s[j, i] = s[i, j]
    return s


# --------------------------------------------------------------------------
# truncations


@dataclass(frozen=True)
class TruncationFamily:
    """``T(z) = z`` for ``z <= 1``, ``2`` for ``z >= 3``; C2 quartic blend ``1 + 2s - 2s^3 + s^4`` between.

    ``s = (z - 1) / 2``.  This is the unique polynomial of degree <= 5 that
    matches value, slope and curvature at both ends; it is concave and
    monotone on the blend interval.
    """

    def T(self, z):
        return self(z, 1.0)

    def __call__(self, z, M: float):
        if not M > 0:
            raise ValueError(f"truncation level M must be positive, got {M}")
        val, _ = kernels.truncation(np.asarray(z, dtype=float), M)
        return val

    def derivative(self, z, M: float):
        _, der = kernels.truncation(np.asarray(z, dtype=float), M)
        return der


TRUNCATION = TruncationFamily()


def truncate(rho: np.ndarray, M: float, fam: TruncationFamily = TRUNCATION) -> np.ndarray:
    """``T_M(rho) = M T(rho / M)``."""
    return fam(rho, M)


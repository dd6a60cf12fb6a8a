"""Pure-numpy pointwise kernels (fallback for the compiled ``_ckernels``).

All functions take and return contiguous float64 arrays; the callers in
:mod:`evflux.kernels` handle reshaping.
"""
from __future__ import annotations

import numpy as np


def pressure_law(rho, A, gamma, delta, beta):
    r = np.maximum(rho, 0.0)
    p = A * r**gamma
    if delta != 0.0:
        p = p + delta * r**beta
    return p, int(np.count_nonzero(rho < 0.0))


def sound_speed_sq(rho, A, gamma, delta, beta):
    r = np.maximum(rho, 0.0)
    c2 = A * gamma * r ** (gamma - 1.0)
    if delta != 0.0:
        c2 = c2 + delta * beta * r ** (beta - 1.0)
    return c2


def pressure_curvature(rho, floor, A, gamma, delta, beta):
    """Second derivative of the internal-energy density ``H(rho)``."""
    r = np.maximum(rho, floor)
    h2 = A * gamma * r ** (gamma - 2.0)
    if delta != 0.0:
        h2 = h2 + delta * beta * r ** (beta - 2.0)
    return h2


def momentum_flux(m, u, du, mu, lam):
    """``m_i u_j - lam div(u) delta_ij - mu (du_ij + du_ji)``; shapes (N,P), (N,P), (N,N,P), (P,), (P,)."""
    n = m.shape[0]
    div = np.trace(du, axis1=0, axis2=1) if n else 0.0
    out = m[:, None, :] * u[None, :, :] - mu * (du + np.swapaxes(du, 0, 1))
    for i in range(n):
        out[i, i] -= lam * div
    return out


def eps_cross(du, drho, eps):
    """``eps * sum_j du_ij drho_j``."""
    return eps * np.einsum("ijp,jp->ip", du, drho)


def truncation(z, M):
    """``(T_M(z), T_M'(z))`` for the quartic blend on ``[M, 3M]``."""
    s = (z / M - 1.0) * 0.5
    s = np.clip(s, 0.0, 1.0)
    blend = M * (1.0 + 2.0 * s - 2.0 * s**3 + s**4)
    dblend = 1.0 - 3.0 * s**2 + 2.0 * s**3
    low = z <= M
    val = np.where(low, z, blend)
    der = np.where(low, 1.0, dblend)
    return val, der

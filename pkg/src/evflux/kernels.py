"""Pointwise hot kernels, compiled when available.

The Cython extension ``evflux._ckernels`` is used if it imports; otherwise
the numpy implementation in ``evflux._kernels_py`` is used.  Setting
``EVFLUX_PURE_PYTHON=1`` forces the fallback.  Both backends agree to
rounding; a single run is bit-reproducible with a fixed backend.
"""
from __future__ import annotations

import os
from types import ModuleType

import numpy as np

from . import _kernels_py


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("EVFLUX_PURE_PYTHON", "") not in ("", "0"):
        return _kernels_py, "python"
    try:
        from . import _ckernels  # type: ignore[attr-defined]
    except ImportError:
        return _kernels_py, "python"
    return _ckernels, "cython"


_impl, BACKEND = _load()


def use_backend(name: str) -> None:
    """Switch backend at runtime (``"cython"`` or ``"python"``); used by tests and benchmarks."""
    global _impl, BACKEND
    if name == "python":
        _impl, BACKEND = _kernels_py, "python"
    elif name == "cython":
        from . import _ckernels  # type: ignore[attr-defined]

        _impl, BACKEND = _ckernels, "cython"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")


def compiled_available() -> bool:
    try:
        from . import _ckernels  # type: ignore[attr-defined]  # noqa: F401
    except ImportError:
        return False
    return True


def _flat(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64).reshape(-1)


def pressure_law(rho, A, gamma, delta, beta) -> tuple[np.ndarray, int]:
    p, nneg = _impl.pressure_law(_flat(rho), float(A), float(gamma), float(delta), float(beta))
    return np.asarray(p).reshape(np.shape(rho)), int(nneg)


def sound_speed_sq(rho, A, gamma, delta, beta) -> np.ndarray:
    c2 = _impl.sound_speed_sq(_flat(rho), float(A), float(gamma), float(delta), float(beta))
    return np.asarray(c2).reshape(np.shape(rho))


def pressure_curvature(rho, floor, A, gamma, delta, beta) -> np.ndarray:
    h2 = _impl.pressure_curvature(_flat(rho), float(floor), float(A), float(gamma), float(delta), float(beta))
    return np.asarray(h2).reshape(np.shape(rho))


def momentum_flux(m, u, du, mu, lam) -> np.ndarray:
    n = m.shape[0]
    shape = m.shape[1:]
    npts = int(np.prod(shape))
    out = _impl.momentum_flux(
        np.ascontiguousarray(m, dtype=np.float64).reshape(n, npts),
        np.ascontiguousarray(u, dtype=np.float64).reshape(n, npts),
        np.ascontiguousarray(du, dtype=np.float64).reshape(n, n, npts),
        _flat(mu),
        _flat(lam),
    )
    return np.asarray(out).reshape((n, n) + shape)


def eps_cross(du, drho, eps) -> np.ndarray:
    n = du.shape[0]
    shape = du.shape[2:]
    npts = int(np.prod(shape))
    out = _impl.eps_cross(
        np.ascontiguousarray(du, dtype=np.float64).reshape(n, n, npts),
        np.ascontiguousarray(drho, dtype=np.float64).reshape(n, npts),
        float(eps),
    )
    return np.asarray(out).reshape((n,) + shape)


def truncation(z, M) -> tuple[np.ndarray, np.ndarray]:
    v, d = _impl.truncation(_flat(z), float(M))
    shape = np.shape(z)
    return np.asarray(v).reshape(shape), np.asarray(d).reshape(shape)

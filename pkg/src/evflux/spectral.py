"""Fourier-multiplier operators on the periodic grid.

Sign conventions (``xi`` is the angular wavevector):

* gradient: ``i xi_j``
* Riesz transform ``R_j``: ``-i xi_j / |xi|``, so ``R_i R_j`` has symbol ``-xi_i xi_j / |xi|^2``
* ``Delta^{-1} grad``: ``-i xi_j / |xi|^2``
* ``grad Delta^{-1} grad`` (and ``div Delta^{-1} div``): ``+xi_i xi_j / |xi|^2 = -R_i R_j``

Every inverse operator sends the mean mode to zero.  Odd multipliers are
zeroed on the Nyquist plane of their axis so real fields stay real.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .grid import Grid, bmo_proxy, lp_norm

_WORKERS = 1


def set_workers(n: int) -> None:
    """Number of threads handed to the FFT backend (results are identical for a fixed count)."""
    global _WORKERS
    _WORKERS = max(1, int(n))


class Spectral:
    """Cached wavenumbers and the 2/3-rule mask for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        n = grid.ndim
        self._axes = tuple(range(-n, 0))
        ks = []
        nyq = []
        for axis, (d, length) in enumerate(zip(grid.dims, grid.lengths)):
            if axis == n - 1:
                idx = np.arange(d // 2 + 1)
            else:
                idx = np.fft.fftfreq(d, 1.0 / d).round().astype(int)
            shape = [1] * n
            shape[axis] = idx.size
            ks.append((2 * np.pi / length * idx).reshape(shape))
            nyq.append((np.abs(idx) == d // 2).reshape(shape))
        self.k = tuple(ks)
        self._nyquist = tuple(nyq)
        self.spec_shape = tuple(k.size for k in (x.ravel() for x in ks))
        self.k2 = sum(k * k for k in ks)
        self.kmag = np.sqrt(self.k2)
        inv = np.zeros(self.spec_shape)
        nz = self.k2 > 0
        inv[nz] = 1.0 / np.broadcast_to(self.k2, self.spec_shape)[nz]
        self.inv_k2 = inv
        inv1 = np.zeros(self.spec_shape)
        inv1[nz] = 1.0 / np.broadcast_to(self.kmag, self.spec_shape)[nz]
        self.inv_kmag = inv1
        keep = np.ones(self.spec_shape, dtype=bool)
        for axis, d in enumerate(grid.dims):
            if axis == n - 1:
                idx = np.arange(d // 2 + 1)
            else:
                idx = np.fft.fftfreq(d, 1.0 / d).round().astype(int)
            shape = [1] * n
            shape[axis] = idx.size
            keep = keep & (np.abs(idx) <= d // 3).reshape(shape)
        self.mask = keep

    # transforms -----------------------------------------------------------
    def fft(self, f: np.ndarray) -> np.ndarray:
        return sfft.rfftn(f, axes=self._axes, workers=_WORKERS)

    def ifft(self, fh: np.ndarray) -> np.ndarray:
        return sfft.irfftn(fh, s=self.grid.shape, axes=self._axes, workers=_WORKERS)

    def _odd(self, axis: int) -> np.ndarray:
        """``i k_axis`` with the Nyquist plane removed."""
        return np.where(self._nyquist[axis], 0.0, self.k[axis]) * 1j

    @cached_property
    def _dk(self) -> tuple[np.ndarray, ...]:
        return tuple(self._odd(a) for a in range(self.grid.ndim))

    # operators ------------------------------------------------------------
    def dealias(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(self.fft(f) * self.mask)

    def product(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Pointwise product with the 2/3-rule filter applied."""
        return self.dealias(a * b)

    def derivative(self, f: np.ndarray, axis: int) -> np.ndarray:
        return self.ifft(self.fft(f) * self._dk[axis])

    def gradient(self, f: np.ndarray) -> np.ndarray:
        fh = self.fft(f)
        return np.stack([self.ifft(fh * d) for d in self._dk])

    def divergence(self, v: np.ndarray) -> np.ndarray:
        acc = sum(self.fft(v[j]) * self._dk[j] for j in range(self.grid.ndim))
        return self.ifft(acc)

    def laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.k2 * self.fft(f))

    def velocity_gradient(self, v: np.ndarray) -> np.ndarray:
        """``out[a, b] = d v_a / d x_b``."""
        return np.stack([self.gradient(v[a]) for a in range(self.grid.ndim)])

    def sym_gradient(self, v: np.ndarray) -> np.ndarray:
        g = self.velocity_gradient(v)
        return 0.5 * (g + np.swapaxes(g, 0, 1))

    def riesz(self, f: np.ndarray, axis: int) -> np.ndarray:
        return self.ifft(self.fft(f) * (-self._dk[axis] * self.inv_kmag))

    def grad_inv_laplacian(self, f: np.ndarray) -> np.ndarray:
        """``Delta^{-1} grad f``; its divergence is ``f - mean(f)``."""
        fh = self.fft(f)
        return np.stack([self.ifft(-fh * d * self.inv_k2) for d in self._dk])

    def inverse_divergence(self, f: np.ndarray) -> np.ndarray:
        """Curl-free right inverse of the divergence on mean-free fields (``grad Delta^{-1} f``)."""
        return self.grad_inv_laplacian(f)

    def inv_laplacian(self, f: np.ndarray) -> np.ndarray:
        return self.ifft(-self.fft(f) * self.inv_k2)

    def hodge_symbol(self, i: int, j: int) -> np.ndarray:
        """Symbol of ``d_i d_j Delta^{-1}`` (``= -R_i R_j``), zero at the mean mode."""
        s = -(self._dk[i] * self._dk[j]).real * self.inv_k2
        return s

    def double_riesz(self, f: np.ndarray, i: int, j: int) -> np.ndarray:
        """``R_i R_j f``."""
        return self.ifft(-self.hodge_symbol(i, j) * self.fft(f))

    def hodge_apply(self, f: np.ndarray, i: int, j: int) -> np.ndarray:
        """``d_i d_j Delta^{-1} f``."""
        return self.ifft(self.hodge_symbol(i, j) * self.fft(f))

    def double_riesz_contract(self, t: np.ndarray) -> np.ndarray:
        """``div Delta^{-1} div T = sum_ij d_i d_j Delta^{-1} T_ij``; maps ``D(u)`` to ``div u``."""
        n = self.grid.ndim
        acc = sum(self.hodge_symbol(i, j) * self.fft(t[i, j]) for i in range(n) for j in range(n))
        return self.ifft(acc)

    def commutator_riesz(self, b: np.ndarray, f: np.ndarray, i: int, j: int) -> np.ndarray:
        """``[b; R_i R_j] f = b R_i R_j f - R_i R_j (b f)`` with dealiased products."""
        return self.product(b, self.double_riesz(f, i, j)) - self.double_riesz(self.product(b, f), i, j)

    def commutator_contract(self, b: np.ndarray, t: np.ndarray) -> np.ndarray:
        n = self.grid.ndim
        return sum(self.commutator_riesz(b, t[i, j], i, j) for i in range(n) for j in range(n))

    def crw_ratio(self, b: np.ndarray, f: np.ndarray, i: int, j: int) -> float:
        """``||[b; R_i R_j] f||_2 / (||b||_BMO-proxy ||f||_2)``; bounded by one constant for all ``b, f``."""
        c = self.commutator_riesz(b, f, i, j)
        den = bmo_proxy(b) * lp_norm(f, self.grid, 2)
        return lp_norm(c, self.grid, 2) / den if den > 0 else 0.0

    def coifman_meyer_ratio(self, b: np.ndarray, f: np.ndarray, i: int, j: int,
                            p: float = 4.0, q: float = 4.0) -> float:
        """``||grad [b; R_i R_j] f||_r / (||grad b||_p ||f||_q)`` with ``1/r = 1/p + 1/q``."""
        r = 1.0 / (1.0 / p + 1.0 / q)
        g = self.gradient(self.commutator_riesz(b, f, i, j))
        gb = self.gradient(b)
        num = lp_norm(np.sqrt((g * g).sum(axis=0)), self.grid, r)
        den = lp_norm(np.sqrt((gb * gb).sum(axis=0)), self.grid, p) * lp_norm(f, self.grid, q)
        return num / den if den > 0 else 0.0

    def hinv_norm(self, f: np.ndarray) -> float:
        """Homogeneous ``H^{-1}`` norm (mean mode ignored)."""
        fh = self.fft(f)
        w = np.full(self.spec_shape, 2.0)
        w[..., 0] = 1.0
        if self.grid.dims[-1] % 2 == 0:
            w[..., -1] = 1.0
        total = np.sum(w * np.abs(fh) ** 2 * self.inv_k2)
        npts = float(np.prod(self.grid.dims))
        return float(np.sqrt(total * self.grid.volume) / npts)


def random_field(grid: Grid, rng: np.random.Generator, kmax: int | None = None, mean: float = 0.0) -> np.ndarray:
    """Real random field whose modes satisfy ``|k_j| <= kmax`` (default: the dealiasing band), unit RMS fluctuation."""
    sp = Spectral(grid)
    ints = [np.rint(k * length / (2 * np.pi)).astype(int) for k, length in zip(sp.k, grid.lengths)]
    keep = np.ones(sp.spec_shape, dtype=bool)
    for axis, (i, d) in enumerate(zip(ints, grid.dims)):
        lim = d // 3 if kmax is None else min(kmax, d // 3)
        keep &= np.abs(i) <= lim
    keep &= ~np.broadcast_to(sum(i * i for i in ints) == 0, sp.spec_shape)
    coef = np.zeros(sp.spec_shape, dtype=complex)
    n = int(keep.sum())
    coef[keep] = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    f = sp.ifft(coef)
    # irfftn symmetrizes the last axis, so the result is real and band-limited
    f = sp.dealias(f)
    return mean + f / np.sqrt(np.mean(f * f))


def commutator_ratio_ensemble(grid: Grid, rng: np.random.Generator, samples: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """CRW and Coifman-Meyer ratios over random smooth ``(b, f)`` pairs of varied bandwidth and amplitude."""
    sp = Spectral(grid)
    top = min(grid.dims) // 3
    crw = np.empty(samples)
    cm = np.empty(samples)
    for n in range(samples):
        b = 1.0 + rng.uniform(0.05, 1.0) * random_field(grid, rng, kmax=int(rng.integers(1, top + 1)))
        f = rng.uniform(0.1, 10.0) * random_field(grid, rng, kmax=int(rng.integers(1, top + 1)))
        i, j = (int(x) for x in rng.integers(0, grid.ndim, size=2))
        crw[n] = sp.crw_ratio(b, f, i, j)
        cm[n] = sp.coifman_meyer_ratio(b, f, i, j)
    return crw, cm


def div_curl_defects(f: np.ndarray, v: np.ndarray, grid: Grid, ns=(2, 4, 8, 16), block: int | None = None) -> list[float]:
    """Weak-continuity defect of ``v_n . H[f_n] - f_n H[v_n]`` with ``H = grad Delta^-1 grad``.

    ``f_n = f sin(n x_1)`` and ``v_n = v sin(n x_1)`` converge weakly to zero, so
    the combination of the weak limits vanishes; the defect is the largest
    block mean of the combination, which should decrease as ``n`` grows.
    """
    from .grid import coarse_average  # noqa: PLC0415

    sp = Spectral(grid)
    nd = grid.ndim
    block = block or max(1, min(grid.dims) // 8)
    osc_phase = grid.coords[0] * (2 * np.pi / grid.lengths[0])
    out = []
    for n in ns:
        osc = np.broadcast_to(np.sin(n * osc_phase), grid.shape)
        fn = f * osc
        vn = v * osc
        worst = 0.0
        for i in range(nd):
            q = sum(vn[j] * sp.hodge_apply(fn, i, j) - fn * sp.hodge_apply(vn[j], i, j) for j in range(nd))
            worst = max(worst, float(np.abs(coarse_average(q, block)).max()))
        out.append(worst)
    return out

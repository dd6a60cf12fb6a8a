"""Shared fixtures and an independent dense-DFT oracle.

The oracle builds explicit DFT matrices per axis (no FFT library) and
defines every symbol from integer wavenumbers, so it shares no code with
the operators under test.
"""
import math

import numpy as np
import pytest

from evflux.grid import Grid


class DenseDFT:
    def __init__(self, dims, lengths):
        self.dims = tuple(dims)
        self.lengths = tuple(lengths)
        self.mats = []
        self.ints = []
        for n in dims:
            j = np.arange(n)
            self.mats.append(np.exp(-2j * np.pi * np.outer(j, j) / n))
            k = np.where(j <= n // 2, j, j - n)  # Nyquist carried as +n/2
            self.ints.append(k)
        nd = len(dims)
        self.k = []
        for a, (k, L) in enumerate(zip(self.ints, lengths)):
            shape = [1] * nd
            shape[a] = k.size
            self.k.append((2 * np.pi / L * k).reshape(shape))
        self.nyq = []
        for a, (k, n) in enumerate(zip(self.ints, dims)):
            shape = [1] * nd
            shape[a] = n
            self.nyq.append((np.abs(k) == n // 2).reshape(shape))
        keep = np.ones(self.dims, dtype=bool)
        for a, (k, n) in enumerate(zip(self.ints, dims)):
            shape = [1] * nd
            shape[a] = n
            keep = keep & (np.abs(k) <= n // 3).reshape(shape)
        self.mask = keep
        self.k2 = sum(k * k for k in self.k)

    def fwd(self, f):
        out = np.asarray(f, dtype=complex)
        for a, m in enumerate(self.mats):
            out = np.moveaxis(np.tensordot(m, np.moveaxis(out, a, 0), axes=(1, 0)), 0, a)
        return out

    def inv(self, fh):
        out = np.asarray(fh, dtype=complex)
        for a, m in enumerate(self.mats):
            out = np.moveaxis(np.tensordot(m.conj(), np.moveaxis(out, a, 0), axes=(1, 0)), 0, a) / m.shape[0]
        return out.real

    def apply(self, f, symbol):
        return self.inv(symbol * self.fwd(f))

    def ik(self, a):
        """``i k_a`` with the Nyquist plane of axis ``a`` removed."""
        return 1j * np.where(self.nyq[a], 0.0, self.k[a])

    def inv_k2(self):
        out = np.zeros(self.dims)
        k2 = np.broadcast_to(self.k2, self.dims)
        out[k2 > 0] = 1.0 / k2[k2 > 0]
        return out

    def riesz_riesz(self, f, i, j):
        # R_i R_j = (-i k_i/|k|)(-i k_j/|k|) = -k_i k_j / |k|^2
        sym = (self.ik(i) * self.ik(j)).real * self.inv_k2()
        return self.apply(f, sym)

    def dealias(self, f):
        return self.apply(f, self.mask)

    def deriv(self, f, a):
        return self.apply(f, self.ik(a))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def grid64():
    return Grid.square(64)


@pytest.fixture(scope="session")
def grid32():
    return Grid.square(32)


@pytest.fixture(scope="session")
def dense32():
    return DenseDFT((32, 32), (2 * math.pi, 2 * math.pi))


def dense_for(grid):
    return DenseDFT(grid.dims, grid.lengths)


# -- acceptance summary ---------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_acceptance(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in range(1, 11):
        if n in ACCEPTANCE:
            ok, detail = ACCEPTANCE[n]
            terminalreporter.write_line(f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'} {detail}")
        else:
            terminalreporter.write_line(f"ACCEPTANCE {n} NOT RUN")

"""Compiled and numpy kernels must agree; the formulas are checked against plain expressions."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evflux import kernels

needs_compiled = pytest.mark.skipif(not kernels.compiled_available(), reason="compiled kernels not built")


@pytest.fixture
def both():
    prev = kernels.BACKEND

    def run(fn, *args):
        out = []
        for b in ("python", "cython"):
            kernels.use_backend(b)
            out.append(fn(*args))
        kernels.use_backend(prev)
        return out

    yield run
    kernels.use_backend(prev)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_pressure_formula():
    rho = np.array([[0.0, 0.5], [1.0, -0.2]])
    p, nneg = kernels.pressure_law(rho, 2.0, 1.4, 0.1, 5.0)
    r = np.maximum(rho, 0)
    assert nneg == 1
    assert np.allclose(p, 2 * r**1.4 + 0.1 * r**5)
    c2 = kernels.sound_speed_sq(rho, 2.0, 1.4, 0.1, 5.0)
    assert np.allclose(c2, 2.8 * r**0.4 + 0.5 * r**4)
    h2 = kernels.pressure_curvature(rho, 1e-3, 2.0, 1.4, 0.1, 5.0)
    rf = np.maximum(rho, 1e-3)
    assert np.allclose(h2, 2.8 * rf**-0.6 + 0.5 * rf**3)


def test_momentum_flux_formula(rng):
    n, shape = 2, (5, 7)
    m = rng.standard_normal((n,) + shape)
    u = rng.standard_normal((n,) + shape)
    du = rng.standard_normal((n, n) + shape)
    mu = rng.random(shape)
    lam = rng.standard_normal(shape)
    out = kernels.momentum_flux(m, u, du, mu, lam)
    div = du[0, 0] + du[1, 1]
    for i in range(n):
        for j in range(n):
            ref = m[i] * u[j] - mu * (du[i, j] + du[j, i]) - (lam * div if i == j else 0)
            assert np.allclose(out[i, j], ref, atol=1e-14)


def test_eps_cross_formula(rng):
    du = rng.standard_normal((3, 3, 4, 4, 4))
    g = rng.standard_normal((3, 4, 4, 4))
    out = kernels.eps_cross(du, g, 0.25)
    ref = 0.25 * np.einsum("ij...,j...->i...", du, g)
    assert np.allclose(out, ref, atol=1e-14)


@needs_compiled
@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.01, 3), st.floats(0, 0.5), st.floats(4.1, 9))
def test_backends_agree_pressure(seed, gamma, delta, beta):
    prev = kernels.BACKEND
    r = np.random.default_rng(seed)
    rho = r.random(257) * 3 - 0.1
    out = []
    try:
        for b in ("python", "cython"):
            kernels.use_backend(b)
            out.append((kernels.pressure_law(rho, 1.3, gamma, delta, beta),
                        kernels.sound_speed_sq(rho, 1.3, gamma, delta, beta),
                        kernels.pressure_curvature(rho, 1e-6, 1.3, gamma, delta, beta),
                        kernels.truncation(rho * 5, 1.7)))
    finally:
        kernels.use_backend(prev)
    (pa, na), ca, ha, (ta, da) = out[0]
    (pb, nb), cb, hb, (tb, db) = out[1]
    assert na == nb
    for a, b in ((pa, pb), (ca, cb), (ha, hb), (ta, tb), (da, db)):
        assert np.allclose(a, b, rtol=1e-13, atol=1e-14)


@needs_compiled
def test_backends_agree_tensors(both, rng):
    m = rng.standard_normal((3, 6, 6, 6))
    u = rng.standard_normal((3, 6, 6, 6))
    du = rng.standard_normal((3, 3, 6, 6, 6))
    mu = rng.random((6, 6, 6))
    lam = rng.standard_normal((6, 6, 6))
    a, b = both(kernels.momentum_flux, m, u, du, mu, lam)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-15)
    a, b = both(kernels.eps_cross, du, m, 0.3)
    assert np.allclose(a, b, rtol=1e-14, atol=1e-15)


def test_truncation_kernel_regions():
    z = np.array([0.5, 1.0, 2.0, 3.0, 4.0])
    v, d = kernels.truncation(z, 1.0)
    assert v.tolist() == pytest.approx([0.5, 1.0, 1.8125, 2.0, 2.0])
    assert d.tolist() == pytest.approx([1.0, 1.0, 0.5, 0.0, 0.0])

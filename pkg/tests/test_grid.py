import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evflux.grid import (
    Grid,
    block_means,
    bmo_proxy,
    coarse_average,
    integrate,
    lp_norm,
    mean_oscillation,
)


def test_rejects_bad_grids():
    with pytest.raises(ValueError):
        Grid((64,), (1.0,))
    with pytest.raises(ValueError):
        Grid((63, 64), (1.0, 1.0))
    with pytest.raises(ValueError):
        Grid((4, 4), (1.0, 1.0))
    with pytest.raises(ValueError):
        Grid((16, 16), (1.0, -1.0))
    with pytest.raises(ValueError):
        Grid((16, 16), (1.0,))


def test_geometry():
    g = Grid((16, 32), (2.0, 4.0))
    assert g.ndim == 2
    assert g.spacing == (0.125, 0.125)
    assert g.cell_volume == pytest.approx(1 / 64)
    assert g.volume == pytest.approx(8.0)
    x, y = g.mesh()
    assert x[3, 0] == pytest.approx(0.375) and y[0, 5] == pytest.approx(0.625)


def test_integrate_constant_and_mode():
    g = Grid.square(32)
    assert integrate(np.ones(g.shape), g) == pytest.approx(4 * math.pi**2, rel=1e-14)
    x, y = g.mesh()
    assert abs(integrate(np.cos(x) * np.sin(2 * y), g)) < 1e-12
    # rectangle rule is exact for band-limited products
    assert integrate(np.cos(y) ** 2, g) == pytest.approx(2 * math.pi**2, rel=1e-14)


def test_lp_norm():
    g = Grid.square(16, length=1.0)
    f = np.full(g.shape, 2.0)
    assert lp_norm(f, g, 1) == pytest.approx(2.0)
    assert lp_norm(f, g, 3) == pytest.approx(2.0)
    assert lp_norm(-f, g, math.inf) == 2.0
    with pytest.raises(ValueError):
        lp_norm(f, g, 0.5)


def test_lp_norm_of_sine():
    # ||sin x||_2 on [0, 2pi)^2 is sqrt(2 pi^2)
    g = Grid.square(32)
    x, _ = g.mesh()
    assert lp_norm(np.sin(x), g, 2) == pytest.approx(math.sqrt(2) * math.pi, rel=1e-13)


def test_block_operations():
    f = np.arange(16.0).reshape(4, 4)
    bm = block_means(f, 2)
    assert bm.tolist() == [[2.5, 4.5], [10.5, 12.5]]
    ca = coarse_average(f, 2)
    assert ca.shape == f.shape and ca[1, 1] == 2.5 and ca[3, 0] == 10.5
    with pytest.raises(ValueError):
        block_means(f, 3)
    # each 2x2 block is {a, a+1, a+4, a+5}: mean |f - mean| = (2.5 + 1.5 + 1.5 + 2.5)/4 = 2
    assert mean_oscillation(f, 2) == pytest.approx(2.0)


def test_bmo_proxy_constant_zero():
    assert bmo_proxy(np.full((16, 16), 3.0)) == 0.0
    f = np.zeros((16, 16))
    f[:8] = 1.0
    assert bmo_proxy(f) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4, 8]))
def test_coarse_average_preserves_integral(seed, block):
    g = Grid.square(16)
    f = np.random.default_rng(seed).standard_normal(g.shape)
    assert integrate(coarse_average(f, block), g) == pytest.approx(integrate(f, g), abs=1e-12)
    # idempotent
    c = coarse_average(f, block)
    assert np.allclose(coarse_average(c, block), c, atol=1e-15)

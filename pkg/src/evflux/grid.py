"""Uniform periodic grids and grid-level reductions.

Fields are plain numpy arrays laid out row-major on a :class:`Grid`:

* scalar field: shape ``grid.shape``
* vector field: shape ``(N, *grid.shape)``
* tensor field: shape ``(N, N, *grid.shape)``

Samples sit at ``x_k = k * spacing`` on each axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self) -> None:
        dims = tuple(int(d) for d in self.dims)
        lengths = tuple(float(length) for length in self.lengths)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "lengths", lengths)
        if len(dims) not in (2, 3):
            raise ValueError(f"grid must be 2D or 3D, got N={len(dims)}")
        if len(lengths) != len(dims):
            raise ValueError("dims and lengths must have the same number of entries")
        for d in dims:
            if d < 8 or d % 2:
                raise ValueError(f"grid dims must be even and >= 8, got {d}")
        for length in lengths:
            if not (length > 0 and math.isfinite(length)):
                raise ValueError(f"domain lengths must be positive, got {length}")

    @classmethod
    def square(cls, n: int, ndim: int = 2, length: float = 2 * math.pi) -> "Grid":
        return cls((n,) * ndim, (length,) * ndim)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.dims

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(length / d for length, d in zip(self.lengths, self.dims))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays, one per axis."""
        out = []
        for axis, (d, h) in enumerate(zip(self.dims, self.spacing)):
            shape = [1] * self.ndim
            shape[axis] = d
            out.append((np.arange(d) * h).reshape(shape))
        return tuple(out)

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.broadcast_to(c, self.shape) for c in self.coords)

    def zeros(self, *lead: int) -> np.ndarray:
        return np.zeros(tuple(lead) + self.shape)

    def sample(self, fn: Callable[..., np.ndarray]) -> np.ndarray:
        """Evaluate ``fn(x1, ..., xN)`` on the grid as a full array."""
        return np.broadcast_to(np.asarray(fn(*self.coords), dtype=float), self.shape).copy()


def integrate(f: np.ndarray, grid: Grid) -> float:
    """Rectangle rule on the periodic grid (spectrally accurate for smooth f)."""
    return float(np.sum(f) * grid.cell_volume)


def mean(f: np.ndarray) -> float:
    return float(np.mean(f))


def lp_norm(f: np.ndarray, grid: Grid, p: float) -> float:
    if not p >= 1:
        raise ValueError(f"lp_norm requires p >= 1, got {p}")
    a = np.abs(f)
    if math.isinf(p):
        return float(a.max())
    return integrate(a**p, grid) ** (1.0 / p)


def _check_block(grid_shape: Sequence[int], block: int) -> None:
    if block < 1 or any(d % block for d in grid_shape):
        raise ValueError(f"block {block} does not divide grid dims {tuple(grid_shape)}")


def _blocked(f: np.ndarray, block: int) -> np.ndarray:
    # (n0, b, n1, b, ...) view; block axes are the odd ones
    shape = []
    for d in f.shape:
        shape += [d // block, block]
    return f.reshape(shape)


def block_means(f: np.ndarray, block: int) -> np.ndarray:
    """Mean over each block of ``block**N`` cells, at coarse resolution."""
    _check_block(f.shape, block)
    axes = tuple(range(1, 2 * f.ndim, 2))
    return _blocked(f, block).mean(axis=axes)


def coarse_average(f: np.ndarray, block: int) -> np.ndarray:
    """Piecewise-constant block means returned at full resolution."""
    coarse = block_means(f, block)
    out = coarse
    for axis in range(f.ndim):
        out = np.repeat(out, block, axis=axis)
    return out


def mean_oscillation(f: np.ndarray, block: int) -> float:
    """Largest mean oscillation ``avg_Q |f - f_Q|`` over blocks Q of the given size."""
    _check_block(f.shape, block)
    axes = tuple(range(1, 2 * f.ndim, 2))
    b = _blocked(f, block)
    dev = np.abs(b - b.mean(axis=axes, keepdims=True))
    return float(dev.mean(axis=axes).max())


def bmo_proxy(f: np.ndarray) -> float:
    """Dyadic stand-in for the BMO seminorm: max mean oscillation over dyadic block sizes."""
    n = min(f.shape)
    best = 0.0
    block = 2
    while block <= n:
        if all(d % block == 0 for d in f.shape):
            best = max(best, mean_oscillation(f, block))
        block *= 2
    return best

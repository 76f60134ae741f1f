"""Finite-state approximations of one-dimensional kernels.

Transition mass from grid point ``x_i`` goes to cells of a uniform grid:
continuous innovations contribute noise-CDF differences over the cell edges
(the two end cells absorb the tails), discrete innovations are split linearly
between the two neighbouring grid points, which preserves the conditional mean.
"""
from __future__ import annotations

import numpy as np

from .core import FiniteChain, Kernel
from .exceptions import ConfigurationError
from .models import ULA, BernoulliAR1, NonlinearAR, Noise, QuadraticTarget


def _split_linear(P, grid, src, targets, weights):
    lo, hi = grid[0], grid[-1]
    step = grid[1] - grid[0]
    t = np.clip(targets, lo, hi)
    pos = (t - lo) / step
    k = np.clip(np.floor(pos).astype(int), 0, len(grid) - 2)
    frac = pos - k
    np.add.at(P, (src, k), weights * (1.0 - frac))
    np.add.at(P, (src, k + 1), weights * frac)


def _cdf_rows(grid, means, noise: Noise):
    edges = np.concatenate([[-np.inf], 0.5 * (grid[1:] + grid[:-1]), [np.inf]])
    F = noise.cdf(edges[None, :] - means[:, None])
    return np.diff(F, axis=1)


def discretize_kernel(kernel: Kernel, m: int = 1024, lo: float = None, hi: float = None):
    """Return ``(chain, grid)`` approximating ``kernel`` on ``m`` grid states."""
    if kernel.dim != 1:
        raise ConfigurationError("only one-dimensional kernels can be discretized")
    if m < 2:
        raise ConfigurationError("need at least two grid states")
    if isinstance(kernel, BernoulliAR1):
        grid = np.linspace(0.0, 1.0, m)
        P = np.zeros((m, m))
        src = np.arange(m)
        a = kernel.a
        _split_linear(P, grid, src, a * grid, np.full(m, 0.5))
        _split_linear(P, grid, src, a * grid + (1.0 - a), np.full(m, 0.5))
    elif isinstance(kernel, NonlinearAR):
        lo = -10.0 if lo is None else lo
        hi = 10.0 if hi is None else hi
        grid = np.linspace(lo, hi, m)
        means = kernel.mean_map(grid)
        if kernel.noise.kind == "scaled-bernoulli-pair":
            P = np.zeros((m, m))
            src = np.arange(m)
            c = kernel.noise.scale
            _split_linear(P, grid, src, means - c, np.full(m, 0.5))
            _split_linear(P, grid, src, means + c, np.full(m, 0.5))
        else:
            P = _cdf_rows(grid, means, kernel.noise)
    elif isinstance(kernel, ULA) and isinstance(kernel.target, QuadraticTarget):
        lo = -10.0 if lo is None else lo
        hi = 10.0 if hi is None else hi
        grid = np.linspace(lo, hi, m)
        means = grid - kernel.h * kernel.target.A[0, 0] * grid
        P = _cdf_rows(grid, means, Noise("gaussian", np.sqrt(2.0 * kernel.h)))
    else:
        raise ConfigurationError(f"no discretization for family {kernel.family!r}")
    P = np.clip(P, 0.0, None)
    P /= P.sum(axis=1, keepdims=True)
    return FiniteChain(P), grid

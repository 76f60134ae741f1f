"""Exact operator algebra on finite chains: Poisson and resolvent solutions,
martingale decompositions of additive functionals, asymptotic variances.

Norms are L2(pi) norms with the chain's own stationary vector.  Additive
functionals are ``S_n(g) = g(X_1) + ... + g(X_n)``, the sum for which
``S_n = sum_k [h(X_k) - Qh(X_{k-1})] + Qh(X_0) - Qh(X_n)`` is an identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import FiniteChain, Trajectory, finite_apply
from .exceptions import ConfigurationError, NumericalError


@dataclass(frozen=True, eq=False)
class CenteredFunction:
    """A function on the states of ``chain`` with zero pi-mean."""

    values: np.ndarray
    chain: FiniteChain
    original_mean: float = 0.0

    @classmethod
    def center(cls, chain: FiniteChain, g):
        g = np.asarray(g, dtype=float)
        if g.shape != (chain.n_states,):
            raise ConfigurationError(f"function has {g.size} values, chain has {chain.n_states} states")
        mu = chain.mean(g)
        values = g - mu
        # second pass removes the rounding left by the first subtraction
        values = values - chain.mean(values)
        values.setflags(write=False)
        return cls(values, chain, mu)


def _as_centered(chain: FiniteChain, g) -> CenteredFunction:
    if isinstance(g, CenteredFunction):
        if g.chain is not chain and not np.array_equal(g.chain.P, chain.P):
            raise ConfigurationError("function belongs to a different chain")
        return g
    return CenteredFunction.center(chain, g)


def v_n(chain: FiniteChain, g, n: int):
    """``V_n g = sum_{k=0}^{n-1} Q^k g``."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    g = _as_centered(chain, g).values
    term = g.copy()
    total = g.copy()
    for _ in range(n - 1):
        term = finite_apply(chain, term)
        total += term
    return total


@dataclass
class MWConditionSums:
    """Cumulative sums of ``n^{-3/2} ||V_n g||`` for ``n = 1..n_max``."""

    cumulative: np.ndarray
    norms: np.ndarray
    tail_increment: float
    growth_exponent: float
    diverging: bool


def mw_condition_sum(chain: FiniteChain, g, n_max: int, tail_terms: int = 10) -> MWConditionSums:
    """Partial sums of the martingale-approximation series plus a tail diagnostic.

    ``tail_increment`` is the contribution of the last ``tail_terms`` terms;
    ``growth_exponent`` is the log-log slope of ``||V_n g||`` over the last
    decade of ``n``.  A power-law ``||V_n g|| ~ n^alpha`` gives a convergent series
    iff ``alpha < 1/2``; ``diverging`` flags ``alpha >= 0.45``.
    """
    if n_max < 1:
        raise ConfigurationError("n_max must be >= 1")
    gc = _as_centered(chain, g).values
    norms = np.empty(n_max)
    term = gc.copy()
    total = np.zeros_like(gc)
    for n in range(1, n_max + 1):
        total += term
        norms[n - 1] = chain.norm(total)
        term = chain.P @ term
    ns = np.arange(1, n_max + 1, dtype=float)
    inc = norms * ns**-1.5
    cum = np.cumsum(inc)
    k = min(tail_terms, n_max)
    tail = float(cum[-1] - (cum[-k - 1] if n_max > k else 0.0))
    lo = max(1, n_max // 10)
    if norms[-1] > 0 and norms[lo - 1] > 0 and n_max > lo:
        alpha = float(math.log(norms[-1] / norms[lo - 1]) / math.log(n_max / lo))
    else:
        alpha = -math.inf
    return MWConditionSums(cum, norms, tail, alpha, bool(alpha >= 0.45))


def resolvent_solve(chain: FiniteChain, g, eps: float):
    """Solve ``(1 + eps) h - Q h = g``."""
    if not eps > 0:
        raise ConfigurationError("eps must be positive")
    g = _as_centered(chain, g).values
    n = chain.n_states
    A = (1.0 + eps) * np.eye(n) - chain.P
    h = np.linalg.solve(A, g)
    h = h + np.linalg.solve(A, g - A @ h)
    res = float(np.max(np.abs((1.0 + eps) * h - chain.P @ h - g), initial=0.0))
    if not np.all(np.isfinite(h)) or res > 1e-10 * max(1.0, float(np.max(np.abs(g), initial=0.0))):
        raise NumericalError(f"resolvent residual {res:.3g} too large")
    return h


def resolvent_series(chain: FiniteChain, g, eps: float, terms: int):
    """Truncated ``sum_{k>=1} Q^{k-1} g / (1 + eps)^k``; the independent cross-check."""
    g = _as_centered(chain, g).values
    term = g / (1.0 + eps)
    total = term.copy()
    for _ in range(terms - 1):
        term = (chain.P @ term) / (1.0 + eps)
        total += term
    return total


@dataclass
class PoissonSolution:
    h: np.ndarray
    Qh: np.ndarray
    residual: float
    series_check: Optional[float] = None
    flagged: bool = False

    def as_dict(self):
        return {
            "h": self.h.tolist(),
            "residual": self.residual,
            "series_check": self.series_check,
            "flagged": self.flagged,
        }


def poisson_solve(chain: FiniteChain, g, series_terms: int = 1000) -> PoissonSolution:
    """Solve ``h - Qh = g`` with ``pi h = 0``.

    Uses the fundamental matrix ``(I - P + 1 pi^T)``, nonsingular for any chain
    with a single closed class (periodic ones included).  ``series_check`` is
    ``max |h - sum_{n<N} Q^n g|`` when the Neumann series has converged by
    ``N = series_terms`` terms, else ``None``.
    """
    gc = _as_centered(chain, g).values
    n = chain.n_states
    A = np.eye(n) - chain.P + np.outer(np.ones(n), chain.pi)
    flagged = False
    if np.linalg.cond(A) > 1e12:
        flagged = True
        h = np.linalg.lstsq(A, gc, rcond=None)[0]
    else:
        h = np.linalg.solve(A, gc)
        h = h + np.linalg.solve(A, gc - A @ h)
    h = h - chain.mean(h)
    res = float(np.max(np.abs(h - chain.P @ h - gc), initial=0.0))

    series_check = None
    term = gc.copy()
    series = np.zeros(n)
    for _ in range(series_terms):
        series += term
        term = chain.P @ term
    if np.max(np.abs(term), initial=0.0) < 1e-12:
        series_check = float(np.max(np.abs(series - h), initial=0.0))
    return PoissonSolution(h, chain.P @ h, res, series_check, flagged)


def asymptotic_variance(chain: FiniteChain, g, solution: Optional[PoissonSolution] = None) -> float:
    """``sigma^2(g) = E_pi[h^2] - E_pi[(Qh)^2]`` from the Poisson solution."""
    if solution is None:
        solution = poisson_solve(chain, g)
    h, Qh = solution.h, solution.Qh
    s2 = float(chain.pi @ (h * h) - chain.pi @ (Qh * Qh))
    if s2 < -1e-12:
        raise NumericalError(f"negative asymptotic variance {s2:.3g}")
    return max(s2, 0.0)


def autocovariance_variance(chain: FiniteChain, g, K: int) -> float:
    """Brute-force ``Var_pi(g) + 2 sum_{k=1}^K Cov_pi(g(X_0), g(X_k))``."""
    gc = _as_centered(chain, g).values
    weighted = chain.pi * gc
    total = float(weighted @ gc)
    term = gc.copy()
    for _ in range(K):
        term = chain.P @ term
        total += 2.0 * float(weighted @ term)
    return total


@dataclass
class MaDecomposition:
    """``S_n = M_n + R_n`` along one trajectory (index 0 corresponds to ``n = 0``)."""

    increments: np.ndarray  # m_k, k = 1..n
    martingale: np.ndarray  # M_n, n = 0..N
    remainder: np.ndarray  # R_n, n = 0..N
    partial_sums: np.ndarray  # S_n, n = 0..N
    trajectory: Trajectory

    @property
    def reconstruction_error(self):
        return float(np.max(np.abs(self.partial_sums - self.martingale - self.remainder), initial=0.0))


def ma_decompose(chain: FiniteChain, g, traj: Trajectory, solution: Optional[PoissonSolution] = None) -> MaDecomposition:
    """Gordin-Lifsic decomposition along a finite-chain trajectory."""
    gc = _as_centered(chain, g).values
    if solution is None:
        solution = poisson_solve(chain, gc)
    h, Qh = solution.h, solution.Qh
    idx = np.asarray(traj.states, dtype=float)[:, 0].astype(np.intp)
    m = h[idx[1:]] - Qh[idx[:-1]]
    M = np.concatenate([[0.0], np.cumsum(m)])
    R = Qh[idx[0]] - Qh[idx]
    S = np.concatenate([[0.0], np.cumsum(gc[idx[1:]])])
    return MaDecomposition(m, M, R, S, traj)

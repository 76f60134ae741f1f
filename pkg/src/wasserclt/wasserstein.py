"""Empirical L1-Wasserstein distances, synchronous couplings and rate functions."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import FiniteKernel, Kernel, Metric, run_batch
from .exceptions import ConfigurationError
from .rng import RngStream


def w1_empirical_1d(xs, ys) -> float:
    """Exact W1 between two equal-size empirical measures on the line.

    On the real line the monotone (order-statistics) coupling is optimal, so the
    distance is the mean absolute difference of the sorted samples.
    """
    xs = np.sort(np.asarray(xs, dtype=float).ravel())
    ys = np.sort(np.asarray(ys, dtype=float).ravel())
    if xs.size != ys.size:
        raise ConfigurationError("samples must have equal size")
    if xs.size == 0:
        raise ConfigurationError("samples must be non-empty")
    return float(np.mean(np.abs(xs - ys)))


# --------------------------------------------------------------------------
# couplings


@dataclass
class CoupledTrajectoryStats:
    distances: np.ndarray
    start: Tuple[np.ndarray, np.ndarray]


def coupled_run(kernel: Kernel, x, y, n: int, rng: RngStream, metric: Metric = Metric()):
    """Run two copies from ``x`` and ``y`` driven by the same innovations."""
    x = kernel.validate_state(x)
    y = kernel.validate_state(y)
    dist = np.empty(n + 1)
    dist[0] = metric(x, y)

    def observe(t, s):
        dist[t] = metric(s[0], s[1])[0]

    x0 = np.stack([x, y])[:, None, :]
    run_batch(kernel, x0, n, [rng], observe=observe)
    return CoupledTrajectoryStats(dist, (x, y))


@dataclass
class ContractionEstimate:
    """Coupling estimate of the one-step contraction rate.

    ``per_step_ratios[p]`` holds the ratios of replicate-averaged distances for
    start pair ``p`` (truncated at coalescence); ``gamma_hat`` is the max over
    pairs of their geometric means.
    """

    per_step_ratios: List[np.ndarray]
    gamma_hat: float
    is_deterministic: bool
    pair_gammas: np.ndarray
    coalesced: List[bool]
    pairs: List[Tuple[np.ndarray, np.ndarray]] = field(default_factory=list)
    replicate_ratio_variance: float = 0.0

    def as_dict(self):
        return {
            "gamma_hat": self.gamma_hat,
            "is_deterministic": self.is_deterministic,
            "replicate_ratio_variance": self.replicate_ratio_variance,
            "pairs": [
                {
                    "x": np.asarray(x).tolist(),
                    "y": np.asarray(y).tolist(),
                    "gamma": float(g),
                    "coalesced": bool(c),
                    "ratios": np.asarray(r).tolist(),
                }
                for (x, y), g, c, r in zip(self.pairs, self.pair_gammas, self.coalesced, self.per_step_ratios)
            ],
        }


def default_pairs(kernel: Kernel, n_side: int = 5):
    """Default start pairs on a lattice of the state bounds.

    ``x`` runs over ``n_side`` equispaced points and ``y`` over the midpoints
    between consecutive ones, so members of a pair always differ.
    Higher-dimensional states use the same points along the diagonal.
    """
    if isinstance(kernel, FiniteKernel):
        n = kernel.chain.n_states
        return [(np.array([float(i)]), np.array([float(j)])) for i in range(n) for j in range(i + 1, n)]
    lo, hi = kernel.state_bounds()
    xs = np.linspace(lo, hi, n_side)
    ys = 0.5 * (xs[1:] + xs[:-1])
    ones = np.ones(kernel.dim)
    return [(x * ones, y * ones) for x in xs for y in ys]


def estimate_contraction(
    kernel: Kernel,
    pairs: Optional[Sequence] = None,
    n: int = 5,
    rng: Optional[RngStream] = None,
    replicates: int = 100,
    metric: Metric = Metric(),
) -> ContractionEstimate:
    """Estimate the contraction rate by synchronous coupling from each start pair.

    For every pair the distance is averaged over ``replicates`` coupled runs
    before ratios are taken; replicate ``j`` of every pair shares stream ``j``.
    """
    if rng is None:
        rng = RngStream(0)
    if pairs is None:
        pairs = default_pairs(kernel)
    if len(pairs) == 0:
        raise ConfigurationError("pairs must be non-empty")
    if replicates < 1 or n < 1:
        raise ConfigurationError("need n >= 1 and replicates >= 1")
    xs = np.stack([kernel.validate_state(p[0]) for p in pairs])
    ys = np.stack([kernel.validate_state(p[1]) for p in pairs])
    if np.any(metric(xs, ys) == 0):
        raise ConfigurationError("members of each start pair must be distinct")
    P = len(pairs)
    streams = [rng.substream(j) for j in range(replicates)]
    dist = np.empty((n + 1, P, replicates))
    dist[0] = metric(xs, ys)[:, None]

    def observe(t, s):
        dist[t] = metric(s[0], s[1])

    x0 = np.stack([xs, ys])[:, :, None, :]
    run_batch(kernel, np.broadcast_to(x0, (2, P, replicates, kernel.dim)), n, streams, observe=observe)

    ratios, gammas, coalesced = [], [], []
    rep_ratios = []
    for p in range(P):
        mean_d = dist[:, p, :].mean(axis=1)
        zero = np.flatnonzero(mean_d == 0)
        w = int(zero[0]) - 1 if zero.size else n
        coalesced.append(bool(zero.size))
        r = mean_d[1 : w + 1] / mean_d[:w]
        ratios.append(r)
        gammas.append(float(np.exp(np.mean(np.log(r)))) if w > 0 else 0.0)
        d = dist[:, p, :]
        ok = (d[:-1] > 0) & (d[1:] > 0)
        rep_ratios.append((d[1:][ok] / d[:-1][ok]))
    all_rep = np.concatenate(rep_ratios) if rep_ratios else np.zeros(0)
    rep_var = float(np.var(all_rep)) if all_rep.size else 0.0
    # per-pair variance across replicates; deterministic only if every pair is
    deterministic = all((rr.size == 0 or np.var(rr) < 1e-14) for rr in rep_ratios)
    return ContractionEstimate(
        per_step_ratios=ratios,
        gamma_hat=max(gammas),
        is_deterministic=bool(deterministic),
        pair_gammas=np.asarray(gammas),
        coalesced=coalesced,
        pairs=[(x, y) for x, y in zip(xs, ys)],
        replicate_ratio_variance=rep_var,
    )


# --------------------------------------------------------------------------
# rate functions

RATE_FAMILIES = ("geometric", "subgeometric", "polynomial")


@dataclass(frozen=True)
class RateFunction:
    """``rho**n``, ``rho**(n**gamma)`` or ``n**(-beta)`` (with ``r(0) = 1``)."""

    family: str
    rho: Optional[float] = None
    gamma: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        if self.family not in RATE_FAMILIES:
            raise ConfigurationError(f"unknown rate family {self.family!r}")
        if self.family in ("geometric", "subgeometric"):
            if self.rho is None or not 0 < self.rho < 1:
                raise ConfigurationError("rho must lie in (0,1)")
        if self.family == "subgeometric" and (self.gamma is None or self.gamma < 0):
            raise ConfigurationError("subgeometric rate needs gamma >= 0")
        if self.family == "polynomial" and (self.beta is None or self.beta <= 0):
            raise ConfigurationError("polynomial rate needs beta > 0")

    @property
    def in_clt_regime(self):
        if self.family == "subgeometric":
            return self.gamma >= 0.5
        if self.family == "polynomial":
            return self.beta > 0.5
        return True

    def values(self, k):
        k = np.asarray(k, dtype=float)
        if self.family == "geometric":
            return self.rho**k
        if self.family == "subgeometric":
            return self.rho ** (k**self.gamma)
        with np.errstate(divide="ignore"):
            return np.where(k == 0, 1.0, k ** (-self.beta))


def rate_eval(r: RateFunction, n: int) -> float:
    if n < 0:
        raise ConfigurationError("n must be non-negative")
    return float(r.values(n))


def rate_partial_sum(r: RateFunction, n: int, block: int = 1 << 20) -> float:
    """``sum_{k=0}^{n-1} r(k)``, correctly rounded via ``math.fsum``."""
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    partials = []
    for start in range(0, n, block):
        partials.append(math.fsum(r.values(np.arange(start, min(n, start + block)))))
    return math.fsum(partials)


def classify_rate(r: RateFunction) -> str:
    """``A1-prime`` (summable), ``A1-only`` (partial sums o(sqrt n)) or ``neither``."""
    if r.family == "geometric":
        return "A1-prime"
    if r.family == "subgeometric":
        return "A1-prime" if r.gamma > 0 else "neither"
    if r.beta > 1:
        return "A1-prime"
    if r.beta > 0.5:
        return "A1-only"
    return "neither"

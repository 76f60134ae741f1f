"""Monte Carlo verification of Markov-chain central limit theorems.

Replicate ``r`` of an experiment runs on its own stream and reports
``S_n(g)/sqrt(n)`` with ``S_n(g) = g(X_{b+1}) + ... + g(X_{b+n})`` after a burn-in
of ``b`` steps.  Replicates run in fixed-size blocks that may be spread over
threads; results are merged in stream order, so every number in a report is
independent of the thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import stats

from .core import FiniteChain, Kernel, run_batch
from .discretize import discretize_kernel
from .exceptions import ConfigurationError, VerdictRefused
from .martingale import CenteredFunction, poisson_solve
from .rng import RngStream

KS_CRITICAL = {"5%": 1.358, "1%": 1.628}
MIN_REPLICATES = 200

# substream namespaces under the experiment stream
_REPLICATES, _CENTER, _BATCH_MEANS = 0, 1, 2


class TestFunction:
    """Lipschitz observable ``g(x) = raw(x) - center``.

    Kinds: ``coordinate`` (``raw(x) = x[index]``), ``lipschitz-custom``
    (piecewise-linear interpolation of ``values`` on ``grid`` over ``x[0]``, with a
    recorded Lipschitz constant) and ``indicator-smoothed`` (a ramp of width
    ``width`` rising from 0 to 1 around ``threshold``).
    """

    __test__ = False  # keep pytest from collecting this class
    KINDS = ("coordinate", "lipschitz-custom", "indicator-smoothed")

    def __init__(self, kind="coordinate", index=0, center=None, grid=None, values=None,
                 lipschitz=None, threshold=0.0, width=1.0):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown test-function kind {kind!r}")
        self.kind = kind
        self.index = int(index)
        self.center = None if center is None else float(center)
        if kind == "coordinate":
            self.lipschitz = 1.0
        elif kind == "lipschitz-custom":
            self.grid = np.asarray(grid, dtype=float)
            self.values = np.asarray(values, dtype=float)
            if self.grid.ndim != 1 or self.grid.shape != self.values.shape or self.grid.size < 2:
                raise ConfigurationError("lipschitz-custom needs matching grid and values")
            if np.any(np.diff(self.grid) <= 0):
                raise ConfigurationError("grid must be strictly increasing")
            observed = float(np.max(np.abs(np.diff(self.values) / np.diff(self.grid))))
            self.lipschitz = observed if lipschitz is None else float(lipschitz)
            if self.lipschitz < observed:
                raise ConfigurationError(
                    f"recorded Lipschitz constant {self.lipschitz} below observed {observed}"
                )
        else:
            if not width > 0:
                raise ConfigurationError("width must be positive")
            self.threshold, self.width = float(threshold), float(width)
            self.lipschitz = 1.0 / self.width

    def raw(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "coordinate":
            return x[..., self.index]
        if self.kind == "lipschitz-custom":
            return np.interp(x[..., 0], self.grid, self.values)
        t = (x[..., self.index] - self.threshold) / self.width + 0.5
        return np.clip(t, 0.0, 1.0)

    def __call__(self, x):
        c = 0.0 if self.center is None else self.center
        return self.raw(x) - c

    def with_center(self, center):
        out = object.__new__(TestFunction)
        out.__dict__.update(self.__dict__)
        out.center = float(center)
        return out

    @property
    def is_zero(self):
        return self.kind == "lipschitz-custom" and not np.any(self.values) and not self.center

    def as_dict(self):
        d = {"kind": self.kind, "center": self.center, "lipschitz": self.lipschitz}
        if self.kind == "coordinate":
            d["index"] = self.index
        elif self.kind == "lipschitz-custom":
            d.update(grid=self.grid.tolist(), values=self.values.tolist())
        else:
            d.update(index=self.index, threshold=self.threshold, width=self.width)
        return d


@dataclass
class BatchMeansEstimate:
    b: int
    length: int
    estimate: float
    se: float


def batch_means(values, b: int = 50) -> BatchMeansEstimate:
    """``l * Var(batch means)`` from ``b`` equal batches (remainder truncated)."""
    values = np.asarray(values, dtype=float).ravel()
    if b < 20:
        raise ConfigurationError("batch means needs b >= 20 batches")
    length = values.size // b
    if length < 100:
        raise ConfigurationError("batch means needs batch length >= 100")
    means = values[: b * length].reshape(b, length).mean(axis=1)
    est = float(length * np.var(means, ddof=1))
    return BatchMeansEstimate(b, length, est, est * math.sqrt(2.0 / (b - 1)))


def ks_normality(values, sigma2: float, level: str = "1%"):
    """One-sample KS test of ``values`` against ``N(0, sigma2)``.

    Returns ``(statistic, passed)`` with the asymptotic critical value
    ``c(level) / sqrt(R)``.
    """
    if not sigma2 > 0:
        raise ConfigurationError("sigma2 must be positive")
    if level not in KS_CRITICAL:
        raise ConfigurationError(f"level must be one of {sorted(KS_CRITICAL)}")
    values = np.asarray(values, dtype=float).ravel()
    if values.size < MIN_REPLICATES:
        raise VerdictRefused(f"R >= {MIN_REPLICATES} required for a verdict, got {values.size}")
    stat = float(stats.kstest(values, stats.norm(scale=math.sqrt(sigma2)).cdf).statistic)
    return stat, bool(stat < KS_CRITICAL[level] / math.sqrt(values.size))


@dataclass
class CltReport:
    replicates: np.ndarray
    n: int
    R: int
    burn_in: int
    center: float
    center_se: Optional[float]
    center_estimated: bool
    replicate_mean: float
    replicate_variance: float
    sigma2_batch_means: Optional[float]
    sigma2_batch_means_se: Optional[float]
    sigma2_reference: Optional[float]
    ks_sigma2: Optional[float]
    ks_statistic: Optional[float]
    ks_pass: Optional[bool]
    level: str
    degenerate: bool = False
    acceptance_rate: Optional[float] = None
    seeds: Dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "n": self.n,
            "R": self.R,
            "burn_in": self.burn_in,
            "center": self.center,
            "center_se": self.center_se,
            "center_estimated": self.center_estimated,
            "replicate_mean": self.replicate_mean,
            "replicate_variance": self.replicate_variance,
            "sigma2_batch_means": self.sigma2_batch_means,
            "sigma2_batch_means_se": self.sigma2_batch_means_se,
            "sigma2_reference": self.sigma2_reference,
            "ks_sigma2": self.ks_sigma2,
            "ks_statistic": self.ks_statistic,
            "ks_pass": self.ks_pass,
            "level": self.level,
            "degenerate": self.degenerate,
            "acceptance_rate": self.acceptance_rate,
            "seeds": self.seeds,
        }


def _blocks(R, block_size):
    return [(s, min(R, s + block_size)) for s in range(0, R, block_size)]


def _map_blocks(fn, blocks, threads):
    if threads <= 1 or len(blocks) == 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def replicate_sums(kernel: Kernel, g, x0, n: int, burn_in: int, streams: List[RngStream],
                   block_size: int = 250, threads: int = 1):
    """``S_n(g)`` per stream plus total accepted moves (``None`` without accept step)."""
    start = kernel.validate_state(x0)

    def block(bounds):
        lo, hi = bounds
        sub = streams[lo:hi]
        x, acc0 = run_batch(kernel, start, burn_in, sub)
        S = np.zeros(hi - lo)

        def observe(t, s):
            S[:] += g(s)

        _, acc1 = run_batch(kernel, x, n, sub, observe=observe)
        acc = None
        if acc0 is not None or acc1 is not None:
            acc = int((0 if acc0 is None else acc0.sum()) + (0 if acc1 is None else acc1.sum()))
        return S, acc

    out = _map_blocks(block, _blocks(len(streams), block_size), threads)
    S = np.concatenate([o[0] for o in out])
    accs = [o[1] for o in out]
    return S, (None if accs[0] is None else sum(accs))


def estimate_center(kernel: Kernel, g: TestFunction, x0, rng: RngStream, chains: int = 1000,
                    steps: int = 10_000, burn_in: int = 1000, threads: int = 1):
    """pi-mean of ``g.raw`` from ``chains * steps`` post-burn-in states of independent chains."""
    streams = [rng.substream(c) for c in range(chains)]
    S, _ = replicate_sums(kernel, g.raw, x0, steps, burn_in, streams, threads=threads)
    means = S / steps
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(chains))


def pooled_batch_means(kernel: Kernel, g, x0, rng: RngStream, chains: int = 64, length: int = 100_000,
                       burn_in: int = 1000, b: int = 50):
    """Average of per-chain batch-means estimates over independent long runs."""
    streams = [rng.substream(c) for c in range(chains)]
    start = kernel.validate_state(x0)
    x, _ = run_batch(kernel, start, burn_in, streams)
    vals = np.empty((length, chains))

    def observe(t, s):
        vals[t - 1] = g(s)

    run_batch(kernel, x, length, streams, observe=observe)
    ests = np.array([batch_means(vals[:, c], b).estimate for c in range(chains)])
    return float(ests.mean()), float(ests.std(ddof=1) / math.sqrt(chains))


def run_clt_experiment(
    kernel: Kernel,
    g: TestFunction,
    x0,
    n: int,
    R: int,
    burn_in: int,
    rng: RngStream,
    *,
    sigma2_reference: Optional[float] = None,
    level: str = "1%",
    ks_against: Optional[str] = None,
    batch_means_chains: int = 64,
    batch_means_length: int = 100_000,
    center_chains: int = 1000,
    center_steps: int = 10_000,
    block_size: int = 250,
    threads: int = 1,
) -> CltReport:
    """Replicated ``S_n(g)/sqrt(n)`` with variance estimates and a KS normality verdict.

    The KS reference variance is ``sigma2_reference`` when given, otherwise the
    batch-means estimate (``ks_against`` = ``"reference"`` or ``"batch-means"``
    forces one).  An unknown center is estimated from independent chains.
    """
    if R < MIN_REPLICATES:
        raise VerdictRefused(f"R >= {MIN_REPLICATES} required, got {R}")
    if n < 1 or burn_in < 0:
        raise ConfigurationError("need n >= 1 and burn_in >= 0")
    if level not in KS_CRITICAL:
        raise ConfigurationError(f"level must be one of {sorted(KS_CRITICAL)}")
    center_se = None
    estimated = g.center is None
    if estimated:
        c, center_se = estimate_center(kernel, g, x0, rng.substream(_CENTER), center_chains,
                                       center_steps, max(burn_in, 1000), threads)
        g = g.with_center(c)
    rep_rng = rng.substream(_REPLICATES)
    streams = [rep_rng.substream(r) for r in range(R)]
    S, accepted = replicate_sums(kernel, g, x0, n, burn_in, streams, block_size, threads)
    values = S / math.sqrt(n)
    acc_rate = None if accepted is None else accepted / (R * (n + burn_in))

    degenerate = bool(np.all(values == values[0]))
    bm = bm_se = None
    if batch_means_chains > 0 and not degenerate:
        bm, bm_se = pooled_batch_means(kernel, g, x0, rng.substream(_BATCH_MEANS),
                                       batch_means_chains, batch_means_length, burn_in)
    mode = ks_against or ("reference" if sigma2_reference is not None else "batch-means")
    ks_sigma2 = sigma2_reference if mode == "reference" else bm
    stat = passed = None
    if not degenerate:
        if ks_sigma2 is None:
            raise ConfigurationError("no variance available for the normality test")
        stat, passed = ks_normality(values, ks_sigma2, level)
    return CltReport(
        replicates=values,
        n=n,
        R=R,
        burn_in=burn_in,
        center=float(g.center),
        center_se=center_se,
        center_estimated=estimated,
        replicate_mean=float(values.mean()),
        replicate_variance=float(values.var(ddof=1)),
        sigma2_batch_means=bm,
        sigma2_batch_means_se=bm_se,
        sigma2_reference=sigma2_reference,
        ks_sigma2=ks_sigma2,
        ks_statistic=stat,
        ks_pass=passed,
        level=level,
        degenerate=degenerate,
        acceptance_rate=acc_rate,
        seeds={"seed": rng.seed, "stream_id": rng.stream_id},
    )


# --------------------------------------------------------------------------
# remainder diagnostics


@dataclass
class RemainderDiagnostic:
    n_values: List[int]
    scaled_second_moment: List[float]  # E[R_n^2] / n
    decreasing: bool

    def as_dict(self):
        return {"n_values": self.n_values, "scaled_second_moment": self.scaled_second_moment,
                "decreasing": self.decreasing}


def remainder_diagnostic(kernel: Kernel, g, h, Qh, x0, rng: RngStream, n_values=(100, 1000, 10_000),
                         replicates: int = 500) -> RemainderDiagnostic:
    """Monte Carlo ``E[R_n^2]/n`` for ``R_n = S_n(g) - sum_{k<=n} [h(X_k) - Qh(X_{k-1})]``.

    ``g``, ``h`` and ``Qh`` are callables on state batches.  With an exact
    Poisson solution ``R_n = Qh(X_0) - Qh(X_n)``; with a proxy ``h`` the
    remainder absorbs the approximation error.
    """
    n_values = sorted(int(v) for v in n_values)
    streams = [rng.substream(r) for r in range(replicates)]
    start = kernel.validate_state(x0)
    rem = np.zeros(replicates)
    prev_Qh = np.broadcast_to(Qh(start), (replicates,)).copy()
    out = {}

    def observe(t, s):
        nonlocal prev_Qh
        rem[:] += g(s) - (h(s) - prev_Qh)
        prev_Qh = Qh(s)
        if t in wanted:
            out[t] = float(np.mean(rem * rem) / t)

    wanted = set(n_values)
    run_batch(kernel, start, n_values[-1], streams, observe=observe)
    seq = [out[v] for v in n_values]
    decreasing = all(b < a for a, b in zip(seq, seq[1:]))
    return RemainderDiagnostic(n_values, seq, decreasing)


def finite_functions(chain: FiniteChain, g):
    """State-batch callables ``(g, h, Qh)`` for a finite chain's exact Poisson solution."""
    gc = CenteredFunction.center(chain, g).values
    sol = poisson_solve(chain, gc)

    def lookup(v):
        return lambda s: v[np.asarray(s)[..., 0].astype(np.intp)]

    return lookup(gc), lookup(sol.h), lookup(sol.Qh)


def discretized_functions(kernel: Kernel, g: TestFunction, m: int = 1024, **grid):
    """``(g, h, Qh)`` proxies from the Poisson solution of a discretized kernel.

    ``g`` is centered under the discretized invariant law; ``h`` and ``Qh`` are
    linearly interpolated between grid states.
    """
    chain, pts = discretize_kernel(kernel, m, **grid)
    raw = g.raw(pts[:, None])
    gc = CenteredFunction.center(chain, raw)
    sol = poisson_solve(chain, gc)
    center = gc.original_mean

    def interp(v):
        return lambda s: np.interp(np.asarray(s)[..., 0], pts, v)

    return (lambda s: g.raw(s) - center), interp(sol.h), interp(sol.Qh), chain, pts

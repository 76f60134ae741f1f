"""State spaces, metrics, samplable kernels, trajectories and finite chains.

States are dense float vectors of fixed dimension.  A kernel turns a batch of
states of shape ``(..., d)`` and a matching batch of innovations into the next
states; innovations are derived from a fixed number of uniforms per step
(``kernel.n_draws``), which is what makes replay and synchronous coupling exact:
two chains fed the same uniforms are driven by the same noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from .exceptions import ConfigurationError, NonUniqueStationaryError, NumericalError
from .rng import RngStream

METRIC_KINDS = ("euclidean", "discrete", "bounded-euclidean")


@dataclass(frozen=True)
class Metric:
    """Distance on the state space, evaluated along the last axis."""

    kind: str = "euclidean"
    cap: Optional[float] = None

    def __post_init__(self):
        if self.kind not in METRIC_KINDS:
            raise ConfigurationError(f"unknown metric kind {self.kind!r}")
        if self.kind == "bounded-euclidean":
            if self.cap is None or not self.cap > 0:
                raise ConfigurationError("bounded-euclidean metric needs cap c > 0")

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        diff = x - y
        if self.kind == "discrete":
            return np.any(diff != 0, axis=-1).astype(float)
        d = np.sqrt(np.sum(diff * diff, axis=-1))
        if self.kind == "bounded-euclidean":
            d = np.minimum(d, self.cap)
        return d

    def as_dict(self):
        out = {"kind": self.kind}
        if self.cap is not None:
            out["cap"] = self.cap
        return out


def matvec(M, x):
    """``M @ x`` over the last axis of ``x`` with a batch-size independent result.

    BLAS kernels may round differently depending on batch shape; an explicit
    broadcast-and-sum keeps every row bit-identical whether it is stepped alone
    or inside a batch.
    """
    return np.sum(x[..., None, :] * M, axis=-1)


class Kernel:
    """Base class for samplable Markov transitions.

    Subclasses set ``family``, ``dim`` and ``n_draws`` and implement
    :meth:`innovations` (uniforms to noise) and :meth:`apply` (the update rule).
    """

    family = "abstract"
    dim = 1
    n_draws = 1

    def innovations(self, u):
        return u

    def apply(self, x, xi):
        raise NotImplementedError

    def apply_info(self, x, xi):
        """Like :meth:`apply`, also returning an acceptance mask (or ``None``)."""
        return self.apply(x, xi), None

    def validate_state(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1)
        if x.shape[-1] != self.dim:
            raise ConfigurationError(
                f"state dimension {x.shape[-1]} does not match kernel dimension {self.dim}"
            )
        if not np.all(np.isfinite(x)):
            raise NumericalError("states must be finite")
        return x

    def default_state(self):
        return np.zeros(self.dim)

    def state_bounds(self):
        """Interval used for default start lattices in one dimension."""
        return (-5.0, 5.0)

    def params(self) -> dict:
        return {}

    def as_dict(self):
        return {"family": self.family, "dim": self.dim, **self.params()}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params().items())
        return f"{type(self).__name__}({args})"


@dataclass
class Trajectory:
    """States ``X_0, ..., X_n`` of one simulated path."""

    states: np.ndarray
    kernel: Kernel
    rng: Optional[RngStream] = None
    accepted: Optional[int] = None

    def __len__(self):
        return len(self.states)

    @property
    def n_steps(self):
        return len(self.states) - 1

    @property
    def acceptance_rate(self):
        if self.accepted is None or self.n_steps == 0:
            return None
        return self.accepted / self.n_steps


def step(kernel: Kernel, x, rng: RngStream):
    """One transition ``X_{n+1}`` from ``x``, consuming ``kernel.n_draws`` uniforms."""
    x = kernel.validate_state(x)
    u = rng.uniform(kernel.n_draws)
    return kernel.apply(x, kernel.innovations(u))


def simulate(kernel: Kernel, x0, n: int, rng: RngStream, chunk: int = 4096) -> Trajectory:
    """Simulate ``n`` steps from ``x0``; returns a trajectory of length ``n + 1``."""
    if n < 0:
        raise ConfigurationError("n must be non-negative")
    x = kernel.validate_state(x0)
    states = np.empty((n + 1, kernel.dim))
    states[0] = x
    accepted = 0
    has_info = False
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while t < n:
            T = min(chunk, n - t)
            xi = kernel.innovations(rng.uniform((T, kernel.n_draws)))
            for j in range(T):
                x, acc = kernel.apply_info(x, xi[j])
                if acc is not None:
                    has_info = True
                    accepted += int(acc)
                states[t + j + 1] = x
            t += T
            if not np.all(np.isfinite(states[t - T + 1 : t + 1])):
                raise NumericalError("trajectory diverged to non-finite values")
    return Trajectory(states, kernel, rng, accepted if has_info else None)


def run_batch(
    kernel: Kernel,
    x0,
    n_steps: int,
    streams: Sequence[RngStream],
    observe: Optional[Callable[[int, np.ndarray], None]] = None,
    chunk: int = 1024,
):
    """Advance one chain per stream for ``n_steps`` steps, vectorized over streams.

    ``x0`` broadcasts to shape ``(*lead, m, d)`` with ``m = len(streams)``; every
    chain in the same ``m``-slot shares the innovations of ``streams[j]``, which
    is how synchronous couplings are run (put the copies on a leading axis).
    Replicate ``j`` sees exactly the uniforms :func:`simulate` would draw from
    ``streams[j]``, so each batched path equals its serial counterpart.

    ``observe(t, x)`` is called after every step.  Returns the final states and
    the per-chain accepted-move counts (``None`` for families without an
    accept/reject step).
    """
    m = len(streams)
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim < 2:
        x0 = np.broadcast_to(x0.reshape(-1), (m, kernel.dim))
    x = np.array(np.broadcast_to(x0, x0.shape[:-2] + (m, kernel.dim)))
    accepted = None
    t = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while t < n_steps:
            T = min(chunk, n_steps - t)
            u = np.stack([s.uniform((T, kernel.n_draws)) for s in streams], axis=1)
            xi = kernel.innovations(u)
            for j in range(T):
                x, acc = kernel.apply_info(x, xi[j])
                if acc is not None:
                    accepted = acc.astype(np.int64) if accepted is None else accepted + acc
                if observe is not None:
                    observe(t + j + 1, x)
            t += T
            if not np.all(np.isfinite(x)):
                raise NumericalError("chain diverged to non-finite values")
    return x, accepted


@dataclass(frozen=True, eq=False)
class FiniteChain:
    """Row-stochastic matrix with its invariant distribution."""

    P: np.ndarray
    pi: np.ndarray = field(default=None)

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ConfigurationError("transition matrix must be square and non-empty")
        if np.any(P < 0):
            raise ConfigurationError("transition matrix entries must be non-negative")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ConfigurationError("every row of the transition matrix must sum to 1")
        pi = finite_stationary(P) if self.pi is None else np.array(self.pi, dtype=float)
        if pi.shape != (P.shape[0],) or np.any(pi < -1e-15) or abs(pi.sum() - 1) > 1e-10:
            raise ConfigurationError("pi must be a probability vector of length n")
        if np.max(np.abs(pi @ P - pi)) > 1e-10:
            raise ConfigurationError("pi is not invariant for P")
        P.setflags(write=False)
        pi.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "pi", pi)

    @property
    def n_states(self):
        return self.P.shape[0]

    def mean(self, g):
        return float(self.pi @ np.asarray(g, dtype=float))

    def norm(self, g):
        """L2(pi) norm."""
        g = np.asarray(g, dtype=float)
        return float(np.sqrt(self.pi @ (g * g)))


def finite_apply(chain: FiniteChain, g):
    """``Qg = P g``."""
    g = np.asarray(g, dtype=float)
    if g.shape != (chain.n_states,):
        raise ConfigurationError(f"vector length {g.shape} does not match {chain.n_states} states")
    return chain.P @ g


def _closed_classes(P):
    n_comp, labels = connected_components(P > 0, directed=True, connection="strong")
    closed = []
    for c in range(n_comp):
        members = labels == c
        if not np.any(P[np.ix_(members, ~members)] > 0):
            closed.append(np.flatnonzero(members))
    return closed


def _power_stationary(P, tol=1e-14, max_iter=100_000):
    n = P.shape[0]
    # lazy chain has the same invariant law and is aperiodic
    L = 0.5 * (P + np.eye(n))
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = pi @ L
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    return pi


def finite_stationary(P, dense_limit: int = 1000):
    """Unique invariant distribution of a row-stochastic matrix.

    Raises :class:`NonUniqueStationaryError` when more than one closed class
    exists.  Up to ``dense_limit`` states the system ``(P^T - I) pi = 0`` with
    one equation replaced by the normalization is solved by LU.
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    if len(_closed_classes(P)) != 1:
        raise NonUniqueStationaryError()
    if n > dense_limit:
        pi = _power_stationary(P)
    else:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        pi = np.linalg.solve(A, b)
        # one step of iterative refinement
        r = b - A @ pi
        pi = pi + np.linalg.solve(A, r)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(pi @ P - pi)) > 1e-12:
        raise NumericalError("stationary solve residual exceeds 1e-12")
    return pi


class FiniteKernel(Kernel):
    """Finite-state chain sampled by inverse CDF; the state is the float-coded index."""

    family = "finite"
    dim = 1
    n_draws = 1

    def __init__(self, chain):
        if not isinstance(chain, FiniteChain):
            chain = FiniteChain(chain)
        self.chain = chain
        cum = np.cumsum(chain.P, axis=1)
        cum[:, -1] = 1.0
        self._cum = cum

    def validate_state(self, x):
        x = super().validate_state(x)
        idx = x[..., 0]
        if np.any(idx != np.round(idx)) or np.any(idx < 0) or np.any(idx >= self.chain.n_states):
            raise ConfigurationError("finite-chain state must be an integer index in [0, n)")
        return x

    def apply(self, x, xi):
        idx = x[..., 0].astype(np.intp)
        rows = self._cum[idx]
        nxt = np.sum(rows <= xi[..., :1], axis=-1)
        return nxt[..., None].astype(float)

    def state_bounds(self):
        return (0.0, float(self.chain.n_states - 1))

    def params(self):
        return {"n_states": self.chain.n_states}

    def as_dict(self):
        return {"family": self.family, "dim": 1, "P": self.chain.P.tolist()}

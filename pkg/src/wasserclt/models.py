"""The four chain families: nonlinear AR, ULA, EI-MALA and the Bernoulli-shift AR(1).

Each kernel class is also its own parameter record: parameters are validated
once at construction and never mutated afterwards.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.special import expit, log1p, ndtri
from scipy.stats import norm

from .core import Kernel, matvec
from .exceptions import ConfigurationError, DomainError
from .rng import RngStream


def _open_unit(a, name="a"):
    a = float(a)
    if not 0.0 < a < 1.0:
        raise ConfigurationError(f"{name} must lie in (0,1), got {a}")
    return a


def _sym_matrix(M, name, dim=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigurationError(f"{name} must be a square matrix")
    if dim is not None and M.shape[0] != dim:
        raise ConfigurationError(f"{name} must be {dim}x{dim}")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ConfigurationError(f"{name} must be symmetric")
    return 0.5 * (M + M.T)


def _pd_matrix(M, name, floor=1e-10):
    M = _sym_matrix(M, name)
    lam = np.linalg.eigvalsh(M)
    if lam[0] <= floor:
        raise ConfigurationError(f"{name} must be positive definite (min eigenvalue {lam[0]:.3g})")
    return M


# --------------------------------------------------------------------------
# nonlinear autoregressive process


class Nonlinearity:
    """Bounded nonlinearity ``s`` of the nonlinear AR update.

    ``kind`` is one of ``neg-sin`` (``s(x) = -sin x``), ``bounded-table``
    (piecewise-linear interpolation of ``values`` on ``grid``, held constant
    outside) or ``custom-affine-cap`` (``s(x) = clip(slope * x, -cap, cap)``).
    """

    KINDS = ("neg-sin", "bounded-table", "custom-affine-cap")

    def __init__(self, kind="neg-sin", grid=None, values=None, slope=None, cap=None):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown nonlinearity kind {kind!r}")
        self.kind = kind
        if kind == "bounded-table":
            grid = np.asarray(grid, dtype=float)
            values = np.asarray(values, dtype=float)
            if grid.ndim != 1 or grid.shape != values.shape or len(grid) < 2:
                raise ConfigurationError("bounded-table needs matching 1D grid and values (>= 2 points)")
            if np.any(np.diff(grid) <= 0):
                raise ConfigurationError("bounded-table grid must be strictly increasing")
            if not np.all(np.isfinite(values)):
                raise ConfigurationError("bounded-table values must be finite")
            self.grid, self.values = grid, values
            self._slopes = np.diff(values) / np.diff(grid)
        elif kind == "custom-affine-cap":
            if slope is None or cap is None or not float(cap) > 0:
                raise ConfigurationError("custom-affine-cap needs slope and cap > 0")
            self.slope, self.cap = float(slope), float(cap)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "neg-sin":
            return -np.sin(x)
        if self.kind == "bounded-table":
            return np.interp(x, self.grid, self.values)
        return np.clip(self.slope * x, -self.cap, self.cap)

    def derivative(self, x):
        """Derivative where it exists (one-sided from the right at kinks)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "neg-sin":
            return -np.cos(x)
        if self.kind == "bounded-table":
            i = np.searchsorted(self.grid, x, side="right") - 1
            inside = (i >= 0) & (i < len(self._slopes))
            return np.where(inside, self._slopes[np.clip(i, 0, len(self._slopes) - 1)], 0.0)
        inside = np.abs(self.slope * x) < self.cap
        return np.where(inside, self.slope, 0.0)

    @property
    def sup_abs(self):
        if self.kind == "neg-sin":
            return 1.0
        if self.kind == "bounded-table":
            return float(np.max(np.abs(self.values)))
        return self.cap

    def as_dict(self):
        if self.kind == "neg-sin":
            return {"kind": self.kind}
        if self.kind == "bounded-table":
            return {"kind": self.kind, "grid": self.grid.tolist(), "values": self.values.tolist()}
        return {"kind": self.kind, "slope": self.slope, "cap": self.cap}


class Noise:
    """Symmetric mean-zero innovation law, generated from one uniform per draw."""

    KINDS = ("gaussian", "symmetric-uniform", "scaled-bernoulli-pair")

    def __init__(self, kind="gaussian", scale=1.0):
        if kind not in self.KINDS:
            raise ConfigurationError(f"unknown noise kind {kind!r}")
        scale = float(scale)
        if not scale > 0:
            raise ConfigurationError("noise scale must be positive")
        self.kind = kind
        self.scale = scale

    @property
    def variance(self):
        if self.kind == "symmetric-uniform":
            return self.scale**2 / 3.0
        return self.scale**2

    def from_uniform(self, u):
        if self.kind == "gaussian":
            return self.scale * ndtri(u)
        if self.kind == "symmetric-uniform":
            return self.scale * (2.0 * u - 1.0)
        return np.where(u < 0.5, -self.scale, self.scale)

    def cdf(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "gaussian":
            return norm.cdf(z / self.scale)
        if self.kind == "symmetric-uniform":
            return np.clip((z / self.scale + 1.0) / 2.0, 0.0, 1.0)
        return np.where(z < -self.scale, 0.0, np.where(z < self.scale, 0.5, 1.0))

    def as_dict(self):
        key = {"gaussian": "sigma", "symmetric-uniform": "half_width", "scaled-bernoulli-pair": "c"}
        return {"kind": self.kind, key[self.kind]: self.scale}


class NonlinearAR(Kernel):
    """``X_{n+1} = a X_n + (1 - a) s(X_n) + Z_n`` on the real line."""

    family = "nar"
    dim = 1
    n_draws = 1

    def __init__(self, a=0.5, s=None, noise=None):
        self.a = _open_unit(a)
        self.s = s if s is not None else Nonlinearity("neg-sin")
        self.noise = noise if noise is not None else Noise("gaussian", 1.0)

    @property
    def sigma2(self):
        return self.noise.variance

    def mean_map(self, x):
        """Deterministic part ``a x + (1 - a) s(x)``."""
        return self.a * x + (1.0 - self.a) * self.s(x)

    def innovations(self, u):
        return self.noise.from_uniform(u)

    def apply(self, x, xi):
        return self.mean_map(x) + xi

    def params(self):
        return {"a": self.a, "s": self.s.as_dict(), "noise": self.noise.as_dict()}


# --------------------------------------------------------------------------
# unadjusted Langevin algorithm


class QuadraticTarget:
    """``U(x) = x^T A x / 2`` with ``A`` positive definite."""

    kind = "quadratic"

    def __init__(self, A):
        self.A = _pd_matrix(A, "A")
        self.dim = self.A.shape[0]

    def U(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * matvec(self.A, x), axis=-1)

    def grad(self, x):
        return matvec(self.A, np.asarray(x, dtype=float))

    def as_dict(self):
        return {"kind": self.kind, "A": self.A.tolist()}


class LogisticTarget:
    """Bayesian logistic-regression posterior with precision-``G`` Gaussian prior.

    The potential is ``b^T G b / 4 + sum_i [log(1 + exp(x_i^T b)) - y_i x_i^T b]``
    so that its gradient is ``G b / 2 + sum_i (sigmoid(x_i^T b) - y_i) x_i`` and the
    Hessian is bounded by ``G/2 + X^T X / 4``.
    """

    kind = "logistic"

    def __init__(self, X, y, G):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ConfigurationError("design matrix rows must match number of responses")
        if not np.all((y == 0) | (y == 1)):
            raise ConfigurationError("responses must be 0 or 1")
        self.G = _pd_matrix(G, "G")
        if self.G.shape[0] != X.shape[1]:
            raise ConfigurationError("prior precision G must be p x p with p = design columns")
        self.X, self.y = X, y
        self.dim = X.shape[1]

    def U(self, beta):
        beta = np.asarray(beta, dtype=float)
        eta = matvec(self.X, beta)
        # log(1 + e^eta) computed stably
        softplus = np.maximum(eta, 0.0) + log1p(np.exp(-np.abs(eta)))
        quad = 0.25 * np.sum(beta * matvec(self.G, beta), axis=-1)
        return quad + np.sum(softplus - self.y * eta, axis=-1)

    def grad(self, beta):
        beta = np.asarray(beta, dtype=float)
        resid = expit(matvec(self.X, beta)) - self.y
        return 0.5 * matvec(self.G, beta) + matvec(self.X.T, resid)

    def as_dict(self):
        return {"kind": self.kind, "X": self.X.tolist(), "y": self.y.tolist(), "G": self.G.tolist()}


class ULA(Kernel):
    """``X_{n+1} = X_n - h grad U(X_n) + sqrt(2h) Z_{n+1}`` with fixed step ``h``."""

    family = "ula"

    def __init__(self, target, h, allow_zero_step=False):
        h = float(h)
        if not (h > 0 or (allow_zero_step and h == 0)):
            raise ConfigurationError(f"step size h must be positive, got {h}")
        self.target = target
        self.h = h
        self.dim = target.dim
        self.n_draws = target.dim
        self._noise_scale = math.sqrt(2.0 * h)

    def gradient(self, x):
        return self.target.grad(x)

    def innovations(self, u):
        return ndtri(u)

    def apply(self, x, xi):
        return x - self.h * self.target.grad(x) + self._noise_scale * xi

    def params(self):
        return {"target": self.target.as_dict(), "h": self.h}


# --------------------------------------------------------------------------
# exponential-integrator MALA


class ZeroPotential:
    kind = "zero"

    def value(self, x):
        return np.zeros(np.shape(x)[:-1])

    def grad(self, x):
        return np.zeros(np.shape(x))

    def as_dict(self):
        return {"kind": self.kind}


class QuadraticPotential:
    """``x^T C x / 2 + <c, x>``."""

    kind = "quadratic"

    def __init__(self, C=None, linear=None, dim=None):
        if C is None:
            C = np.zeros((dim, dim))
        self.C = _sym_matrix(C, "quadratic coefficient matrix")
        d = self.C.shape[0]
        self.linear = np.zeros(d) if linear is None else np.asarray(linear, dtype=float).reshape(d)

    @property
    def is_convex(self):
        return bool(np.linalg.eigvalsh(self.C)[0] >= -1e-12)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * matvec(self.C, x), axis=-1) + np.sum(x * self.linear, axis=-1)

    def grad(self, x):
        return matvec(self.C, np.asarray(x, dtype=float)) + self.linear

    def as_dict(self):
        return {"kind": self.kind, "C": self.C.tolist(), "linear": self.linear.tolist()}


class PowerPotential:
    """``lam1 * (x^T x + delta)^beta``, the non-Gaussian part of the prior."""

    kind = "power"

    def __init__(self, lam1, delta, beta):
        self.lam1, self.delta, self.beta = float(lam1), float(delta), float(beta)
        if not (self.lam1 > 0 and self.delta > 0):
            raise ConfigurationError("lambda1 and delta must be positive")
        if not 0.5 < self.beta < 1.0:
            raise ConfigurationError("beta must lie in (1/2, 1)")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.lam1 * (np.sum(x * x, axis=-1) + self.delta) ** self.beta

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sum(x * x, axis=-1, keepdims=True) + self.delta
        return 2.0 * self.lam1 * self.beta * x * r ** (self.beta - 1.0)

    def as_dict(self):
        return {"kind": self.kind, "lambda1": self.lam1, "delta": self.delta, "beta": self.beta}


class EIMALA(Kernel):
    """Exponential-integrator MALA targeting ``exp(-x^T H x / 2 - gamma(x) - Gamma(x))``.

    ``gamma`` must be convex; both potentials expose ``value`` and ``grad``.
    Draws per step: ``dim`` Gaussians for the proposal plus one acceptance uniform.
    """

    family = "ei-mala"

    def __init__(self, H, h, gamma=None, Gamma=None):
        h = float(h)
        if not 0.0 < h < 2.0:
            raise ConfigurationError(f"step size h must lie in (0,2), got {h}")
        H = _sym_matrix(H, "H")
        lam, V = np.linalg.eigh(H)
        if lam[0] <= 1e-10:
            raise ConfigurationError("H must be positive definite (min eigenvalue <= 1e-10)")
        self.H = H
        self.h = h
        self.dim = H.shape[0]
        self.n_draws = self.dim + 1
        self.gamma = gamma if gamma is not None else ZeroPotential()
        self.Gamma = Gamma if Gamma is not None else ZeroPotential()
        if isinstance(self.gamma, QuadraticPotential) and not self.gamma.is_convex:
            raise ConfigurationError("gamma must be convex")
        self.H_inv = (V / lam) @ V.T
        self.H_inv_sqrt = (V / np.sqrt(lam)) @ V.T
        self._shrink = 1.0 - h / 2.0
        self._noise_scale = math.sqrt(h - h * h / 4.0)
        self._c = h / (8.0 - 2.0 * h)

    def propose(self, x, z):
        """Proposal ``(1 - h/2) x - (h/2) H^{-1} grad gamma(x) + sqrt(h - h^2/4) H^{-1/2} z``."""
        drift = matvec(self.H_inv, self.gamma.grad(x))
        return self._shrink * x - 0.5 * self.h * drift + self._noise_scale * matvec(self.H_inv_sqrt, z)

    def log_G(self, x, y):
        gx, gy = self.gamma.grad(x), self.gamma.grad(y)
        G = self.gamma.value(y) - self.gamma.value(x) + self.Gamma.value(y) - self.Gamma.value(x)
        G = G - np.sum(0.5 * (y - x) * (gx + gy), axis=-1)
        G = G + self._c * np.sum((y + x) * (gy - gx), axis=-1)
        quad_y = np.sum(gy * matvec(self.H_inv, gy), axis=-1)
        quad_x = np.sum(gx * matvec(self.H_inv, gx), axis=-1)
        return G + self._c * (quad_y - quad_x)

    def innovations(self, u):
        return np.concatenate([ndtri(u[..., : self.dim]), np.log(u[..., self.dim :])], axis=-1)

    def apply_info(self, x, xi):
        z, log_u = xi[..., : self.dim], xi[..., self.dim]
        y = self.propose(x, z)
        accept = log_u < -np.maximum(self.log_G(x, y), 0.0)
        return np.where(accept[..., None], y, x), accept

    def apply(self, x, xi):
        return self.apply_info(x, xi)[0]

    def params(self):
        return {"H": self.H.tolist(), "h": self.h, "gamma": self.gamma.as_dict(), "Gamma": self.Gamma.as_dict()}


def bayes_inverse_eimala(A, b, lam1, lam2, delta, beta, h):
    """EI-MALA for the posterior ``exp(-x^T(A^T A + lam2 I)x/2 - lam1 (x^T x + delta)^beta + <b, A x>)``.

    Split: ``H = A^T A + lam2 I``, ``gamma(x) = -<A^T b, x>`` (convex, linear),
    ``Gamma(x) = lam1 (x^T x + delta)^beta``.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    if not float(lam2) > 0:
        raise ConfigurationError("lambda2 must be positive")
    d = A.shape[1]
    H = A.T @ A + float(lam2) * np.eye(d)
    gamma = QuadraticPotential(np.zeros((d, d)), linear=-(A.T @ b))
    Gamma = PowerPotential(lam1, delta, beta)
    return EIMALA(H, h, gamma=gamma, Gamma=Gamma)


# --------------------------------------------------------------------------
# Bernoulli-shift AR(1)


class BernoulliAR1(Kernel):
    """``X_{n+1} = a X_n + (1 - a) theta_{n+1}`` on ``[0, 1]`` with ``theta ~ Bernoulli(1/2)``."""

    family = "bernoulli-ar1"
    dim = 1
    n_draws = 1

    def __init__(self, a=0.5):
        self.a = _open_unit(a)

    def validate_state(self, x):
        x = super().validate_state(x)
        if np.any(x < 0.0) or np.any(x > 1.0):
            raise DomainError("bernoulli-ar1 state must lie in [0,1]")
        return x

    def innovations(self, u):
        return (u < 0.5).astype(float)

    def apply(self, x, xi):
        return self.a * x + (1.0 - self.a) * xi

    def state_bounds(self):
        return (0.0, 1.0)

    def params(self):
        return {"a": self.a}


# --------------------------------------------------------------------------
# operation-level helpers


def nar_step(p: NonlinearAR, x, rng: RngStream):
    return p.apply(np.asarray(x, dtype=float), p.innovations(rng.uniform()))


def ula_gradient(p: ULA, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != p.dim:
        raise ConfigurationError("dimension mismatch")
    return p.gradient(x)


def ula_step(p: ULA, x, rng: RngStream):
    x = p.validate_state(x)
    return p.apply(x, p.innovations(rng.uniform(p.n_draws)))


def eimala_propose(p: EIMALA, x, rng: RngStream):
    x = p.validate_state(x)
    return p.propose(x, rng.normal(p.dim))


def eimala_log_G(p: EIMALA, x, y):
    return p.log_G(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def eimala_step(p: EIMALA, x, rng: RngStream):
    x = p.validate_state(x)
    return p.apply(x, p.innovations(rng.uniform(p.n_draws)))


def bernoulli_ar1_step(p: BernoulliAR1, x, rng: RngStream):
    x = p.validate_state(x)
    return p.apply(x, p.innovations(rng.uniform(1)))

"""Numerical checks of the convergence hypotheses.

Suprema over the plane are replaced by maxima over finite grids.  For the
non-contraction condition H a grid witness is a certificate (the grid maximum
under-approximates the supremum); for the drift condition C1 and the moment
checks the output is evidence only, and reports say so.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .core import Kernel, Metric, run_batch
from .exceptions import ConfigurationError, NumericalError
from .models import ULA, LogisticTarget, NonlinearAR, Nonlinearity, QuadraticTarget
from .rng import RngStream

GRID_CAVEAT = "grid evidence only"
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def default_line_grid(half_width=10.0, n=401):
    return np.linspace(-half_width, half_width, n)


def default_tail_points(max_abs=1e3, n=8):
    t = np.logspace(math.log10(20.0), math.log10(max_abs), n)
    return np.concatenate([-t[::-1], t])


def _golden_max(f, lo, hi, iters=300):
    """Maximize a unimodal scalar function on ``[lo, hi]`` by golden section."""
    a, b = float(lo), float(hi)
    c, d = b - _INVPHI * (b - a), a + _INVPHI * (b - a)
    fc, fd = float(f(c)), float(f(d))
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    for _ in range(iters):
        if b - a <= 1e-15 * max(1.0, abs(a)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = float(f(c))
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = float(f(d))
            if fd > best_f:
                best_x, best_f = d, fd
    return best_x, best_f


# --------------------------------------------------------------------------
# condition H


@dataclass
class HReport:
    """Outcome of the non-contraction check.

    ``holds`` is ``True`` when a certified witness was found and ``None``
    (inconclusive) otherwise.  ``witness`` records the condition index (1 or 3),
    the route (``"quotient"`` pair or ``"derivative"`` point) and its value.
    """

    holds: Optional[bool]
    witness: Optional[Dict]
    sup_quotient: float
    inf_quotient: float
    threshold: float
    grid_consistent_universal: Dict[str, bool] = field(default_factory=dict)

    @property
    def inconclusive(self):
        return self.holds is None

    def as_dict(self):
        return {
            "holds": self.holds,
            "inconclusive": self.inconclusive,
            "witness": self.witness,
            "sup_quotient": self.sup_quotient,
            "inf_quotient": self.inf_quotient,
            "threshold": self.threshold,
            "grid_consistent_universal": self.grid_consistent_universal,
        }


def difference_quotient(s: Callable, x: float, y: float) -> float:
    return float((s(x) - s(y)) / (x - y))


def check_H(s: Nonlinearity, a: float, grid=None) -> HReport:
    """Look for a witness that ``s`` violates contraction in the sense of H.

    Certifiable branches: some quotient ``(s(x) - s(y))/(x - y) >= 1``, or some
    quotient ``<= -(1 + a)/(1 - a)``; either may also be witnessed at a point
    where ``s'`` reaches the bound, since a derivative is a limit of quotients.
    The two universal branches can only be reported as grid-consistent.
    """
    if not 0 < a < 1:
        raise ConfigurationError("a must lie in (0,1)")
    pts = np.unique(np.asarray(default_line_grid() if grid is None else grid, dtype=float))
    if pts.size < 2:
        raise ConfigurationError("grid needs at least two distinct points")
    c = (1.0 + a) / (1.0 - a)
    v = s(pts)
    i, j = np.triu_indices(pts.size, k=1)  # pts[j] > pts[i]
    q = (v[j] - v[i]) / (pts[j] - pts[i])
    k_max, k_min = int(np.argmax(q)), int(np.argmin(q))
    sup_q, inf_q = float(q[k_max]), float(q[k_min])
    universal = {"all_quotients_le_minus_c": bool(sup_q <= -c), "all_quotients_ge_one": bool(inf_q >= 1.0)}
    if sup_q >= 1.0:
        w = {"condition": 1, "route": "quotient", "x": float(pts[j[k_max]]), "y": float(pts[i[k_max]]), "value": sup_q}
        return HReport(True, w, sup_q, inf_q, c, universal)
    if inf_q <= -c:
        w = {"condition": 3, "route": "quotient", "x": float(pts[i[k_min]]), "y": float(pts[j[k_min]]), "value": inf_q}
        return HReport(True, w, sup_q, inf_q, c, universal)

    d = s.derivative(pts)
    for cond, sign, bound in ((1, 1.0, 1.0), (3, -1.0, c)):
        k = int(np.argmax(sign * d))
        lo, hi = pts[max(k - 1, 0)], pts[min(k + 1, pts.size - 1)]
        x0, val = _golden_max(lambda t: sign * s.derivative(t), lo, hi)
        if sign * d[k] > val:
            x0, val = float(pts[k]), float(sign * d[k])
        if val >= bound:
            w = {"condition": cond, "route": "derivative", "x": float(x0), "value": float(sign * val)}
            return HReport(True, w, sup_q, inf_q, c, universal)
    return HReport(None, None, sup_q, inf_q, c, universal)


def verify_H_witness(s: Nonlinearity, a: float, witness: Dict) -> bool:
    """Independently re-evaluate a witness returned by :func:`check_H`."""
    c = (1.0 + a) / (1.0 - a)
    if witness["route"] == "quotient":
        q = difference_quotient(s, witness["x"], witness["y"])
        if witness["condition"] == 1:
            return witness["x"] > witness["y"] and q >= 1.0
        return witness["x"] < witness["y"] and -q >= c
    dv = float(s.derivative(witness["x"]))
    return dv >= 1.0 if witness["condition"] == 1 else dv <= -c


# --------------------------------------------------------------------------
# drift/contraction condition C1 and companions


def nar_zeta(kernel: NonlinearAR, x, y):
    """``|a(x - y) + (1 - a)(s(x) - s(y))| / |x - y|``; on ``x == y`` the limit ``|a + (1-a) s'(x)|``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a = kernel.a
    diff = x - y
    off = diff != 0
    safe = np.where(off, diff, 1.0)
    z = np.abs(a * diff + (1.0 - a) * (kernel.s(x) - kernel.s(y))) / np.abs(safe)
    return np.where(off, z, np.abs(a + (1.0 - a) * kernel.s.derivative(x)))


def nar_kappa(kernel: NonlinearAR, x, y, sigma2=None):
    sigma2 = kernel.sigma2 if sigma2 is None else sigma2
    mx, my = kernel.mean_map(np.asarray(x, dtype=float)), kernel.mean_map(np.asarray(y, dtype=float))
    return (mx * mx + my * my + 2.0 * sigma2 + 1.0) / (np.asarray(x) ** 2 + np.asarray(y) ** 2 + 1.0)


@dataclass
class C1Report:
    holds: bool
    best_r: Optional[float]
    rho_r: Optional[float]
    sup_by_r: Dict[float, float]
    sup_zeta: float
    argmax_pair: Optional[tuple]
    caveat: str = GRID_CAVEAT

    def as_dict(self):
        return {
            "holds": self.holds,
            "best_r": self.best_r,
            "rho_r": self.rho_r,
            "sup_zeta": self.sup_zeta,
            "sup_by_r": {f"{r:.2f}": v for r, v in self.sup_by_r.items()},
            "argmax_pair": self.argmax_pair,
            "caveat": self.caveat,
        }


def default_r_grid():
    return np.round(np.arange(1, 20) * 0.05, 10)


def _c1_points(grid, tail):
    grid = default_line_grid() if grid is None else np.asarray(grid, dtype=float)
    tail = default_tail_points() if tail is None else np.asarray(tail, dtype=float)
    return np.unique(np.concatenate([grid, tail]))


def check_C1(kernel: NonlinearAR, sigma2=None, r_grid=None, grid=None, tail=None) -> C1Report:
    """Grid supremum of ``zeta^r kappa^(1-r)`` for each ``r``; keeps the smallest.

    Pairs are all ``(x, y)`` with ``x, y`` from the line grid plus large-|x|
    tail points; diagonal pairs use the derivative limit of ``zeta``.
    """
    pts = _c1_points(grid, tail)
    r_grid = default_r_grid() if r_grid is None else np.asarray(r_grid, dtype=float)
    if np.any((r_grid <= 0) | (r_grid >= 1)):
        raise ConfigurationError("r values must lie in (0,1)")
    i, j = np.triu_indices(pts.size, k=0)
    x, y = pts[i], pts[j]
    zeta = nar_zeta(kernel, x, y)
    kappa = nar_kappa(kernel, x, y, sigma2)
    with np.errstate(divide="ignore"):
        lz, lk = np.log(zeta), np.log(kappa)
    sups = {}
    best = (math.inf, None, None)
    for r in r_grid:
        vals = np.exp(r * lz + (1.0 - r) * lk)
        k = int(np.argmax(vals))
        sups[float(r)] = float(vals[k])
        if vals[k] < best[0]:
            best = (float(vals[k]), float(r), (float(x[k]), float(y[k])))
    holds = best[0] < 1.0
    return C1Report(
        holds=bool(holds),
        best_r=best[1] if holds else None,
        rho_r=best[0] if holds else None,
        sup_by_r=sups,
        sup_zeta=float(np.max(zeta)),
        argmax_pair=best[2],
    )


def check_C2(kernel: NonlinearAR, grid=None, tail=None) -> Dict:
    pts = _c1_points(grid, tail)
    i, j = np.triu_indices(pts.size, k=1)
    sup_z = float(np.max(nar_zeta(kernel, pts[i], pts[j])))
    return {"holds": bool(np.isfinite(sup_z)), "sup_zeta": sup_z, "caveat": GRID_CAVEAT}


def check_C4(kernel: NonlinearAR, grid=None, tail=None) -> Dict:
    pts = _c1_points(grid, tail)
    sup_s = float(np.max(np.abs(kernel.s(pts))))
    # every supported nonlinearity kind is bounded by construction
    return {"holds": True, "sup_abs_s_grid": sup_s, "bound": kernel.s.sup_abs}


def check_nar_conditions(kernel: NonlinearAR, grid=None, tail=None, r_grid=None) -> Dict:
    h = check_H(kernel.s, kernel.a, grid)
    c1 = check_C1(kernel, r_grid=r_grid, grid=grid, tail=tail)
    c2 = check_C2(kernel, grid, tail)
    c4 = check_C4(kernel, grid, tail)
    return {
        "H": h.holds,
        "C1": c1.holds,
        "C2": c2["holds"],
        "C4": c4["holds"],
        "details": {
            "H": h.as_dict(),
            "C1": c1.as_dict(),
            "C2": c2,
            "C3": {"holds": True, "note": f"{kernel.noise.kind} noise has all moments by construction"},
            "C4": c4,
        },
    }


# --------------------------------------------------------------------------
# ULA constants


def extreme_eigenvalues(S, dense_limit: int = 64, tol: float = 1e-10, max_iter: int = 10_000):
    """``(lambda_min, lambda_max)`` of a symmetric matrix.

    Dense symmetric solve up to ``dense_limit``; above it, power iteration for
    the top eigenvalue and shifted power iteration on ``lambda_max I - S`` for
    the bottom one.
    """
    S = np.asarray(S, dtype=float)
    if S.shape[0] <= dense_limit:
        lam = np.linalg.eigvalsh(S)
        return float(lam[0]), float(lam[-1])

    def power(M):
        v = np.ones(M.shape[0]) / math.sqrt(M.shape[0])
        lam = 0.0
        for _ in range(max_iter):
            w = M @ v
            new = float(v @ w)
            nrm = np.linalg.norm(w)
            if nrm == 0:
                return 0.0
            v = w / nrm
            if abs(new - lam) <= tol * max(1.0, abs(new)):
                return new
            lam = new
        return lam

    shift = float(np.max(np.sum(np.abs(S), axis=1)))  # Gershgorin bound on |lambda|
    lam_max = power(S + shift * np.eye(S.shape[0])) - shift
    lam_min = lam_max - power(lam_max * np.eye(S.shape[0]) - S)
    return lam_min, lam_max


@dataclass(frozen=True)
class UlaContractionCert:
    """Lipschitz (``L``) and strong-convexity (``M``) constants of ``grad U``."""

    L: float
    M: float

    @property
    def h_max(self):
        return 2.0 * self.M / self.L**2

    def gamma(self, h):
        """``(1 + h^2 L^2 - 2 h M)^(1/2)``, evaluated as a hypotenuse for accuracy."""
        h = float(h)
        return math.hypot(1.0 - h * self.M, h * math.sqrt(max(self.L**2 - self.M**2, 0.0)))

    def table(self, h_grid):
        return [{"h": float(h), "gamma": self.gamma(h), "contractive": bool(0 < h < self.h_max)} for h in h_grid]

    def as_dict(self, h_grid=()):
        return {"L": self.L, "M": self.M, "h_max": self.h_max, "gamma_table": self.table(h_grid)}


def ula_constants(p) -> UlaContractionCert:
    """Constants for a :class:`~wasserclt.models.ULA` kernel or its target."""
    target = p.target if isinstance(p, ULA) else p
    if isinstance(target, QuadraticTarget):
        lo, hi = extreme_eigenvalues(target.A)
        L, M = hi, lo
    elif isinstance(target, LogisticTarget):
        g_lo, g_hi = extreme_eigenvalues(target.G)
        if g_lo <= 0:
            raise ConfigurationError("prior precision G must be positive definite")
        _, xtx_hi = extreme_eigenvalues(target.X.T @ target.X)
        L = g_hi / 2.0 + xtx_hi / 4.0
        M = g_lo / 2.0
    else:
        raise ConfigurationError("ula_constants needs a quadratic or logistic target")
    if M > L:
        raise NumericalError("strong convexity constant exceeds Lipschitz constant")
    return UlaContractionCert(float(L), float(M))


# --------------------------------------------------------------------------
# moment checks


class LambdaSpec:
    """State-dependent prefactor of a Wasserstein bound.

    Use :meth:`bounded_one`, :meth:`nar_drift` or :meth:`gc_distance`.
    """

    def __init__(self, kind: str, fn: Callable, info: Optional[Dict] = None):
        self.kind = kind
        self._fn = fn
        self.info = info or {}

    def __call__(self, x):
        return self._fn(np.asarray(x, dtype=float))

    @classmethod
    def bounded_one(cls, value=1.0):
        if value < 0:
            raise ConfigurationError("Lambda must be non-negative")
        return cls("bounded-one", lambda x: np.full(np.shape(x)[:-1], float(value)), {"value": value})

    @classmethod
    def nar_drift(cls, kernel: NonlinearAR, rho_r: float):
        """``((a x + (1-a) s(x))^2 + sigma^2 + x^2 + 1) / (1 - rho_r)`` with ``omega(x) = x^2``."""
        if not 0 <= rho_r < 1:
            raise ConfigurationError("rho_r must lie in [0,1)")

        def fn(x):
            x = x[..., 0]
            m = kernel.mean_map(x)
            return (m * m + kernel.sigma2 + x * x + 1.0) / (1.0 - rho_r)

        return cls("nar-drift", fn, {"rho_r": rho_r})

    @classmethod
    def gc_distance(cls, reference_sample, metric: Metric = Metric()):
        """``W(delta_x, pi) = E_pi psi(x, X)`` estimated from a sample of ``pi``."""
        ref = np.asarray(reference_sample, dtype=float)
        if ref.ndim == 1:
            ref = ref[:, None]

        def fn(x):
            return np.mean(metric(x[..., None, :], ref), axis=-1)

        return cls("gc-distance", fn, {"reference_size": len(ref)})


@dataclass
class MomentReport:
    estimate: float
    mc_se: float
    prefix_estimates: List[float]
    verdict: str
    relative_change: float
    sample_size: int

    def as_dict(self):
        return {
            "estimate": self.estimate,
            "mc_se": self.mc_se,
            "prefix_estimates": self.prefix_estimates,
            "relative_change": self.relative_change,
            "verdict": self.verdict,
            "sample_size": self.sample_size,
        }


def _moment_of(fn, kernel: Kernel, x0, sample_size: int, rng: RngStream, burn_in: int, chains: int):
    if sample_size < chains * 8:
        raise ConfigurationError("sample_size too small for the number of chains")
    per_chain = sample_size // chains
    streams = [rng.substream(c) for c in range(chains)]
    start = kernel.validate_state(x0 if x0 is not None else kernel.default_state())
    vals = np.empty((per_chain, chains))
    try:
        x, _ = run_batch(kernel, start, burn_in, streams)

        def observe(t, s):
            vals[t - 1] = fn(s) ** 2

        run_batch(kernel, x, per_chain, streams, observe=observe)
    except NumericalError:
        return MomentReport(math.inf, math.inf, [], "unstable", math.inf, 0)
    if not np.all(np.isfinite(vals)):
        return MomentReport(math.inf, math.inf, [], "unstable", math.inf, 0)
    prefixes = [per_chain // 8, per_chain // 4, per_chain // 2, per_chain]
    est = [float(vals[:p].mean()) for p in prefixes]
    chain_means = vals.mean(axis=0)
    se = float(chain_means.std(ddof=1) / math.sqrt(chains)) if chains > 1 else math.nan
    full, half = est[-1], est[-2]
    rel = abs(full - half) / abs(full) if full != 0 else (0.0 if half == 0 else math.inf)
    verdict = "evidence-finite" if rel < 0.05 else "unstable"
    return MomentReport(full, se, est, verdict, float(rel), per_chain * chains)


def check_A2(lam: LambdaSpec, kernel: Kernel, sample_size: int, rng: RngStream, x0=None,
             burn_in: int = 1000, chains: int = 16) -> MomentReport:
    """Ergodic-average estimate of ``E_pi Lambda(X)^2`` with a prefix-stability verdict."""
    return _moment_of(lam, kernel, x0, sample_size, rng, burn_in, chains)


def check_P2(kernel: Kernel, metric: Metric, x0, sample_size: int, rng: RngStream,
             burn_in: int = 1000, chains: int = 16) -> MomentReport:
    """Estimate ``E_pi psi(x0, X)^2``."""
    ref = kernel.validate_state(x0)
    return _moment_of(lambda s: metric(ref, s), kernel, x0, sample_size, rng, burn_in, chains)

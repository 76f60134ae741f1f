"""Experiment configuration: JSON schema checks and object construction."""
from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import numpy as np

from .clt import TestFunction
from .core import FiniteChain, FiniteKernel, Metric
from .exceptions import ConfigurationError
from .models import (
    EIMALA,
    ULA,
    BernoulliAR1,
    LogisticTarget,
    NonlinearAR,
    Noise,
    Nonlinearity,
    PowerPotential,
    QuadraticPotential,
    QuadraticTarget,
    ZeroPotential,
    bayes_inverse_eimala,
)

SCHEMA_VERSION = 1
COMMANDS = ("simulate", "contraction", "check", "clt", "poisson")

TOP_KEYS = {"schema", "command", "seed", "chain", "metric", "test_function", "x0", "n", "R",
            "burn_in", "options", "output", "threads"}
# keys not affecting numeric results
UNHASHED = ("output", "threads")

OPTION_KEYS = {
    "simulate": set(),
    "contraction": {"pairs", "steps", "replicates"},
    "check": {"h_grid", "r_grid", "grid", "tail"},
    "clt": {"level", "sigma2_reference", "ks_against", "batch_means_chains", "batch_means_length",
            "center_chains", "center_steps", "block_size"},
    "poisson": {"matrix_file", "g_file", "series_terms"},
}

CHAIN_KEYS = {
    "bernoulli-ar1": {"a"},
    "nar": {"a", "s", "noise"},
    "ula": {"target", "h"},
    "ei-mala": {"H", "h", "gamma", "Gamma"},
    "bayes-inverse-ei-mala": {"A", "b", "lam1", "lam2", "delta", "beta", "h"},
    "finite": {"P", "matrix_file"},
}


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigurationError(f"{where} must be a JSON object")
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigurationError(f"unknown keys in {where}: {', '.join(extra)}")


def load_config(path) -> dict:
    """Read a config file; a manifest is accepted and its embedded config returned."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON in {path}: {exc}") from None
    if isinstance(doc, dict) and "config_hash" in doc and "config" in doc:
        doc = doc["config"]
    return doc


def validate_config(cfg: dict, command: str) -> dict:
    cfg = copy.deepcopy(cfg)
    _check_keys(cfg, TOP_KEYS, "config")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigurationError(f"config must declare \"schema\": {SCHEMA_VERSION}")
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    if cfg.setdefault("command", command) != command:
        raise ConfigurationError(f"config is for {cfg['command']!r}, not {command!r}")
    seed = cfg.setdefault("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigurationError("seed must be an integer in [0, 2^64)")
    opts = cfg.setdefault("options", {})
    _check_keys(opts, OPTION_KEYS[command], "options")
    if command != "poisson" and "chain" not in cfg:
        raise ConfigurationError("config needs a \"chain\" section")
    for key in ("n", "R", "burn_in"):
        if key in cfg and (not isinstance(cfg[key], int) or isinstance(cfg[key], bool) or cfg[key] < 0):
            raise ConfigurationError(f"{key} must be a non-negative integer")
    threads = cfg.get("threads", 1)
    if not isinstance(threads, int) or threads < 1:
        raise ConfigurationError("threads must be a positive integer")
    return cfg


def config_hash(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in UNHASHED}
    canon = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


# --------------------------------------------------------------------------
# object construction


def read_matrix_csv(path) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", dtype=float, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read matrix from {path}: {exc}") from None
    return M


def read_vector_csv(path) -> np.ndarray:
    try:
        return np.loadtxt(path, delimiter=",", dtype=float, ndmin=1).ravel()
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read vector from {path}: {exc}") from None


def _nonlinearity(spec):
    spec = spec or {"kind": "neg-sin"}
    _check_keys(spec, {"kind", "grid", "values", "slope", "cap"}, "chain.s")
    return Nonlinearity(**spec)


def _noise(spec):
    spec = spec or {"kind": "gaussian", "sigma": 1.0}
    _check_keys(spec, {"kind", "sigma", "half_width", "c"}, "chain.noise")
    kind = spec.get("kind", "gaussian")
    key = {"gaussian": "sigma", "symmetric-uniform": "half_width", "scaled-bernoulli-pair": "c"}.get(kind)
    if key is None:
        raise ConfigurationError(f"unknown noise kind {kind!r}")
    return Noise(kind, spec.get(key, 1.0))


def _potential(spec, dim, where):
    if spec is None or spec.get("kind", "zero") == "zero":
        return ZeroPotential()
    kind = spec["kind"]
    if kind == "quadratic":
        _check_keys(spec, {"kind", "C", "linear"}, where)
        return QuadraticPotential(spec.get("C"), spec.get("linear"), dim=dim)
    if kind == "power":
        _check_keys(spec, {"kind", "lam1", "delta", "beta"}, where)
        return PowerPotential(spec["lam1"], spec["delta"], spec["beta"])
    raise ConfigurationError(f"unknown potential kind {kind!r} in {where}")


def _target(spec):
    if not isinstance(spec, dict):
        raise ConfigurationError("chain.target must be an object")
    kind = spec.get("kind")
    if kind == "quadratic":
        _check_keys(spec, {"kind", "A"}, "chain.target")
        return QuadraticTarget(spec["A"])
    if kind == "logistic":
        _check_keys(spec, {"kind", "X", "y", "G"}, "chain.target")
        return LogisticTarget(spec["X"], spec["y"], spec["G"])
    raise ConfigurationError(f"unknown target kind {kind!r}")


def _require(spec, key, where):
    if key not in spec:
        raise ConfigurationError(f"{where} needs {key!r}")
    return spec[key]


def build_kernel(spec):
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigurationError("chain needs a \"family\"")
    family = spec["family"]
    if family not in CHAIN_KEYS:
        raise ConfigurationError(f"unknown chain family {family!r}")
    _check_keys(spec, CHAIN_KEYS[family] | {"family"}, "chain")
    if family == "bernoulli-ar1":
        return BernoulliAR1(_require(spec, "a", "chain"))
    if family == "nar":
        return NonlinearAR(spec.get("a", 0.5), _nonlinearity(spec.get("s")), _noise(spec.get("noise")))
    if family == "ula":
        return ULA(_target(_require(spec, "target", "chain")), _require(spec, "h", "chain"))
    if family == "ei-mala":
        H = np.atleast_2d(np.asarray(_require(spec, "H", "chain"), dtype=float))
        d = H.shape[0]
        return EIMALA(H, _require(spec, "h", "chain"), _potential(spec.get("gamma"), d, "chain.gamma"),
                      _potential(spec.get("Gamma"), d, "chain.Gamma"))
    if family == "bayes-inverse-ei-mala":
        return bayes_inverse_eimala(*(_require(spec, k, "chain") for k in ("A", "b", "lam1", "lam2", "delta", "beta", "h")))
    if "P" in spec:
        P = np.asarray(spec["P"], dtype=float)
    else:
        P = read_matrix_csv(_require(spec, "matrix_file", "chain"))
    return FiniteKernel(FiniteChain(P))


def build_metric(spec):
    spec = spec or {}
    _check_keys(spec, {"kind", "cap"}, "metric")
    return Metric(spec.get("kind", "euclidean"), spec.get("cap"))


def build_test_function(spec):
    spec = spec or {"kind": "coordinate"}
    _check_keys(spec, {"kind", "index", "center", "grid", "values", "lipschitz", "threshold", "width"},
                "test_function")
    return TestFunction(**spec)

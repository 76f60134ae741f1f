"""Command-line front end.

Exit codes: 0 success, 2 configuration or validation error, 3 refused
statistical verdict, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .clt import TestFunction, run_clt_experiment
from .conditions import check_nar_conditions, ula_constants
from .config import (
    COMMANDS,
    SCHEMA_VERSION,
    build_kernel,
    build_metric,
    build_test_function,
    config_hash,
    load_config,
    read_matrix_csv,
    read_vector_csv,
    validate_config,
)
from .core import FiniteChain, simulate
from .exceptions import ConfigurationError, NumericalError, VerdictRefused
from .martingale import CenteredFunction, asymptotic_variance, poisson_solve
from .models import ULA, NonlinearAR
from .rng import RngStream
from .wasserstein import default_pairs, estimate_contraction

EXIT_OK, EXIT_CONFIG, EXIT_VERDICT, EXIT_NUMERICAL = 0, 2, 3, 4


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    return obj


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(v if isinstance(v, str) else "%.17g" % v for v in row))
    return "\n".join(lines) + "\n"


class Run:
    """Output directory bookkeeping for one command invocation."""

    def __init__(self, cfg, out_dir):
        self.cfg = cfg
        self.hash = config_hash(cfg)
        self.out = Path(out_dir)
        self.outputs = []
        self.seeds = {"root": cfg["seed"]}
        self.notes = {}
        self.started = time.perf_counter()
        self.out.mkdir(parents=True, exist_ok=True)

    def write(self, name, text):
        _atomic_write(self.out / name, text)
        self.outputs.append(name)

    def report(self, name, payload):
        self.write(name, _dump_json({"config_hash": self.hash, "seed": self.cfg["seed"], **payload}))

    def finish(self):
        manifest = {
            "schema": SCHEMA_VERSION,
            "command": self.cfg["command"],
            "config": self.cfg,
            "config_hash": self.hash,
            "version": __version__,
            "wall_clock_seconds": time.perf_counter() - self.started,
            "seeds": self.seeds,
            "outputs": self.outputs,
            "notes": self.notes,
        }
        _atomic_write(self.out / "manifest.json", _dump_json(manifest))


def _x0(cfg, kernel):
    return kernel.validate_state(cfg["x0"]) if "x0" in cfg else kernel.default_state()


def cmd_simulate(cfg, run: Run):
    kernel = build_kernel(cfg["chain"])
    rng = RngStream(cfg["seed"])
    run.seeds["trajectory"] = rng.as_dict()
    traj = simulate(kernel, _x0(cfg, kernel), cfg.get("n", 1000), rng)
    header = ["step"] + [f"coord{i}" for i in range(kernel.dim)]
    rows = ([str(t)] + list(row) for t, row in enumerate(traj.states))
    run.write("trajectory.csv", _csv(header, rows))


def cmd_contraction(cfg, run: Run):
    kernel = build_kernel(cfg["chain"])
    opts = cfg["options"]
    rng = RngStream(cfg["seed"])
    run.seeds["replicates"] = rng.as_dict()
    if opts.get("pairs") is None:
        pairs = default_pairs(kernel)
        run.notes["pairs"] = "default lattice"
    else:
        pairs = [(np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))) for x, y in opts["pairs"]]
        run.notes["pairs"] = "config"
    est = estimate_contraction(kernel, pairs, n=opts.get("steps", 5), rng=rng,
                               replicates=opts.get("replicates", 100), metric=build_metric(cfg.get("metric")))
    run.report("contraction.json", {"chain": kernel.as_dict(), "pairs_source": run.notes["pairs"], **est.as_dict()})


def cmd_check(cfg, run: Run):
    kernel = build_kernel(cfg["chain"])
    opts = cfg["options"]
    if isinstance(kernel, NonlinearAR):
        res = check_nar_conditions(kernel, opts.get("grid"), opts.get("tail"), opts.get("r_grid"))
    elif isinstance(kernel, ULA):
        cert = ula_constants(kernel)
        h_grid = opts.get("h_grid") or [f * cert.h_max for f in (0.25, 0.5, 0.75, 1.0)]
        res = {**cert.as_dict(h_grid), "step": kernel.h, "gamma_at_step": cert.gamma(kernel.h)}
    else:
        raise ConfigurationError(f"no condition checks for chain family {kernel.family!r}")
    run.report("conditions.json", {"chain": kernel.as_dict(), **res})


def cmd_clt(cfg, run: Run):
    kernel = build_kernel(cfg["chain"])
    g = build_test_function(cfg.get("test_function"))
    opts = dict(cfg["options"])
    rng = RngStream(cfg["seed"])
    run.seeds.update(replicates=rng.substream(0).as_dict(), center=rng.substream(1).as_dict(),
                     batch_means=rng.substream(2).as_dict())
    report = run_clt_experiment(kernel, g, _x0(cfg, kernel), cfg.get("n", 10_000), cfg.get("R", 1000),
                                cfg.get("burn_in", 1000), rng, threads=cfg.get("threads", 1), **opts)
    payload = report.as_dict()
    payload["test_function"] = g.as_dict()
    run.report("clt.json", payload)
    rows = ((str(i), v) for i, v in enumerate(report.replicates))
    run.write("replicates.csv", _csv(["replicate", "value"], rows))


def cmd_poisson(cfg, run: Run):
    opts = cfg["options"]
    if "matrix_file" in opts:
        P = read_matrix_csv(opts["matrix_file"])
    elif cfg.get("chain", {}).get("family") == "finite":
        P = build_kernel(cfg["chain"]).chain.P
    else:
        raise ConfigurationError("poisson needs options.matrix_file or a finite chain")
    chain = FiniteChain(P)
    if "g_file" in opts:
        g = read_vector_csv(opts["g_file"])
    else:
        g = np.arange(chain.n_states, dtype=float)
        run.notes["g"] = "state index"
    gc = CenteredFunction.center(chain, g)
    sol = poisson_solve(chain, gc, series_terms=opts.get("series_terms", 1000))
    payload = {
        "n_states": chain.n_states,
        "pi": chain.pi,
        "g_original_mean": gc.original_mean,
        "g_centered": gc.values,
        "sigma2": asymptotic_variance(chain, gc, sol),
        **sol.as_dict(),
    }
    run.report("poisson.json", payload)


HANDLERS = {"simulate": cmd_simulate, "contraction": cmd_contraction, "check": cmd_check,
            "clt": cmd_clt, "poisson": cmd_poisson}


def build_parser():
    parser = argparse.ArgumentParser(prog="wasserclt", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or manifest to rerun")
    common.add_argument("--seed", type=int, help="override the config seed (u64)")
    common.add_argument("--out", help="output directory (default: config output or .)")
    common.add_argument("--threads", type=int, help="worker threads for replicates")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        raw = load_config(args.config) if args.config else {"schema": SCHEMA_VERSION}
        if not isinstance(raw, dict):
            raise ConfigurationError("config must be a JSON object")
        raw = dict(raw)
        if args.seed is not None:
            raw["seed"] = args.seed
        if args.threads is not None:
            raw["threads"] = args.threads
        if args.out is not None:
            raw["output"] = args.out
        cfg = validate_config(raw, args.command)
        run = Run(cfg, cfg.get("output", "."))
        HANDLERS[args.command](cfg, run)
        run.finish()
    except VerdictRefused as exc:
        print(f"wasserclt: verdict refused: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except NumericalError as exc:
        print(f"wasserclt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ConfigurationError as exc:
        print(f"wasserclt: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TypeError, KeyError, ValueError) as exc:
        print(f"wasserclt: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK

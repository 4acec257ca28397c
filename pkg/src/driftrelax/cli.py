"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 configuration error, 3 runtime or
numerical error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from driftrelax.bench import (
    BenchmarkConfig,
    ConfigError,
    load_config,
    observations_for,
    run_benchmark,
    run_single,
    write_benchmark,
    write_csv,
)
from driftrelax.filters import FilterError
from driftrelax.sampler import ConditionalProblem, SamplerError, make_ladder, sample_conditional_paths
from driftrelax.sde import PropagationError
from driftrelax.streams import SAMPLE_PATH, SeedStreams

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="driftrelax", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", type=Path, help="flat key = value config file (defaults if omitted)")
        p.add_argument("--seed", type=int, help="master seed, overrides the config")

    bench = sub.add_parser("benchmark", help="run both filters on the double-well experiment")
    common(bench)
    bench.add_argument("--out-dir", type=Path, required=True)
    bench.add_argument("--simulate-truth", action="store_true",
                       help="observe a simulated hidden path instead of the alternating sequence")

    sp = sub.add_parser("sample-path", help="standalone conditional path sampling")
    common(sp)
    sp.add_argument("--x0", type=float, required=True)
    sp.add_argument("--z", type=float, required=True)
    sp.add_argument("--runs", type=int, default=1)
    sp.add_argument("--out", type=Path, help="endpoint CSV (default: stdout summary only)")

    flt = sub.add_parser("filter", help="run a single filter")
    common(flt)
    flt.add_argument("--variant", choices=("generic", "mcmc"), required=True)
    flt.add_argument("--out", type=Path, required=True)
    flt.add_argument("--simulate-truth", action="store_true")
    return parser


def _config(args) -> tuple[BenchmarkConfig, bytes | None]:
    if args.config is None:
        cfg, raw = BenchmarkConfig(), None
    else:
        cfg = load_config(args.config)
        raw = args.config.read_bytes()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "simulate_truth", False):
        cfg = replace(cfg, simulate_truth=True)
    return cfg, raw


def _benchmark(args) -> int:
    cfg, raw = _config(args)
    result = run_benchmark(cfg)
    paths = write_benchmark(result, cfg, args.out_dir, raw)
    for r_gen, r_mc in zip(result.generic, result.mcmc):
        print(f"k={r_gen.k:2d} z={r_gen.z:+.3f}  generic mean={r_gen.post_mean:+.3f} "
              f"ess={r_gen.ess_pct:6.2f}%  mcmc mean={r_mc.post_mean:+.3f} ess={r_mc.ess_pct:6.2f}%")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def _sample_path(args) -> int:
    cfg, _ = _config(args)
    if args.runs < 1:
        raise ConfigError("--runs must be positive", "runs")
    problem = ConditionalProblem(args.x0, args.z, cfg.obs_var, cfg.base_model(), cfg.target_model(),
                                 cfg.I, cfg.dt)
    streams = SeedStreams(cfg.seed)
    rngs = [streams.stream(SAMPLE_PATH, 0, r) for r in range(args.runs)]
    batch = sample_conditional_paths(problem, make_ladder(cfg.L), cfg.hmc, rngs)
    ends = batch.endpoints
    rates = batch.diagnostics.accepted.sum(axis=1) / max(1, len(make_ladder(cfg.L)) * cfg.metropolis_trials)
    if args.out is not None:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "endpoint", "accept_rate"])
            for r, (e, a) in enumerate(zip(ends, rates)):
                w.writerow([r, format(e, ".17g"), format(a, ".17g")])
    var = float(np.var(ends, ddof=1)) if len(ends) > 1 else float("nan")
    print(f"runs={len(ends)} endpoint mean={ends.mean():.6f} var={var:.6g} "
          f"accept_rate={batch.diagnostics.accept_rate:.4f}")
    return EXIT_OK


def _filter(args) -> int:
    cfg, _ = _config(args)
    records = run_single(cfg, args.variant, observations=observations_for(cfg))
    write_csv(records, args.out)
    for r in records:
        print(f"k={r.k:2d} z={r.z:+.3f} mean={r.post_mean:+.4f} ess={r.ess_pct:6.2f}%")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"benchmark": _benchmark, "sample-path": _sample_path, "filter": _filter}[args.command]
    try:
        return handler(args)
    except ConfigError as err:
        print(f"driftrelax: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (FilterError, SamplerError, PropagationError, OSError) as err:
        print(f"driftrelax: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

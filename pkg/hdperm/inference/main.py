"""hdperm command line interface."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Sequence

import orjson

from . import __version__ as hdperm_version
from .cache import cache_status, cached_stats, clear_stats, setup_cache_backend
from .combine import Combiner, closed_testing_tdp, maxt_adjusted, subset_test
from .errors import InferenceError, exit_code_for
from .hdstats import METHODS, StatMatrix, split_capacity
from .io import dumps, load_dataset, write_output
from .models import resolve_variable
from .multisplit import multisplit_run
from .selection import LassoSelector, OracleSelector, Selector
from .settings import cache_settings, inference_settings
from .simulation import ExperimentConfig, run_experiment, run_sweep, sweep_frame

logger = logging.getLogger(__name__)


def _split_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def _add_dataset_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("design", help="CSV file of the design matrix (optional header row)")
    response = parser.add_mutually_exclusive_group(required=True)
    response.add_argument("--response", help="one-column CSV file of the response")
    response.add_argument(
        "--response-column", help="name or 0-based index of the response column in the design file"
    )
    parser.add_argument("--splits", "-Q", type=int, help="number of random splits")
    parser.add_argument(
        "--selector", choices=["lasso", "oracle"], default="lasso", help="selection procedure"
    )
    parser.add_argument("--select", type=int, help="number of variables to select per split")
    parser.add_argument(
        "--active", type=_split_list, help="oracle selection: comma-separated active variables"
    )
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--n-jobs", type=int, help="worker threads")
    parser.add_argument("--output", "-o", help="output file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    """Argument parser of the `hdperm` command."""
    settings = inference_settings()

    parser = argparse.ArgumentParser(
        prog="hdperm",
        description="Sign-flipping permutation tests for high-dimensional linear regression",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {hdperm_version}")
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging level (default: LOG_LEVEL or HDPERM_LOG_LEVEL)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="run a simulation experiment")
    simulate.add_argument("config", help="JSON experiment config")
    simulate.add_argument(
        "--sweep", help="JSON object mapping config fields to lists of values"
    )
    simulate.add_argument("--records", help="per-replication CSV output")
    simulate.add_argument("--output", "-o", help="report output (default: stdout)")

    stats = commands.add_parser("stats", help="build the statistics matrix of a dataset")
    _add_dataset_arguments(stats)
    stats.add_argument("--method", choices=METHODS, default="approximate")
    stats.add_argument("--flips", "-B", type=int, help="number of sign-flipping transformations")

    test = commands.add_parser("test", help="test a subset of variables from a statistics matrix")
    test.add_argument("stats", help="statistics CSV written by `hdperm stats`")
    test.add_argument(
        "--subset", type=_split_list, help="comma-separated variable names or 0-based indices"
    )
    test.add_argument("--combiner", choices=["max", "sum", "weighted"], default="max")
    test.add_argument(
        "--weights", type=lambda v: [float(w) for w in _split_list(v)], help="weighted combiner weights"
    )
    test.add_argument("--alpha", type=float, default=settings.default_alpha)
    test.add_argument(
        "--tdp", action="store_true", help="add the closed-testing true discovery bound"
    )
    test.add_argument(
        "--maxt",
        choices=["single-step", "step-down"],
        help="maxT-adjusted p-values over all variables",
    )
    test.add_argument("--output", "-o", help="output file (default: stdout)")

    multisplit = commands.add_parser("multisplit", help="multi-split OLS p-values of a dataset")
    _add_dataset_arguments(multisplit)
    multisplit.add_argument("--alpha", type=float, default=settings.default_alpha)
    multisplit.add_argument("--gamma-min", type=float, default=settings.gamma_min)

    cache = commands.add_parser("cache", help="inspect or clear the statistics cache")
    actions = cache.add_subparsers(dest="action", required=True)
    actions.add_parser("status", help="backend health and counters")
    clear = actions.add_parser("clear", help="delete cached statistics")
    clear.add_argument("--method", choices=METHODS, help="only entries of this method")
    delete = actions.add_parser("delete", help="delete one cache entry")
    delete.add_argument("key", help="cache key, as logged by `hdperm stats`")

    return parser


def _selector(args: argparse.Namespace, data) -> Selector:
    if args.selector == "oracle":
        if not args.active:
            raise ValueError("--selector oracle requires --active")
        active = data.resolve(args.active)
        extra = max((args.select or len(active)) - len(active), 0)
        return OracleSelector(tuple(active), extra=extra)

    return LassoSelector(args.select or split_capacity(data.n // 2))


def _load(args: argparse.Namespace):
    return load_dataset(
        args.design, response_path=args.response, response_column=args.response_column
    )


def _simulate(args: argparse.Namespace) -> None:
    settings = inference_settings()
    config = ExperimentConfig.from_file(args.config)

    if args.sweep:
        with open(args.sweep, "rb") as f:
            grid = orjson.loads(f.read())
        points = run_sweep(config, grid)
        frame = sweep_frame(points)
        write_output(frame.to_csv(index=False, float_format=settings.float_format), args.output)
        return

    report = run_experiment(config)
    if args.records:
        report.records_frame().to_csv(
            args.records, index=False, float_format=settings.float_format
        )
    write_output(dumps(report.summary()), args.output)


def _stats(args: argparse.Namespace) -> None:
    settings = inference_settings()
    data = _load(args)
    backend, key_generator = setup_cache_backend(cache_settings())

    stats = cached_stats(
        data,
        args.method,
        args.splits or settings.default_splits,
        args.flips or settings.default_flips,
        _selector(args, data),
        seed=args.seed,
        n_jobs=args.n_jobs or settings.n_jobs,
        backend=backend,
        key_generator=key_generator,
        ttl=cache_settings().ttl,
    )
    write_output(stats.to_csv(float_format=settings.float_format), args.output)


def _test(args: argparse.Namespace) -> None:
    if not args.subset and not args.maxt:
        raise ValueError("Nothing to test: give --subset and/or --maxt")

    stats = StatMatrix.from_csv(args.stats)
    result: dict = {}

    if args.subset:
        lookup = {name: j for j, name in enumerate(stats.names)}
        subset = [resolve_variable(v, lookup, stats.m) for v in args.subset]
        combiner = Combiner(args.combiner, args.weights)
        decision = subset_test(stats, subset, combiner, args.alpha)
        tdp = closed_testing_tdp(stats, subset, combiner, args.alpha) if args.tdp else None
        result = decision.to_record(stats.names, tdp_bound=tdp)

    if args.maxt:
        maxt = maxt_adjusted(stats, args.alpha, stepdown=args.maxt == "step-down")
        result["maxt"] = {
            "adjusted": dict(zip(stats.names, maxt.adjusted.tolist())),
            "rejected": [stats.names[j] for j in maxt.rejected],
        }

    write_output(dumps(result), args.output)


def _multisplit(args: argparse.Namespace) -> None:
    settings = inference_settings()
    data = _load(args)
    result = multisplit_run(
        data,
        args.splits or settings.default_splits,
        _selector(args, data),
        args.alpha,
        gamma_min=args.gamma_min,
        seed=args.seed,
        n_jobs=args.n_jobs or settings.n_jobs,
    )
    logger.info(
        f"Rejected {result.rejected.size} of {data.m} variables: "
        f"{[data.names[j] for j in result.rejected]}"
    )
    write_output(result.table.to_csv(float_format=settings.float_format), args.output)


def _cache(args: argparse.Namespace) -> None:
    backend, key_generator = setup_cache_backend(cache_settings())
    if backend is None or key_generator is None:
        raise ValueError("Statistics cache is disabled (set HDPERM_CACHE_ENABLE=true)")

    if args.action == "status":
        result = cache_status(backend, key_generator)
    elif args.action == "clear":
        result = {"deleted": clear_stats(backend, key_generator, args.method)}
    else:
        result = {"key": args.key, "deleted": backend.delete(args.key)}

    write_output(dumps(result))


COMMANDS = {
    "simulate": _simulate,
    "stats": _stats,
    "test": _test,
    "multisplit": _multisplit,
    "cache": _cache,
}


def _fail(category: str, exc: BaseException) -> None:
    sys.stderr.write(
        orjson.dumps({"error": category, "message": str(exc)}).decode("utf-8") + "\n"
    )


def main(argv: Sequence[str] | None = None) -> int:
    """Run the `hdperm` command; returns the process exit code."""
    args = build_parser().parse_args(argv)

    log_level = args.log_level or os.getenv("LOG_LEVEL") or inference_settings().log_level
    logging.basicConfig(
        level=getattr(logging, log_level.upper()),
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[logging.StreamHandler()],
    )
    logger.debug(f"hdperm {hdperm_version}: {args.command}")

    try:
        COMMANDS[args.command](args)
    except InferenceError as e:
        logger.error(f"{type(e).__name__}: {e}")
        _fail(e.category, e)
        return exit_code_for(e)
    except (ValueError, OSError) as e:
        logger.error(f"{type(e).__name__}: {e}")
        _fail("invalid_argument", e)
        return 2

    return 0


if __name__ == "__main__":
    sys.exit(main())

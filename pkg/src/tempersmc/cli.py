"""Command-line interface.

Subcommands: ``run`` (particle or MCMC calibration per the config),
``calibrate-threshold`` (the pre-run stopping-threshold step),
``summarize`` and ``compare`` (posterior diagnostics over particle
tables). Exit codes: 0 success, 2 configuration/validation error,
3 degenerate swarm, 4 model-failure storm.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .diagnostics import compare_sample_sets, summarize
from .errors import (
    ConfigurationError,
    ContractError,
    DegenerateSwarmError,
    ModelFailureStormError,
)
from .mcmc import run_mcmc
from .parallel import StreamKey, derive_stream, limit_blas_threads
from .smc import calibrate_stop_threshold, run_smc
from .snapshots import read_sample_csv, write_particle_table, write_result_summary
from .targets import EvalContext

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_FAILURE_STORM = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tempersmc",
        description="Adaptive tempered SMC calibration of black-box forward models.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-q", "--quiet", action="store_true", help="suppress progress logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a calibration (smc or mcmc per config)")
    run.add_argument("config", type=Path)
    run.add_argument("--output", type=Path, help="override the config output directory")
    run.add_argument("--resume", action="store_true", help="continue from the last snapshot")
    run.add_argument("--workers", type=int, help="worker count override")

    cal = sub.add_parser(
        "calibrate-threshold", help="Monte-Carlo calibration of the mutation stopping threshold"
    )
    cal.add_argument("config", type=Path)
    cal.add_argument("--output", type=Path, help="override the config output directory")
    cal.add_argument("--workers", type=int, help="worker count override")

    summ = sub.add_parser("summarize", help="posterior summaries of a particle table")
    summ.add_argument("samples", type=Path)
    summ.add_argument("--columns", help="comma-separated column names (default: all)")
    summ.add_argument(
        "--levels", default="0.025,0.975", help="comma-separated quantile pair"
    )
    summ.add_argument("--output", type=Path, help="write full summaries (JSON)")

    comp = sub.add_parser("compare", help="per-marginal agreement of two particle tables")
    comp.add_argument("samples_a", type=Path)
    comp.add_argument("samples_b", type=Path)
    comp.add_argument("--columns", help="comma-separated column names (default: shared)")
    comp.add_argument("--bins", type=int, default=200)
    comp.add_argument("--output", type=Path, help="write the comparison report (JSON)")
    return parser


def _resolve_run_options(config: RunConfig, args) -> RunConfig:
    if getattr(args, "output", None) is not None:
        config.output_dir = str(args.output)
    if getattr(args, "workers", None) is not None:
        config.workers = args.workers
    return config


def _mcmc_posterior_target(target):
    def log_target(theta):
        lp = target.log_prior(theta)
        if lp == -np.inf:
            return -np.inf, None
        result = target.evaluate(theta, EvalContext("mcmc", 0, 0, 0))
        return lp + result.log_lik, (result.log_lik, result.metric)

    return log_target


def _run_mcmc_mode(config: RunConfig) -> int:
    settings = config.mcmc_settings()
    target = config.build_target()
    space = target.space
    start = settings["start"]
    start = space.central_point() if start is None else np.asarray(start, dtype=float)
    rng = derive_stream(StreamKey(config.seed, 0, 0, "mutation"))
    logger.info(
        "running mcmc: %d iterations, start %s", settings["iterations"], start.tolist()
    )
    result = run_mcmc(
        start, _mcmc_posterior_target(target), settings["iterations"], settings["scales"], rng
    )
    burn = int(settings["burn_in_frac"] * result.chain.shape[0])
    posterior = result.chain[burn:]
    logger.info("acceptance rate %.3f, discarding %d burn-in states", result.acceptance_rate, burn)
    if config.output_dir:
        outdir = Path(config.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        log_liks = np.array(
            [aux[0] if aux is not None else np.nan for aux in result.aux]
        )
        n_total = result.chain.shape[0]
        write_particle_table(
            outdir / "chain.csv", space, result.chain, log_liks,
            np.full(n_total, 1.0 / n_total),
        )
        write_particle_table(
            outdir / "posterior.csv", space, posterior, log_liks[burn:],
            np.full(posterior.shape[0], 1.0 / posterior.shape[0]),
        )
        write_result_summary(
            outdir,
            {
                "mode": "mcmc",
                "iterations": settings["iterations"],
                "burn_in": burn,
                "acceptance_rate": result.acceptance_rate,
                "model_evaluations": target.eval_count,
                "posterior_table": "posterior.csv",
                "chain_table": "chain.csv",
            },
        )
    for j, name in enumerate(space.names):
        summary = summarize(posterior[:, j])
        (lo, hi) = summary.intervals[(0.025, 0.975)]
        print(f"{name}: mean={summary.mean:.6g} 95% interval=({lo:.6g}, {hi:.6g})")
    return EXIT_OK


def _run_threshold_mode(config: RunConfig) -> int:
    settings = config.smc_settings()
    target = config.build_target(settings)
    n = settings.n_particles
    thetas = [
        target.space.sample_prior(derive_stream(StreamKey(config.seed, 0, i, "init")))
        for i in range(n)
    ]
    metrics = np.array(
        [
            target.evaluate(theta, EvalContext("threshold", 0, i, 0)).metric
            for i, theta in enumerate(thetas)
        ]
    )
    survey = metrics[np.isfinite(metrics)]
    epsilon = calibrate_stop_threshold(
        survey,
        n_sets=settings.threshold_samples,
        set_size=n,
        bins=settings.bins,
        quantile=settings.threshold_quantile,
        rng=derive_stream(StreamKey(config.seed, 0, 0, "threshold_calibration")),
    )
    payload = {
        "epsilon": epsilon,
        "survey_size": int(survey.size),
        "survey_mean": float(survey.mean()),
        "survey_variance": float(survey.var(ddof=1)),
        "n_sets": settings.threshold_samples,
        "set_size": n,
        "bins": settings.bins,
        "quantile": settings.threshold_quantile,
        "seed": config.seed,
    }
    if config.output_dir:
        outdir = Path(config.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "threshold.json", "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    print(f"stopping threshold: {epsilon:.6g}")
    return EXIT_OK


def _run_smc_mode(config: RunConfig, resume: bool) -> int:
    settings = config.smc_settings()
    target = config.build_target(settings)
    result = run_smc(
        target,
        settings,
        master_seed=config.seed,
        output_dir=config.output_dir,
        resume=resume,
    )
    print(
        f"completed {result.n_cycles} cycles; schedule "
        f"{[round(g, 4) for g in result.schedule]} (sum="
        f"{result.swarm.temper.cumulative:g}); "
        f"{result.model_evaluations} model evaluations, "
        f"sequential depth {result.sequential_depth}"
    )
    for j, name in enumerate(target.space.names):
        summary = summarize(result.swarm.thetas[:, j])
        lo, hi = summary.intervals[(0.025, 0.975)]
        print(f"{name}: mean={summary.mean:.6g} 95% interval=({lo:.6g}, {hi:.6g})")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _resolve_run_options(load_config(args.config), args)
    if config.mode == "mcmc":
        return _run_mcmc_mode(config)
    if config.mode == "threshold_calibration":
        return _run_threshold_mode(config)
    return _run_smc_mode(config, resume=args.resume)


def _cmd_calibrate_threshold(args) -> int:
    config = _resolve_run_options(load_config(args.config), args)
    return _run_threshold_mode(config)


def _select_columns(table, requested):
    header = table["header"]
    if requested:
        names = [c.strip() for c in requested.split(",") if c.strip()]
        missing = [c for c in names if c not in header]
        if missing:
            raise ConfigurationError(f"columns not present: {missing}")
    else:
        names = [c for c in header if c != "particle"]
    idx = [header.index(c) for c in names]
    return names, table["data"][:, idx]


def _cmd_summarize(args) -> int:
    table = read_sample_csv(args.samples)
    levels = tuple(float(x) for x in args.levels.split(","))
    if len(levels) != 2:
        raise ConfigurationError("--levels expects exactly two quantiles")
    names, data = _select_columns(table, args.columns)
    payload = {}
    lo_level, hi_level = levels
    print(f"{'column':>24}  {'mean':>12}  {'q' + str(lo_level):>12}  {'q' + str(hi_level):>12}")
    for j, name in enumerate(names):
        summary = summarize(data[:, j], levels=(levels,))
        lo, hi = summary.intervals[(lo_level, hi_level)]
        print(f"{name:>24}  {summary.mean:>12.6g}  {lo:>12.6g}  {hi:>12.6g}")
        payload[name] = {
            "mean": summary.mean,
            "interval_levels": [lo_level, hi_level],
            "interval": [lo, hi],
            "survival_grid": summary.survival_grid.tolist(),
            "survival_values": summary.survival_values.tolist(),
            "n": summary.n,
        }
    if args.output:
        with open(args.output, "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    return EXIT_OK


def _cmd_compare(args) -> int:
    table_a = read_sample_csv(args.samples_a)
    table_b = read_sample_csv(args.samples_b)
    if args.columns:
        names = [c.strip() for c in args.columns.split(",") if c.strip()]
    else:
        names = [c for c in table_a["header"] if c != "particle" and c in table_b["header"]]
    missing = [
        c for c in names if c not in table_a["header"] or c not in table_b["header"]
    ]
    if missing:
        raise ConfigurationError(f"columns not present in both tables: {missing}")
    a = table_a["data"][:, [table_a["header"].index(c) for c in names]]
    b = table_b["data"][:, [table_b["header"].index(c) for c in names]]
    report = compare_sample_sets(a, b, bins=args.bins, names=names)
    print(
        f"{'column':>24}  {'KS':>8}  {'mean gap':>10}  {'lo gap':>10}  "
        f"{'hi gap':>10}  {'D_B':>8}"
    )
    payload = []
    for row in report:
        print(
            f"{row.name:>24}  {row.ks_statistic:>8.4f}  {row.mean_gap:>10.4g}  "
            f"{row.lower_gap:>10.4g}  {row.upper_gap:>10.4g}  {row.bhattacharyya:>8.4g}"
        )
        payload.append(vars(row))
    if args.output:
        with open(args.output, "w") as handle:
            json.dump(payload, handle, indent=2)
            handle.write("\n")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "calibrate-threshold": _cmd_calibrate_threshold,
    "summarize": _cmd_summarize,
    "compare": _cmd_compare,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    limit_blas_threads(1)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, ContractError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateSwarmError as exc:
        print(f"error: degenerate swarm: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ModelFailureStormError as exc:
        print(f"error: model failures: {exc}", file=sys.stderr)
        return EXIT_FAILURE_STORM


if __name__ == "__main__":
    sys.exit(main())

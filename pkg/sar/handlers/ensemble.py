"""
Подкоманда ensemble: ансамбль до заданного t_end без правила останова
"""
import argparse
import logging

import numpy as np
import pandas as pd

from sar.exceptions import ConfigurationError
from sar.services.ensemble import moment_maps, run_ensemble
from sar.services.integrators import STEPPING_SCHEMES, Scheme, run_path
from sar.services.report_generator import format_summary
from sar.services.stochastic_noise import RngLineage
from sar.utils.harness import (
    RunContext,
    add_run_arguments,
    build_noise,
    build_problem,
    ensemble_horizon,
    noisy_data,
    prepare,
    scaled_schedule,
)

logger = logging.getLogger(__name__)

COMMAND = "ensemble"
SNAPSHOTS = 11


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Ансамбль траекторий до --t-end")
    add_run_arguments(parser)
    parser.add_argument("--trace", action="store_true", help="Записать снимки траектории 0 (path.csv)")
    parser.set_defaults(handler=run, record=True)
    return parser


def run(args: argparse.Namespace) -> RunContext:
    ctx = prepare(COMMAND, args)
    cfg = ctx.cfg
    if cfg.t_end is None:
        raise ConfigurationError("Для ensemble нужен --t-end")

    with ctx.stage("problem"):
        p = build_problem(cfg)
        _, spec, sched = build_noise(p, cfg)
        y_delta, delta = noisy_data(p, cfg.delta, ctx.master_seed)
        x0 = np.zeros(p.n)

    t_end = ensemble_horizon(cfg.scheme, cfg.t_end, cfg.dt)
    sched = scaled_schedule(cfg, p, spec, sched, delta, t_end)
    with ctx.stage("ensemble"):
        stats = run_ensemble(
            p, spec, sched, y_delta, x0, cfg.scheme, cfg.dt, t_end, cfg.n_paths,
            levels=cfg.levels, master_seed=ctx.master_seed,
            workers=ctx.workers, chunk_size=ctx.chunk_size, keep_samples=False,
        )

    writer = ctx.writer
    writer.write_table(stats.to_frame(p.grid_domain, p.x_true), "ensemble.csv", {"t_end": repr(t_end)})

    # сырые моменты: E x^k рядом с центральными из ensemble.csv
    raw = {f"raw_{order}": moment_maps(stats, order, kind="raw").field.ravel() for order in cfg.moment_orders}
    if raw:
        writer.write_table(pd.DataFrame({"node": np.arange(p.n), **raw}), "raw_moments.csv")

    if args.trace and Scheme(cfg.scheme) in STEPPING_SCHEMES:
        with ctx.stage("trace"):
            path = run_path(
                p, spec, sched, y_delta, x0, cfg.scheme, cfg.dt, t_end,
                RngLineage(ctx.master_seed, 0), np.linspace(0.0, t_end, SNAPSHOTS),
            )
        writer.write_table(path, "path.csv")
    elif args.trace:
        logger.warning("⚠️ --trace требует пошаговой схемы, а выбрана %s", cfg.scheme.value)

    summary = {**stats.summary(), "delta": delta}
    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: {p.name}, t_end={t_end:g}", summary))
    return ctx

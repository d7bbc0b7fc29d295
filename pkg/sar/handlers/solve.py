"""
Подкоманда solve: правило останова, ансамбль в t*, среднее и доверительные полосы
"""
import argparse
import logging

import numpy as np
import pandas as pd

from sar.services.ensemble import run_ensemble
from sar.services.experiments import stop_with_schedule
from sar.services.report_generator import format_outcome, format_summary
from sar.services.spectral_operator import apply_forward
from sar.utils.harness import (
    RunContext,
    add_run_arguments,
    build_noise,
    build_problem,
    ensemble_horizon,
    noise_level,
    noisy_data,
    prepare,
)

logger = logging.getLogger(__name__)

COMMAND = "solve"


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Решение с остановом по правилу и полосами")
    add_run_arguments(parser)
    parser.set_defaults(handler=run, record=True)
    return parser


def run(args: argparse.Namespace) -> RunContext:
    ctx = prepare(COMMAND, args)
    cfg = ctx.cfg

    with ctx.stage("problem"):
        p = build_problem(cfg)
        family, spec, sched = build_noise(p, cfg)
        y_delta, delta = noisy_data(p, cfg.delta, ctx.master_seed)
        x0 = np.zeros(p.n)

    with ctx.stage("stopping"):
        outcome, sched = stop_with_schedule(
            cfg.rule, p, family, spec, sched, y_delta, x0, delta, cfg.tau, noise_level(cfg)
        )
    print(format_outcome(outcome, delta))

    with ctx.stage("ensemble"):
        t_end = ensemble_horizon(cfg.scheme, outcome.t_star, cfg.dt)
        stats = run_ensemble(
            p, spec, sched, y_delta, x0, cfg.scheme, cfg.dt, t_end, cfg.n_paths,
            levels=cfg.levels, master_seed=ctx.master_seed,
            workers=ctx.workers, chunk_size=ctx.chunk_size, keep_samples=False,
        )

    residual = p.range_norm(apply_forward(p, stats.mean) - y_delta)
    summary = {
        **outcome.as_record(),
        **stats.summary(),
        "delta": delta,
        "schedule": sched.label(),
        "relative_residual": residual / p.range_norm(y_delta),
    }
    if p.x_true is not None:
        for level in cfg.levels:
            summary[f"coverage_{round(level * 100):d}"] = stats.coverage(p.x_true, level)

    writer = ctx.writer
    writer.write_table(stats.to_frame(p.grid_domain, p.x_true), "solution.csv", {"t_end": repr(t_end)})
    writer.write_table(pd.DataFrame([{**outcome.as_record(), "delta": delta}]), "stopping.csv")
    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: {p.name}, n={p.n}", summary))
    return ctx

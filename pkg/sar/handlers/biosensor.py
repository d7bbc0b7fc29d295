"""
Подкоманда biosensor: карта констант скоростей, карты моментов и отчёт о пиках
"""
import argparse
import logging

import numpy as np
import pandas as pd

from sar.services.ensemble import moment_maps, run_ensemble
from sar.services.experiments import stop_with_schedule
from sar.services.problems import peak_report, rate_grid, truth_recovery
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

COMMAND = "biosensor"
TOP_PEAKS = 2


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Томография констант скоростей по синтетическому сенсорграмму")
    add_run_arguments(parser)
    parser.add_argument("--grid", type=int, help="Узлов на ось сетки констант (n_kd = n_ka)")
    parser.add_argument("--minor-peak", dest="minor_peak", action="store_true", help="Добавить третий малый пик")
    parser.set_defaults(handler=run, record=True)
    return parser


def _biosensor_overrides(args: argparse.Namespace) -> dict:
    biosensor = {}
    if args.grid is not None:
        biosensor.update(n_kd=args.grid, n_ka=args.grid)
    if args.minor_peak:
        biosensor["include_minor_peak"] = True
    return biosensor


def run(args: argparse.Namespace) -> RunContext:
    ctx = prepare(COMMAND, args, {"problem": "biosensor", "biosensor": _biosensor_overrides(args) or None})
    cfg = ctx.cfg
    bio = cfg.biosensor

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

    with ctx.stage("maps"):
        maps = {"mean": moment_maps(stats, 1, kind="raw", threshold=cfg.peak_threshold)}
        maps["raw_2"] = moment_maps(stats, 2, kind="raw", threshold=cfg.peak_threshold)
        for order in cfg.moment_orders:
            if order > 1:
                maps[f"central_{order}"] = moment_maps(stats, order, kind="central", threshold=cfg.peak_threshold)

    log_kd, log_ka, _ = rate_grid(bio)
    i_kd, i_ka = np.unravel_index(np.arange(p.n), (bio.n_kd, bio.n_ka))
    rate_map = pd.DataFrame({"i_kd": i_kd, "i_ka": i_ka, "log_kd": log_kd, "log_ka": log_ka})
    for name, moment_map in maps.items():
        rate_map[name] = moment_map.field.ravel()
    if p.x_true is not None:
        rate_map["x_true"] = p.x_true

    peak_rows = []
    for name, moment_map in maps.items():
        for rank, row in enumerate(peak_report(bio, moment_map.peaks), start=1):
            peak_rows.append({"map": name, "rank": rank, **row})
    peaks = pd.DataFrame(peak_rows, columns=["map", "rank", "i_kd", "i_ka", "log_kd", "log_ka", "value", "cells_to_truth"])

    relative_residual = p.range_norm(apply_forward(p, stats.mean) - y_delta) / p.range_norm(y_delta)
    top = peaks[peaks["map"] == "mean"].head(TOP_PEAKS)["cells_to_truth"].dropna()
    summary = {
        **outcome.as_record(),
        **stats.summary(),
        "delta": delta,
        "schedule": sched.label(),
        "relative_residual": relative_residual,
        "mean_peaks": int((peaks["map"] == "mean").sum()),
        "raw_2_peaks": int((peaks["map"] == "raw_2").sum()),
        "max_cells_to_truth": int(top.max()) if len(top) else None,
        "mean_cells_per_truth": truth_recovery(bio, maps["mean"].peaks),
        "raw_2_cells_per_truth": truth_recovery(bio, maps["raw_2"].peaks),
    }
    if relative_residual > 0.05:
        logger.warning("⚠️ Относительная невязка среднего %.3g > 0.05", relative_residual)

    writer = ctx.writer
    writer.write_table(rate_map, "rate_map.csv", {"shape": f"{bio.n_kd}x{bio.n_ka}", "t_end": repr(t_end)})
    writer.write_table(peaks, "peaks.csv")
    writer.write_table(pd.DataFrame([{**outcome.as_record(), "delta": delta}]), "stopping.csv")
    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: сетка {bio.n_kd}×{bio.n_ka}, ранг {p.rank}", summary))
    return ctx

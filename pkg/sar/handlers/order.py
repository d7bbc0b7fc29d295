"""
Подкоманда order: сильный порядок euler и exp_euler по сетке Δt
"""
import argparse
import logging
from typing import Optional

import numpy as np

from sar.exceptions import ConfigurationError
from sar.services.experiments import order_sweep
from sar.services.integrators import Scheme
from sar.services.report_generator import format_summary
from sar.utils.harness import (
    RunContext,
    add_run_arguments,
    build_noise,
    build_problem,
    noisy_data,
    normalize_choice,
    prepare,
    scaled_schedule,
)

logger = logging.getLogger(__name__)

COMMAND = "order"
MIN_STEPS = 4


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Сильный порядок схем: наклон ошибки от Δt")
    add_run_arguments(parser)
    parser.add_argument(
        "--dts",
        type=float,
        nargs="+",
        help="Список Δt или одно число K: Δt = dt·2^-k, k < K",
    )
    parser.add_argument("--schemes", nargs="+", default=None, help="По умолчанию euler exp_euler")
    parser.set_defaults(handler=run, record=True)
    return parser


def expand_dts(values: Optional[list[float]], base: float) -> Optional[list[float]]:
    """Одно целое K превращается в геометрическую сетку из K шагов"""
    if not values:
        return None
    if len(values) == 1:
        count = values[0]
        if count != int(count) or count < MIN_STEPS:
            raise ConfigurationError(f"--dts K: ожидалось целое K >= {MIN_STEPS}, получено {count}")
        return [base * 2.0 ** -k for k in range(int(count))]
    return list(values)


def run(args: argparse.Namespace) -> RunContext:
    base = args.dt if args.dt is not None else 0.1
    extra = {"dts": expand_dts(args.dts, base), "order_t_end": args.t_end}
    ctx = prepare(COMMAND, args, extra)
    cfg = ctx.cfg
    names = args.schemes or (Scheme.EULER.value, Scheme.EXP_EULER.value)
    schemes = [Scheme(normalize_choice("scheme", name)) for name in names]

    with ctx.stage("problem"):
        p = build_problem(cfg)
        _, spec, sched = build_noise(p, cfg)
        y_delta, delta = noisy_data(p, cfg.delta, ctx.master_seed)
        sched = scaled_schedule(cfg, p, spec, sched, delta, cfg.order_t_end)

    with ctx.stage("sweep"):
        result = order_sweep(
            p, spec, sched, y_delta, np.zeros(p.n), cfg.dts, cfg.order_t_end, cfg.n_paths,
            master_seed=ctx.master_seed, schemes=schemes,
        )

    writer = ctx.writer
    writer.write_table(result.to_frame(), "order.csv", {"t_end": repr(cfg.order_t_end)})
    writer.write_table(result.slope_frame(), "order_slopes.csv")

    summary = {f"{scheme.value}_slope": fit.slope for scheme, fit in result.slopes.items()}
    summary.update({f"{scheme.value}_halfwidth": fit.halfwidth for scheme, fit in result.slopes.items()})
    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: {p.name}, {len(cfg.dts)} шагов Δt", summary))
    return ctx

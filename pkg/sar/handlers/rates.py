"""
Подкоманда rates: MSE в момент останова по сетке δ и наклон в логарифмических осях
"""
import argparse
import logging

import pandas as pd

from sar.exceptions import StoppingError
from sar.services.experiments import rate_sweep
from sar.services.report_generator import format_summary
from sar.utils.harness import (
    RunContext,
    add_run_arguments,
    build_noise,
    build_source_problem,
    noise_level,
    prepare,
)

logger = logging.getLogger(__name__)

COMMAND = "rates"


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Скорость сходимости: наклон log MSE от log δ")
    add_run_arguments(parser)
    parser.add_argument("--deltas", type=float, nargs="+", help="Абсолютные уровни шума, >= 4 значений")
    parser.add_argument("--fixed-direction", dest="fixed_direction", action="store_true", default=None)
    parser.set_defaults(handler=run, record=True)
    return parser


def run(args: argparse.Namespace) -> RunContext:
    extra = {"deltas": args.deltas, "fixed_direction": args.fixed_direction}
    ctx = prepare(COMMAND, args, extra)
    cfg = ctx.cfg

    with ctx.stage("problem"):
        p = build_source_problem(cfg)
        family, spec, sched = build_noise(p, cfg)

    with ctx.stage("sweep"):
        try:
            result = rate_sweep(
                p, family, spec, sched, cfg.rule, cfg.deltas, cfg.n_paths, ctx.master_seed,
                tau=cfg.tau, scheme=cfg.scheme, dt=cfg.dt, fixed_direction=cfg.fixed_direction,
                noise_level=noise_level(cfg), workers=ctx.workers, chunk_size=ctx.chunk_size,
            )
        except StoppingError as error:
            logger.error("❌ Останов не найден при δ=%s: последнее значение %s", error.delta, error.last_value)
            raise

    summary = {**result.summary(), "source": family.label()}
    writer = ctx.writer
    writer.write_table(result.to_frame(), "rates.csv", {"abscissa": result.abscissa})
    writer.write_table(
        pd.DataFrame([outcome.as_record() for outcome in result.outcomes]).assign(delta=result.deltas),
        "stopping.csv",
    )
    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: {family.label()}, правило {result.rule.value}", summary))
    return ctx

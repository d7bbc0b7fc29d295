"""
Подкоманда converse: эмпирические константы обратного утверждения о скорости
"""
import argparse
import logging

import numpy as np

from sar.services.experiments import converse_diagnostic
from sar.services.report_generator import format_summary
from sar.utils.harness import RunContext, add_run_arguments, build_source_problem, prepare

logger = logging.getLogger(__name__)

COMMAND = "converse"


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="sup-отношения смещения и спектрального хвоста")
    add_run_arguments(parser)
    parser.add_argument("--decades", type=float, default=2.0, help="Ширина сетки по t в декадах от 1/σ_1²")
    parser.add_argument("--points", type=int, default=41)
    parser.set_defaults(handler=run, record=True)
    return parser


def run(args: argparse.Namespace) -> RunContext:
    ctx = prepare(COMMAND, args)
    cfg = ctx.cfg

    with ctx.stage("problem"):
        p = build_source_problem(cfg)
        family = cfg.source.build()

    lam1 = float(p.eigenvalues[0])
    t_grid = np.geomspace(1.0 / lam1, 10.0**args.decades / lam1, args.points)
    with ctx.stage("diagnostic"):
        result = converse_diagnostic(p, np.zeros(p.n), family, t_grid=t_grid)

    writer = ctx.writer
    writer.write_table(result.bias_table, "converse_bias.csv", {"source": family.label()})
    writer.write_table(result.tail_table, "converse_tail.csv", {"source": family.label()})

    summary = {**result.summary(), "source": family.label()}
    if result.bias_stability >= 2.0 or result.tail_stability >= 2.0:
        logger.warning("⚠️ sup-отношения растут при расширении сетки: условие %s под вопросом", family.label())
    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: {p.name}, {family.label()}", summary))
    return ctx

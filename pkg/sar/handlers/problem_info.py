"""
Подкоманда problem-info: сингулярный спектр задачи и её сохранение в файл
"""
import argparse
import logging

import numpy as np
import pandas as pd

from sar.services.problem_store import save_problem
from sar.services.report_generator import format_summary
from sar.services.spectral_operator import apply_forward
from sar.utils.harness import RunContext, add_run_arguments, build_problem, prepare

logger = logging.getLogger(__name__)

COMMAND = "problem-info"


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Спектр задачи; --save пишет JSON для --problem-file")
    add_run_arguments(parser)
    parser.add_argument("--save", help="Путь JSON-файла задачи")
    parser.set_defaults(handler=run, record=True)
    return parser


def run(args: argparse.Namespace) -> RunContext:
    ctx = prepare(COMMAND, args)

    with ctx.stage("problem"):
        p = build_problem(ctx.cfg)

    summary = {
        "name": p.name,
        "n": p.n,
        "m": p.m,
        "rank": p.rank,
        "sigma_1": p.norm,
        "sigma_r": float(p.singular_values[-1]),
        "condition": p.norm / float(p.singular_values[-1]),
    }
    if p.x_true is not None and p.y_exact is not None:
        summary["forward_consistency"] = p.range_norm(apply_forward(p, p.x_true) - p.y_exact) / p.range_norm(p.y_exact)

    spectrum = pd.DataFrame(
        {
            "j": np.arange(1, p.rank + 1),
            "sigma": p.singular_values,
            "lambda": p.eigenvalues,
        }
    )
    ctx.writer.write_table(spectrum, "spectrum.csv", {"problem": p.name})

    if args.save:
        save_problem(p, args.save)
        summary["saved_to"] = args.save

    ctx.finish(summary)
    print(format_summary(f"✅ {COMMAND}: {p.name}", summary))
    return ctx

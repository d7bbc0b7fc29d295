"""Handlers package"""

from sar.handlers import biosensor, converse, ensemble, order, problem_info, rates, runs, solve

__all__ = [
    "solve", "ensemble", "rates", "order", "biosensor", "problem_info", "converse", "runs"
]

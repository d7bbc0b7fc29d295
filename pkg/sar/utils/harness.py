"""
Общие шаги подкоманд: конфигурация запуска, задача, шум, каталог результатов
"""
import argparse
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from sar.config import config
from sar.exceptions import ConfigurationError, UnsupportedProblemError
from sar.schemas import ExperimentConfig
from sar.services.index_functions import SourceFamily
from sar.services.integrators import Scheme, calibrate_schedule
from sar.services.problem_store import load_problem
from sar.services.problems import make_biosensor_problem, make_source_problem, make_toy_problem
from sar.services.report_generator import ReportWriter
from sar.services.schedules import NoiseSchedule
from sar.services.spectral_operator import ForwardProblem
from sar.services.stochastic_noise import (
    DATA_STREAM,
    QWienerSpec,
    RngLineage,
    inject_data_noise,
    make_qwiener,
)
from sar.services.stopping_rules import StoppingRule

logger = logging.getLogger(__name__)

# флаг CLI -> поле ExperimentConfig
_FLAG_FIELDS = {
    "problem": "problem",
    "problem_file": "problem_file",
    "n": "n",
    "quadrature": "quadrature",
    "delta": "delta",
    "rule": "rule",
    "tau": "tau",
    "scheme": "scheme",
    "dt": "dt",
    "t_end": "t_end",
    "n_paths": "n_paths",
    "levels": "levels",
    "seed": "master_seed",
    "workers": "workers",
    "chunk_size": "chunk_size",
    "output": "output_dir",
}


def add_run_arguments(parser: argparse.ArgumentParser) -> None:
    """Флаги, общие для всех вычислительных подкоманд"""
    parser.add_argument("--config", help="JSON-файл ExperimentConfig")
    parser.add_argument("--problem", choices=["toy", "source", "biosensor", "file"])
    parser.add_argument("--problem-file", dest="problem_file", help="Задача, сохранённая problem-info --save")
    parser.add_argument("--n", type=int, help="Число узлов модельной задачи")
    parser.add_argument("--quadrature", choices=["midpoint", "trapezoid", "gauss"])
    parser.add_argument("--delta", type=float, help="Относительный уровень шума данных")
    parser.add_argument("--rule", help="a_priori | chi1 | chi2 | balance")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--scheme", help="euler | exp_euler | exact_spectral | mild_law")
    parser.add_argument("--dt", type=float)
    parser.add_argument("--t-end", dest="t_end", type=float)
    parser.add_argument("--n-paths", dest="n_paths", type=int)
    parser.add_argument("--levels", type=float, nargs="+")
    parser.add_argument("--seed", type=int, help="master_seed (по умолчанию SAR_MASTER_SEED)")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--chunk-size", dest="chunk_size", type=int)
    parser.add_argument("--schedule-scale", dest="schedule_scale", choices=["absolute", "data_noise"])
    parser.add_argument("--schedule-c", dest="schedule_c", type=float, help="c в f(t) или уровень κ при data_noise")
    parser.add_argument("--output", help="Каталог результатов")


def normalize_choice(name: str, value: Any) -> Any:
    """Псевдонимы перечислений (chi1, EXP_EULER) приводятся к каноническим значениям"""
    try:
        if name == "rule":
            return StoppingRule(value).value
        if name == "scheme":
            return Scheme(value).value
    except ValueError as error:
        raise ConfigurationError(f"Неизвестное значение {name}: {value}") from error
    return value


def load_experiment(args: argparse.Namespace, extra: Optional[dict[str, Any]] = None) -> ExperimentConfig:
    """
    Конфигурация запуска: файл --config, затем флаги, затем extra

    Raises:
        ConfigurationError: Файл не найден
        pydantic.ValidationError: Итоговая конфигурация невалидна
    """
    base = ExperimentConfig()
    path = getattr(args, "config", None)
    if path:
        if not Path(path).exists():
            raise ConfigurationError(f"Файл конфигурации не найден: {path}")
        base = ExperimentConfig.load(path)

    overrides = {name: getattr(args, flag, None) for flag, name in _FLAG_FIELDS.items()}
    schedule = {"scale": getattr(args, "schedule_scale", None), "c": getattr(args, "schedule_c", None)}
    schedule = {key: value for key, value in schedule.items() if value is not None}
    if schedule:
        overrides["schedule"] = schedule
    overrides.update(extra or {})
    overrides = {name: normalize_choice(name, value) for name, value in overrides.items() if value is not None}
    return base.merged(overrides)


@dataclass
class RunContext:
    """Состояние одного запуска подкоманды"""

    command: str
    cfg: ExperimentConfig
    master_seed: int
    workers: int
    chunk_size: int
    config_hash: str
    output_dir: Path
    timings: dict[str, float] = field(default_factory=dict)
    summary: dict[str, Any] = field(default_factory=dict)
    _writer: Optional[ReportWriter] = None

    @property
    def writer(self) -> ReportWriter:
        if self._writer is None:
            self._writer = ReportWriter(self.output_dir, self.master_seed, self.config_hash)
        return self._writer

    @contextmanager
    def stage(self, name: str):
        """Замер времени этапа для manifest.json"""
        started = time.perf_counter()
        logger.info("▶️ %s", name)
        try:
            yield
        finally:
            self.timings[name] = time.perf_counter() - started

    def finish(self, summary: dict[str, Any]) -> None:
        self.summary = summary
        self.writer.write_manifest(self.command, self.cfg.model_dump(mode="json"), self.timings, summary)


def prepare(command: str, args: argparse.Namespace, extra: Optional[dict[str, Any]] = None) -> RunContext:
    """Разобрать конфигурацию и выбрать зерно, параллельность и каталог"""
    cfg = load_experiment(args, extra)
    if cfg.master_seed is None:
        cfg = cfg.merged({"master_seed": config.MASTER_SEED})
    config_hash = cfg.config_hash()
    output_dir = Path(cfg.output_dir) if cfg.output_dir else Path(config.OUTPUT_DIR) / f"{command}-{config_hash}"
    ctx = RunContext(
        command=command,
        cfg=cfg,
        master_seed=cfg.master_seed,
        workers=cfg.workers or config.WORKERS,
        chunk_size=cfg.chunk_size or config.CHUNK_SIZE,
        config_hash=config_hash,
        output_dir=output_dir,
    )
    logger.info(
        "🚀 %s: задача %s, seed=%d, hash=%s, каталог %s",
        command, cfg.problem, ctx.master_seed, config_hash, output_dir,
    )
    return ctx


def build_problem(cfg: ExperimentConfig) -> ForwardProblem:
    if cfg.problem == "toy":
        return make_toy_problem(cfg.n, cfg.quadrature)
    if cfg.problem == "source":
        return make_source_problem(cfg.n, cfg.source, cfg.quadrature)
    if cfg.problem == "biosensor":
        return make_biosensor_problem(cfg.biosensor)
    return load_problem(cfg.problem_file)


def build_source_problem(cfg: ExperimentConfig) -> ForwardProblem:
    """Задача, у которой x† удовлетворяет условию истокообразности cfg.source"""
    if cfg.problem == "biosensor":
        raise ConfigurationError("Для прогона по скорости нужна задача toy/source или файл с x_true")
    if cfg.problem == "file":
        return load_problem(cfg.problem_file)
    return make_source_problem(cfg.n, cfg.source, cfg.quadrature)


def build_noise(p: ForwardProblem, cfg: ExperimentConfig) -> tuple[SourceFamily, QWienerSpec, NoiseSchedule]:
    family = cfg.source.build()
    spec = make_qwiener(p, cfg.qwiener.build())
    sched = cfg.schedule.build(family)
    logger.info("Q: %s, tr(Q(A*A)^-1)=%.6g, f(t): %s", cfg.qwiener.kind.value, spec.trace_weighted, sched.label())
    return family, spec, sched


def noise_level(cfg: ExperimentConfig) -> Optional[float]:
    """Уровень κ калибровки f(t); None - c берётся как есть"""
    return cfg.schedule.c if cfg.schedule.scale == "data_noise" else None


def scaled_schedule(
    cfg: ExperimentConfig,
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    delta: float,
    t_ref: float,
) -> NoiseSchedule:
    """f(t) для запуска без правила останова: калибровка в заданный момент t_ref"""
    level = noise_level(cfg)
    if level is None:
        return sched
    return calibrate_schedule(p, spec, sched, delta, t_ref, level)


def noisy_data(p: ForwardProblem, relative_delta: float, master_seed: int) -> tuple[np.ndarray, float]:
    """
    y^δ с относительным уровнем шума

    Returns:
        (y_delta, δ) где δ = relative_delta·‖y‖ - абсолютный уровень
    """
    if p.y_exact is None:
        raise UnsupportedProblemError("Для зашумления данных задача должна содержать y_exact")
    delta = relative_delta * p.range_norm(p.y_exact)
    y_delta = inject_data_noise(p, delta, RngLineage(master_seed, 0, stream=DATA_STREAM))
    logger.info("Шум данных: δ=%.4g (%.3g%% от ‖y‖)", delta, 100.0 * relative_delta)
    return y_delta, delta


def ensemble_horizon(scheme: Scheme, t_star: float, dt: float) -> float:
    """Пошаговые схемы останавливаются на ближайшем узле сетки не раньше t*"""
    if Scheme(scheme) == Scheme.MILD_LAW:
        return t_star
    return math.ceil(t_star / dt - 1e-9) * dt

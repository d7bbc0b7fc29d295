"""
Конфигурация экспериментов (JSON-файл + переопределения из CLI)
"""
import hashlib
import json
import logging
import math
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from sar.services.index_functions import SourceFamily, SourceKind
from sar.services.integrators import Scheme
from sar.services.schedules import NoiseSchedule, ScheduleKind
from sar.services.stochastic_noise import QWienerFamily, QWienerKind
from sar.services.stopping_rules import DEFAULT_TAU, StoppingRule

logger = logging.getLogger(__name__)

NANOMOLAR = 1e-9
# степенное семейство Q расходится на экспоненциальном спектре биосенсора
BIOSENSOR_BETA = 2.0


class SourceConfig(BaseModel):
    """Условие истокообразности x0 - x† = φ(A*A) v"""

    model_config = ConfigDict(extra="forbid")

    kind: SourceKind = SourceKind.HOLDER
    exponent: float = 0.5
    rho: float = Field(default=1.0, gt=0)
    # ‖A x†‖ после нормировки; None - оставить ‖v‖ = rho
    data_norm: Optional[float] = Field(default=1.0, gt=0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_exponent(self) -> "SourceConfig":
        self.build()
        return self

    def build(self) -> SourceFamily:
        return SourceFamily(self.kind, self.exponent)


class QWienerConfig(BaseModel):
    """Семейство собственных значений Q"""

    model_config = ConfigDict(extra="forbid")

    kind: QWienerKind = QWienerKind.POWER
    c: float = Field(default=1.0, ge=0)
    alpha: float = 6.0
    beta: float = 2.0
    values: Optional[list[float]] = None

    def build(self) -> QWienerFamily:
        if self.kind == QWienerKind.CUSTOM:
            return QWienerFamily.custom(self.values or [])
        if self.kind == QWienerKind.SPECTRAL:
            return QWienerFamily.spectral(self.beta, self.c)
        return QWienerFamily.power(self.alpha, self.c)


class ScheduleConfig(BaseModel):
    """
    f(t) при стохастическом члене

    matched и sqrt_matched берут показатель у источника эксперимента.
    При scale="data_noise" c - уровень κ: константа f(t) подбирается так,
    что стандартное отклонение ансамбля в опорный момент t равно κ·δ·√t.
    При scale="absolute" c идёт в f(t) как есть.
    """

    model_config = ConfigDict(extra="forbid")

    kind: Literal["holder_decay", "log_decay", "constant", "zero", "matched", "sqrt_matched"] = "matched"
    c: float = Field(default=1.0, ge=0)
    exponent: float = 0.5
    scale: Literal["absolute", "data_noise"] = "data_noise"

    def build(self, family: SourceFamily) -> NoiseSchedule:
        if self.kind == "matched":
            return NoiseSchedule.matched(family, self.c)
        if self.kind == "sqrt_matched":
            return NoiseSchedule.sqrt_matched(family, self.c)
        kind = ScheduleKind(self.kind)
        if kind == ScheduleKind.HOLDER_DECAY:
            return NoiseSchedule.holder_decay(self.exponent, self.c)
        if kind == ScheduleKind.LOG_DECAY:
            return NoiseSchedule.log_decay(self.exponent, self.c)
        if kind == ScheduleKind.CONSTANT:
            return NoiseSchedule.constant(self.c)
        return NoiseSchedule.zero()


class SyntheticPeak(BaseModel):
    """Гауссов пик карты констант в координатах (log10 k_d, log10 k_a)"""

    model_config = ConfigDict(extra="forbid")

    log_kd: float
    log_ka: float
    amplitude: float = Field(default=1.0, gt=0)


DEFAULT_PEAKS = [
    SyntheticPeak(log_kd=-0.9, log_ka=4.4, amplitude=1.0),
    SyntheticPeak(log_kd=-3.5, log_ka=3.9, amplitude=0.6),
]
MINOR_PEAK = SyntheticPeak(log_kd=-2.9, log_ka=2.6, amplitude=0.3)


class BiosensorConfig(BaseModel):
    """Кинетический эксперимент: концентрации, фазы инъекции, сетка констант"""

    model_config = ConfigDict(extra="forbid")

    # нМ; в ядро идут в молях (× NANOMOLAR)
    concentrations: list[float] = Field(
        default_factory=lambda: [float(c) for c in np.geomspace(1214.0, 14571.0, 9)]
    )
    t0: float = 100.0
    t_inj: float = Field(default=300.0, gt=0)
    dt_delay: float = Field(default=0.0, ge=0)
    t_end: float = 1500.0
    n_times: int = Field(default=301, ge=2)
    # редкие узлы после t_end: без длинной диссоциации k_d ~ 1e-4..1e-3 неразличимы
    dissociation_tail: float = Field(default=10500.0, ge=0)
    n_tail: int = Field(default=100, ge=1)

    log_kd_range: tuple[float, float] = (-4.0, 0.0)
    log_ka_range: tuple[float, float] = (3.0, 7.0)
    n_kd: int = Field(default=40, ge=2)
    n_ka: int = Field(default=40, ge=2)

    peaks: list[SyntheticPeak] = Field(default_factory=lambda: [peak.model_copy() for peak in DEFAULT_PEAKS])
    include_minor_peak: bool = False
    peak_width: float = Field(default=0.25, gt=0)

    @field_validator("concentrations")
    @classmethod
    def _positive_concentrations(cls, value: list[float]) -> list[float]:
        if not value or any(c <= 0 or not math.isfinite(c) for c in value):
            raise ValueError("Все концентрации должны быть конечны и > 0")
        return value

    @field_validator("log_kd_range", "log_ka_range")
    @classmethod
    def _finite_range(cls, value: tuple[float, float]) -> tuple[float, float]:
        lo, hi = value
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo >= hi:
            raise ValueError("Диапазон должен быть конечным и lo < hi")
        return value

    @model_validator(mode="after")
    def _check_times(self) -> "BiosensorConfig":
        if self.t_end <= self.t0:
            raise ValueError("t_end должно быть больше t0")
        return self

    def molar_concentrations(self) -> np.ndarray:
        return np.asarray(self.concentrations, dtype=float) * NANOMOLAR

    def time_grid(self) -> np.ndarray:
        """Равномерная сетка до t_end и геометрический хвост до t_end + dissociation_tail"""
        dense = np.linspace(0.0, self.t_end, self.n_times)
        if self.dissociation_tail == 0:
            return dense
        tail = np.geomspace(self.t_end, self.t_end + self.dissociation_tail, self.n_tail + 1)[1:]
        return np.concatenate([dense, tail])

    def log_kd_grid(self) -> np.ndarray:
        return np.linspace(*self.log_kd_range, self.n_kd)

    def log_ka_grid(self) -> np.ndarray:
        return np.linspace(*self.log_ka_range, self.n_ka)

    def all_peaks(self) -> list[SyntheticPeak]:
        return list(self.peaks) + ([MINOR_PEAK] if self.include_minor_peak else [])


class ExperimentConfig(BaseModel):
    """
    Параметры одного запуска

    delta - относительный уровень шума данных: ‖y^δ - y‖ = delta·‖y‖.
    В прогонах по скорости deltas абсолютные; задача source по умолчанию
    нормирована на ‖A x†‖ = 1, и они же относительные. Для biosensor
    степенное Q заменяется спектральным ещё при разборе, до config_hash.
    """

    model_config = ConfigDict(extra="forbid")

    problem: Literal["toy", "source", "biosensor", "file"] = "toy"
    n: int = Field(default=100, ge=10)
    quadrature: Literal["midpoint", "trapezoid", "gauss"] = "midpoint"
    problem_file: Optional[str] = None
    biosensor: BiosensorConfig = Field(default_factory=BiosensorConfig)
    source: SourceConfig = Field(default_factory=SourceConfig)

    delta: float = Field(default=0.01, gt=0)
    qwiener: QWienerConfig = Field(default_factory=QWienerConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)

    scheme: Scheme = Scheme.MILD_LAW
    dt: float = Field(default=0.1, gt=0)
    rule: StoppingRule = StoppingRule.DISCREPANCY_CHI1
    tau: float = Field(default=DEFAULT_TAU, gt=1)
    t_end: Optional[float] = Field(default=None, ge=0)

    n_paths: int = Field(default=1000, ge=2)
    levels: list[float] = Field(default_factory=lambda: [0.70, 0.85])
    master_seed: Optional[int] = Field(default=None, ge=0)
    workers: Optional[int] = Field(default=None, ge=1)
    chunk_size: Optional[int] = Field(default=None, ge=1)
    output_dir: Optional[str] = None

    deltas: list[float] = Field(default_factory=lambda: [1e-2, 3e-3, 1e-3, 3e-4, 1e-4])
    fixed_direction: bool = False
    dts: list[float] = Field(default_factory=lambda: [0.1 * 2.0**-k for k in range(5)])
    order_t_end: float = Field(default=1.0, gt=0)

    moment_orders: list[int] = Field(default_factory=lambda: [2, 3, 4])
    peak_threshold: float = Field(default=0.05, gt=0, lt=1)

    @field_validator("levels")
    @classmethod
    def _levels_in_unit_interval(cls, value: list[float]) -> list[float]:
        if any(not 0 < level < 1 for level in value):
            raise ValueError("Уровни полос должны лежать в (0, 1)")
        return sorted(value)

    @field_validator("dts", "deltas")
    @classmethod
    def _positive(cls, value: list[float]) -> list[float]:
        if any(v <= 0 for v in value):
            raise ValueError("Значения должны быть > 0")
        return value

    @model_validator(mode="after")
    def _check_problem(self) -> "ExperimentConfig":
        if self.problem == "file" and not self.problem_file:
            raise ValueError("Для problem=file нужен problem_file")
        if self.problem == "biosensor" and self.qwiener.kind == QWienerKind.POWER:
            logger.info("Q: power заменён на spectral(β=%g) для экспоненциального спектра", BIOSENSOR_BETA)
            self.qwiener = QWienerConfig(kind=QWienerKind.SPECTRAL, c=self.qwiener.c, beta=BIOSENSOR_BETA)
        if self.rule == StoppingRule.DISCREPANCY_CHI2:
            family = self.source.build()
            if not self.schedule.build(family).is_decaying:
                raise ValueError("χ2 требует убывающего f(t)")
        return self

    # ---- сериализация ----

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        """Битый JSON даёт ValidationError (json_invalid), как и неверные поля"""
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.model_dump_json(indent=2))

    def merged(self, overrides: dict[str, Any]) -> "ExperimentConfig":
        """
        Новая конфигурация с переопределёнными полями

        None пропускаются; словари вложенных моделей дополняют, а не заменяют их.
        """
        data = self.model_dump(mode="json")
        for key, value in overrides.items():
            if value is None:
                continue
            if isinstance(value, dict) and isinstance(data.get(key), dict):
                data[key] = {**data[key], **value}
            else:
                data[key] = value
        return type(self).model_validate(data)

    def config_hash(self) -> str:
        """sha256 канонического JSON (без output_dir)"""
        payload = self.model_dump(mode="json", exclude={"output_dir"})
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

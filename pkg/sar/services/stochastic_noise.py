"""
Q-винеровский шум в базисе {u_j} и шум данных заданного уровня δ
"""
import logging
import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Optional

import numpy as np

from sar.exceptions import ConfigurationError, UnsupportedProblemError
from sar.services.index_functions import NormalizedStrEnum
from sar.services.spectral_operator import ForwardProblem

logger = logging.getLogger(__name__)

# Потоки одного master_seed: траектории СДУ и шум данных не пересекаются
PATH_STREAM = 0
DATA_STREAM = 1


class QWienerKind(NormalizedStrEnum):
    """Семейства собственных значений Q"""
    POWER = "power"  # q_j = c·j^{-α}
    SPECTRAL = "spectral"  # q_j = c·(σ_j/σ_1)^{2β}
    CUSTOM = "custom"


@dataclass(frozen=True)
class QWienerFamily:
    """Параметры семейства ковариации"""

    kind: QWienerKind
    c: float = 1.0
    alpha: float = 6.0
    beta: float = 2.0
    values: Optional[tuple[float, ...]] = None

    @classmethod
    def power(cls, alpha: float, c: float = 1.0) -> "QWienerFamily":
        return cls(QWienerKind.POWER, c=c, alpha=alpha)

    @classmethod
    def spectral(cls, beta: float, c: float = 1.0) -> "QWienerFamily":
        return cls(QWienerKind.SPECTRAL, c=c, beta=beta)

    @classmethod
    def custom(cls, values) -> "QWienerFamily":
        return cls(QWienerKind.CUSTOM, values=tuple(float(v) for v in values))


@dataclass(frozen=True)
class QWienerSpec:
    """
    Собственные значения Q на сохранённых модах

    trace_weighted = Σ q_j/σ_j² = tr(Q(A*A)^{-1}), конечен по построению.
    """

    q: np.ndarray
    trace_weighted: float
    growth_rate: float = 0.0

    @property
    def rank(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class RngLineage:
    """
    Происхождение случайных чисел одной траектории

    (master_seed, stream, path_index) задают ключ Philox, step_counter - его
    счётчик, поэтому поток шага не зависит от порядка вычисления траекторий.
    """

    master_seed: int
    path_index: int
    step_counter: int = 0
    stream: int = PATH_STREAM

    def advance(self, steps: int = 1) -> "RngLineage":
        return replace(self, step_counter=self.step_counter + steps)

    def generator(self) -> np.random.Generator:
        key = _philox_key(self.master_seed, self.stream, self.path_index)
        counter = np.array([0, self.step_counter, 0, 0], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


@lru_cache(maxsize=65536)
def _philox_key(master_seed: int, stream: int, path_index: int) -> np.ndarray:
    sequence = np.random.SeedSequence([master_seed, stream, path_index])
    return sequence.generate_state(2, dtype=np.uint64)


def standard_normals(lineage: RngLineage, size: int) -> np.ndarray:
    """Стандартные нормальные числа шага lineage.step_counter"""
    return lineage.generator().standard_normal(size)


def batch_normals(lineages, size: int) -> np.ndarray:
    """Матрица (len(lineages), size) - по строке на траекторию"""
    return np.stack([standard_normals(lineage, size) for lineage in lineages])


def _partial_sum_growth(terms: np.ndarray) -> float:
    """
    Показатель роста частичных сумм относительно log k

    g = log(S_r / S_{r/2}) / log(log r / log(r/2)); g ≤ 1 для сходящихся и
    логарифмически растущих рядов.
    """
    r = terms.size
    if r < 8:
        return 0.0
    sums = np.cumsum(terms)
    half = r // 2
    if sums[half - 1] <= 0 or sums[-1] <= 0:
        return 0.0
    return math.log(sums[-1] / sums[half - 1]) / math.log(math.log(r) / math.log(half))


def make_qwiener(p: ForwardProblem, family: QWienerFamily) -> QWienerSpec:
    """
    Построить Q для задачи и проверить след tr(Q(A*A)^{-1})

    Raises:
        ConfigurationError: Ряд Σ q_j/σ_j² растёт быстрее логарифма
    """
    j = np.arange(1, p.rank + 1, dtype=float)

    if family.kind == QWienerKind.POWER:
        if family.c < 0:
            raise ConfigurationError("c должно быть >= 0")
        q = family.c * j ** (-family.alpha)
    elif family.kind == QWienerKind.SPECTRAL:
        if family.beta <= 1:
            raise ConfigurationError("β должно быть > 1, иначе Σ q_j/σ_j² не убывает")
        q = family.c * (p.singular_values / p.norm) ** (2.0 * family.beta)
    else:
        values = np.asarray(family.values or (), dtype=float)
        if values.size > p.rank:
            raise ConfigurationError(f"Задано {values.size} значений q, а мод только {p.rank}")
        q = np.zeros(p.rank)
        q[: values.size] = values

    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ConfigurationError("Все q_j должны быть конечны и >= 0")

    terms = q / p.eigenvalues
    trace = float(np.sum(terms))
    growth = _partial_sum_growth(terms)

    if not math.isfinite(trace) or growth > 1.0:
        raise ConfigurationError(
            f"След tr(Q(A*A)^-1) расходится: частичные суммы растут с показателем {growth:.3f} "
            f"относительно log k"
        )

    logger.debug("Q: %s, tr(Q(A*A)^-1)=%.6g", family.kind.value, trace)
    return QWienerSpec(q=q, trace_weighted=trace, growth_rate=growth)


def sample_increment(spec: QWienerSpec, lineage: RngLineage, dt: float) -> np.ndarray:
    """ΔB_j = √(q_j Δt)·ξ_j - приращение в координатах мод"""
    if dt <= 0:
        raise ConfigurationError("Δt должно быть > 0")
    return np.sqrt(spec.q * dt) * standard_normals(lineage, spec.rank)


def inject_data_noise(p: ForwardProblem, delta: float, lineage: RngLineage) -> np.ndarray:
    """
    y^δ = y + δ·e/‖e‖ - детерминированная модель шума, ровно ‖y^δ - y‖ = δ

    Args:
        p: Задача с y_exact
        delta: Абсолютный уровень шума
        lineage: Поток случайных чисел (stream подменяется на DATA_STREAM)
    """
    if p.y_exact is None:
        raise UnsupportedProblemError("Для шума данных нужен y_exact")
    if delta < 0:
        raise ConfigurationError("δ должно быть >= 0")
    if delta == 0:
        return np.array(p.y_exact)

    lineage = replace(lineage, stream=DATA_STREAM)
    while True:
        direction = standard_normals(lineage, p.m)
        norm = p.range_norm(direction)
        if norm > 0:
            break
        lineage = lineage.advance()
    return p.y_exact + delta * direction / norm

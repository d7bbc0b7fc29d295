"""
Ансамбли траекторий: моменты, квантильные полосы, MSE и карты моментов
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import ndimage

from sar.exceptions import ConfigurationError, NumericalError
from sar.services.integrators import (
    SarState,
    Scheme,
    analytic_mode_variance,
    sample_mild_law,
    simulate,
)
from sar.services.schedules import NoiseSchedule
from sar.services.spectral_operator import ForwardProblem
from sar.services.stochastic_noise import QWienerSpec, RngLineage

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.70, 0.85)
MAX_EXCLUDED_FRACTION = 1e-3
MAX_MOMENT_ORDER = 4
PEAK_THRESHOLD = 0.05


# ---- накопитель моментов ----

@dataclass
class MomentAccumulator:
    """
    Центральные суммы M_k = Σ (x - mean)^k, k ≤ 4, по каждому узлу

    Слияние двух накопителей - формулы Пебэя; результат не зависит от
    разбиения на порции, если дерево слияния фиксировано.
    """

    count: int
    mean: np.ndarray
    m2: np.ndarray
    m3: np.ndarray
    m4: np.ndarray

    @classmethod
    def empty(cls, size: int) -> "MomentAccumulator":
        zeros = np.zeros(size)
        return cls(0, zeros.copy(), zeros.copy(), zeros.copy(), zeros.copy())

    @classmethod
    def from_batch(cls, values: np.ndarray) -> "MomentAccumulator":
        values = np.atleast_2d(values)
        if values.shape[0] == 0:
            return cls.empty(values.shape[1])
        mean = values.mean(axis=0)
        centered = values - mean
        squared = centered**2
        return cls(
            count=values.shape[0],
            mean=mean,
            m2=squared.sum(axis=0),
            m3=(squared * centered).sum(axis=0),
            m4=(squared**2).sum(axis=0),
        )

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        na, nb = float(self.count), float(other.count)
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * nb / n
        m2 = self.m2 + other.m2 + delta**2 * na * nb / n
        m3 = (
            self.m3 + other.m3
            + delta**3 * na * nb * (na - nb) / n**2
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n
        )
        m4 = (
            self.m4 + other.m4
            + delta**4 * na * nb * (na**2 - na * nb + nb**2) / n**3
            + 6.0 * delta**2 * (na**2 * other.m2 + nb**2 * self.m2) / n**2
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n
        )
        return MomentAccumulator(self.count + other.count, mean, m2, m3, m4)

    def central(self, order: int) -> np.ndarray:
        """Популяционный центральный момент (деление на N)"""
        if order == 1:
            return np.zeros_like(self.mean)
        sums = {2: self.m2, 3: self.m3, 4: self.m4}[order]
        return sums / self.count

    def raw(self, order: int) -> np.ndarray:
        """E x^k через центральные моменты"""
        mu = self.mean
        if order == 1:
            return mu.copy()
        c2, c3, c4 = self.central(2), self.central(3), self.central(4)
        if order == 2:
            return c2 + mu**2
        if order == 3:
            return c3 + 3.0 * mu * c2 + mu**3
        return c4 + 4.0 * mu * c3 + 6.0 * mu**2 * c2 + mu**4


def merge_tree(parts: Sequence[MomentAccumulator]) -> MomentAccumulator:
    """Попарное слияние в фиксированном порядке индексов порций"""
    if not parts:
        raise ValueError("Нечего сливать")
    level = list(parts)
    while len(level) > 1:
        merged = [level[i].merge(level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            merged.append(level[-1])
        level = merged
    return level[0]


# ---- статистика ансамбля ----

@dataclass
class EnsembleStats:
    """Сводка ансамбля в момент t_end"""

    n_paths: int
    excluded: int
    t_end: float
    mean: np.ndarray
    variance: np.ndarray
    m3: np.ndarray
    m4: np.ndarray
    bands: dict[float, tuple[np.ndarray, np.ndarray]]
    mse_vs_truth: Optional[float]
    mse_stderr: Optional[float]
    bias_squared: Optional[float]
    variance_trace: float
    grid_shape: tuple[int, ...]
    accumulator: MomentAccumulator = field(repr=False)
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def band(self, level: float) -> tuple[np.ndarray, np.ndarray]:
        for key, value in self.bands.items():
            if math.isclose(key, level):
                return value
        raise KeyError(f"Полоса {level} не вычислялась")

    def coverage(self, reference: np.ndarray, level: float) -> float:
        """Доля узлов, где reference внутри полосы"""
        lower, upper = self.band(level)
        return float(np.mean((reference >= lower) & (reference <= upper)))

    def to_frame(self, grid: Optional[np.ndarray] = None, truth: Optional[np.ndarray] = None) -> pd.DataFrame:
        """Таблица по узлам: mean, variance, m3, m4, lower_/upper_ уровни"""
        frame = pd.DataFrame({"node": np.arange(self.mean.size)})
        if grid is not None:
            frame["grid"] = grid
        frame["mean"] = self.mean
        frame["variance"] = self.variance
        frame["m3"] = self.m3
        frame["m4"] = self.m4
        for level, (lower, upper) in sorted(self.bands.items()):
            tag = f"{round(level * 100):d}"
            frame[f"lower_{tag}"] = lower
            frame[f"upper_{tag}"] = upper
        if truth is not None:
            frame["x_true"] = truth
        return frame

    def summary(self) -> dict:
        return {
            "n_paths": self.n_paths,
            "excluded": self.excluded,
            "t_end": self.t_end,
            "mse_vs_truth": self.mse_vs_truth,
            "mse_stderr": self.mse_stderr,
            "bias_squared": self.bias_squared,
            "variance_trace": self.variance_trace,
        }


@dataclass(frozen=True)
class _ChunkResult:
    index: int
    accumulator: MomentAccumulator
    values: Optional[np.ndarray]
    errors: Optional[np.ndarray]
    excluded: int


def _validate_levels(levels: Sequence[float]) -> tuple[float, ...]:
    levels = tuple(sorted(float(level) for level in levels))
    if any(not 0 < level < 1 for level in levels):
        raise ConfigurationError("Уровни полос должны лежать в (0, 1)")
    return levels


def _chunk_bounds(n_paths: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(start, min(start + chunk_size, n_paths)) for start in range(0, n_paths, chunk_size)]


def run_ensemble(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    scheme: Scheme,
    dt: float,
    t_end: float,
    n_paths: int,
    levels: Sequence[float] = DEFAULT_LEVELS,
    master_seed: int = 0,
    workers: int = 1,
    chunk_size: int = 250,
    keep_samples: bool = True,
) -> EnsembleStats:
    """
    Запустить n_paths траекторий до t_end и собрать статистику

    Траектория i использует RngLineage(master_seed, i); порции фиксированы
    по индексам траекторий, поэтому результат побитово не зависит от workers.

    Args:
        scheme: Пошаговая схема или mild_law (выборка из точного закона)
        levels: Уровни квантильных полос
        keep_samples: Сохранить значения всех траекторий в stats.samples

    Raises:
        NumericalError: Нечисловых траекторий больше 0.1%
    """
    scheme = Scheme(scheme)
    levels = _validate_levels(levels)
    if n_paths < 2:
        raise ConfigurationError("n_paths должно быть >= 2")
    if workers < 1 or chunk_size < 1:
        raise ConfigurationError("workers и chunk_size должны быть >= 1")
    if t_end < 0:
        raise ConfigurationError("t_end должно быть >= 0")

    x0 = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    y_delta = np.asarray(y_delta, dtype=float)
    need_values = bool(levels) or keep_samples
    variance = analytic_mode_variance(p, spec, sched, t_end) if scheme == Scheme.MILD_LAW else None

    def run_chunk(index: int, start: int, stop: int) -> _ChunkResult:
        lineages = [RngLineage(master_seed, path) for path in range(start, stop)]
        if scheme == Scheme.MILD_LAW:
            state = sample_mild_law(p, spec, sched, y_delta, x0, t_end, lineages, variance=variance)
        else:
            state = simulate(SarState.initial(p, y_delta, x0, lineages), p, spec, sched, scheme, dt, t_end)
        values = state.values(p)
        finite = np.all(np.isfinite(values), axis=1)
        excluded = int(np.count_nonzero(~finite))
        if excluded:
            logger.warning("⚠️ Порция %d: исключено %d нечисловых траекторий", index, excluded)
        values = values[finite]
        errors = None
        if p.x_true is not None:
            errors = np.sum((values - p.x_true) ** 2 * p.quadrature_weights_domain, axis=1)
        return _ChunkResult(
            index=index,
            accumulator=MomentAccumulator.from_batch(values),
            values=values if need_values else None,
            errors=errors,
            excluded=excluded,
        )

    bounds = _chunk_bounds(n_paths, chunk_size)
    logger.info(
        "🚀 Ансамбль: %d траекторий, схема %s, t_end=%.6g, порций %d, потоков %d",
        n_paths, scheme.value, t_end, len(bounds), workers,
    )
    if workers == 1:
        results = [run_chunk(i, start, stop) for i, (start, stop) in enumerate(bounds)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_chunk, i, start, stop) for i, (start, stop) in enumerate(bounds)]
            results = [future.result() for future in futures]
    results.sort(key=lambda result: result.index)

    excluded = sum(result.excluded for result in results)
    if excluded > MAX_EXCLUDED_FRACTION * n_paths:
        raise NumericalError(f"Исключено {excluded} из {n_paths} траекторий (> 0.1%)")

    accumulator = merge_tree([result.accumulator for result in results])
    if accumulator.count < 2:
        raise NumericalError("Осталось меньше двух конечных траекторий")

    samples = np.concatenate([result.values for result in results]) if need_values else None
    bands = {}
    for level in levels:
        lower, upper = np.quantile(samples, [(1.0 - level) / 2.0, (1.0 + level) / 2.0], axis=0)
        bands[level] = (lower, upper)

    variance_field = np.maximum(accumulator.central(2), 0.0)
    weights = p.quadrature_weights_domain
    mse = stderr = bias = None
    if p.x_true is not None:
        errors = np.concatenate([result.errors for result in results])
        mse = float(np.mean(errors))
        stderr = float(np.std(errors, ddof=1) / math.sqrt(errors.size))
        bias = float(np.sum(weights * (accumulator.mean - p.x_true) ** 2))

    stats = EnsembleStats(
        n_paths=accumulator.count,
        excluded=excluded,
        t_end=t_end,
        mean=accumulator.mean,
        variance=variance_field,
        m3=accumulator.central(3),
        m4=accumulator.central(4),
        bands=bands,
        mse_vs_truth=mse,
        mse_stderr=stderr,
        bias_squared=bias,
        variance_trace=float(np.sum(weights * variance_field)),
        grid_shape=tuple(p.domain_shape),
        accumulator=accumulator,
        samples=samples if keep_samples else None,
    )
    logger.info("✅ Ансамбль готов: MSE=%s, след дисперсии %.6g", mse, stats.variance_trace)
    return stats


# ---- карты моментов и пики ----

@dataclass(frozen=True)
class Peak:
    index: tuple[int, ...]
    value: float


@dataclass(frozen=True)
class MomentMap:
    order: int
    kind: str
    field: np.ndarray
    peaks: tuple[Peak, ...]


def _neighbour_offsets(ndim: int) -> np.ndarray:
    """Сдвиги к 3^d - 1 соседям узла"""
    footprint = ndimage.generate_binary_structure(ndim, ndim)
    footprint[(1,) * ndim] = False
    return np.argwhere(footprint) - 1


def peak_prominences(values: np.ndarray) -> dict[tuple[int, ...], float]:
    """
    Заметность пиков: высота над самой высокой седловиной к более высокому пику

    Узлы обходятся по убыванию значения, компоненты склеиваются по 3^d
    соседям. При слиянии младший пик получает заметность «высота минус
    текущий уровень». Плато даёт одну компоненту, её пик - первый узел
    плато в порядке обхода. Глобальный максимум отсчитывается от минимума поля.
    """
    values = np.asarray(values, dtype=float)
    shape = values.shape
    flat = values.ravel()
    if flat.size == 0:
        return {}
    offsets = _neighbour_offsets(values.ndim)
    parent = np.full(flat.size, -1, dtype=np.intp)
    summits: dict[int, int] = {}  # корень компоненты -> её пик
    prominence: dict[int, float] = {}

    def root(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = int(parent[i])
        return i

    for i in np.argsort(-flat, kind="stable"):
        i = int(i)
        neighbours = np.asarray(np.unravel_index(i, shape)) + offsets
        inside = np.all((neighbours >= 0) & (neighbours < np.asarray(shape)), axis=1)
        indices = np.ravel_multi_index(tuple(neighbours[inside].T), shape)
        roots = {root(int(j)) for j in indices if parent[j] >= 0}
        parent[i] = i
        if not roots:
            summits[i] = i
            continue
        ranked = sorted(roots, key=lambda r: (-flat[summits[r]], summits[r]))
        keep = ranked[0]
        for other in ranked[1:]:
            summit = summits.pop(other)
            prominence[summit] = float(flat[summit] - flat[i])
            parent[other] = keep
        parent[i] = keep

    floor = float(flat.min())
    for summit in summits.values():
        prominence[summit] = float(flat[summit]) - floor
    return {tuple(int(k) for k in np.unravel_index(s, shape)): value for s, value in prominence.items()}


def find_peaks(values: np.ndarray, threshold: float = PEAK_THRESHOLD) -> tuple[Peak, ...]:
    """
    Пики с заметностью не меньше threshold·max по 8 соседям (3^d в общем случае)

    Склон, поднимающийся к краю сетки от более высокого пика, пиком не считается:
    его заметность - лишь подъём над седловиной.

    Returns:
        Пики по убыванию значения
    """
    values = np.asarray(values, dtype=float)
    top = float(np.max(values)) if values.size else 0.0
    if top <= 0:
        return ()
    peaks = [
        Peak(index, float(values[index]))
        for index, prominence in peak_prominences(values).items()
        if prominence >= threshold * top
    ]
    return tuple(sorted(peaks, key=lambda peak: (-peak.value, peak.index)))


def moment_maps(
    stats: EnsembleStats,
    order: int,
    kind: str = "central",
    threshold: float = PEAK_THRESHOLD,
) -> MomentMap:
    """
    Поле момента порядка order на сетке решения и список пиков

    kind="central" - центральные моменты, kind="raw" - E x^k.
    """
    if not 1 <= order <= MAX_MOMENT_ORDER:
        raise ConfigurationError(f"Порядок {order} вне накопленных 1..{MAX_MOMENT_ORDER}")
    if kind == "central":
        values = stats.accumulator.central(order)
        if order == 2:
            values = stats.variance
    elif kind == "raw":
        values = stats.accumulator.raw(order)
    else:
        raise ConfigurationError(f"Неизвестный вид момента: {kind}")

    field_values = np.asarray(values).reshape(stats.grid_shape)
    return MomentMap(order=order, kind=kind, field=field_values, peaks=find_peaks(field_values, threshold))

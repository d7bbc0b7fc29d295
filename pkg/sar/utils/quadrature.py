"""
Составная квадратура Гаусса-Лежандра с удвоением числа панелей
"""
import logging
import math
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import roots_legendre

from sar.exceptions import NumericalError

logger = logging.getLogger(__name__)


@lru_cache(maxsize=16)
def _legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(order)
    return nodes, weights


def graded_edges(a: float, b: float, resolution: float) -> np.ndarray:
    """
    Границы панелей, геометрически сгущённые к обоим концам [a, b]

    Ширина крайних панелей не больше resolution. Подынтегральные функции
    дисперсии имеют масштаб 1/(2σ²) у правого конца и масштаб f у левого.
    """
    length = b - a
    if resolution <= 0 or resolution >= length:
        return np.array([a, b])
    levels = int(math.ceil(math.log2(length / resolution)))
    offsets = length * 2.0 ** -np.arange(1, levels + 1)
    edges = np.concatenate(([a, b], a + offsets, b - offsets))
    return np.unique(edges)


def _refine(edges: np.ndarray) -> np.ndarray:
    mids = 0.5 * (edges[:-1] + edges[1:])
    refined = np.empty(edges.size + mids.size)
    refined[0::2] = edges
    refined[1::2] = mids
    return refined


def composite_gauss_legendre(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Узлы и веса составного правила на панелях с границами edges"""
    nodes, weights = _legendre_rule(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    points = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    scaled = (half[:, None] * weights[None, :]).ravel()
    return points, scaled


def integrate_doubling(
    integrand: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    order: int = 16,
    rtol: float = 1e-9,
    resolution: float | None = None,
    max_refinements: int = 6,
) -> np.ndarray:
    """
    Интеграл векторной функции с удвоением панелей до относительного изменения < rtol

    Args:
        integrand: s -> массив формы (k, len(s)), по одной строке на интеграл
        a, b: Пределы интегрирования
        order: Число узлов Гаусса на панель
        rtol: Порог относительного изменения (по каждой компоненте)
        resolution: Ширина крайних панелей стартовой сетки (None - одна панель)
        max_refinements: Предел числа удвоений

    Returns:
        Вектор интегралов формы (k,)
    """
    if b <= a:
        sample = np.atleast_2d(integrand(np.array([a])))
        return np.zeros(sample.shape[0])

    edges = graded_edges(a, b, resolution) if resolution else np.array([a, b])
    points, weights = composite_gauss_legendre(edges, order)
    previous = np.atleast_2d(integrand(points)) @ weights
    change = math.inf

    for _ in range(max_refinements):
        edges = _refine(edges)
        points, weights = composite_gauss_legendre(edges, order)
        current = np.atleast_2d(integrand(points)) @ weights
        scale = np.maximum(np.abs(current), 1e-300)
        change = float(np.max(np.abs(current - previous) / scale))
        logger.debug("Панелей: %d, относительное изменение %.3e", edges.size - 1, change)
        if change < rtol:
            return current
        previous = current

    raise NumericalError(
        f"Квадратура не сошлась на [{a:.6g}, {b:.6g}]: изменение {change:.3e}",
        achieved_tolerance=change,
    )

"""
Встроенные задачи: модельное уравнение с ядром Грина и томография биосенсора
"""
import logging
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial

from sar.exceptions import ConfigurationError, DomainError
from sar.schemas import BiosensorConfig, SourceConfig
from sar.services.spectral_operator import ForwardProblem, discretize_kernel, source_condition_solution

logger = logging.getLogger(__name__)

TOY_MIN_SIZE = 10


# ---- модельная задача ----

def green_kernel(s, t) -> np.ndarray:
    """K(s,t) = s(1-t) при s ≤ t, t(1-s) при s > t"""
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    return np.where(s <= t, s * (1.0 - t), t * (1.0 - s))


def toy_data_polynomial() -> Polynomial:
    """y(s) = s⁴(1-s)³"""
    return Polynomial([0, 0, 0, 0, 1]) * Polynomial([1, -1]) ** 3


def toy_solution_polynomial() -> Polynomial:
    """x† = -y''; ядро Грина обращает -d²/ds² с нулевыми краевыми условиями"""
    return -toy_data_polynomial().deriv(2)


def toy_solution(t) -> np.ndarray:
    """x†(t) = -6t²(1-t)(2-8t+7t²)"""
    t = np.asarray(t, dtype=float)
    return -6.0 * t**2 * (1.0 - t) * (2.0 - 8.0 * t + 7.0 * t**2)


def toy_data(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    return s**4 * (1.0 - s) ** 3


def make_toy_problem(n: int, rule: str = "midpoint") -> ForwardProblem:
    """
    Уравнение ∫₀¹ K(s,t) x(t) dt = y(s) на n узлах

    x_true и y_exact берутся из замкнутых формул (не A x†), поэтому
    ‖A x† - y‖ отражает ошибку дискретизации.
    """
    if n < TOY_MIN_SIZE:
        raise ConfigurationError(f"n должно быть >= {TOY_MIN_SIZE}")
    p = discretize_kernel(green_kernel, n, n, rule=rule, name="toy")
    p = p.with_solution(toy_solution(p.grid_domain), toy_data(p.grid_range))
    logger.debug("toy n=%d: σ_1=%.8f (1/π²=%.8f)", n, p.norm, 1.0 / np.pi**2)
    return p


def make_source_problem(n: int, source: SourceConfig, rule: str = "midpoint") -> ForwardProblem:
    """
    Оператор модельной задачи с x†, удовлетворяющим условию истокообразности

    При заданном source.data_norm x† масштабируется так, что ‖A x†‖ = data_norm:
    тогда абсолютный δ совпадает с относительным. Итоговое ‖v‖ = ρ·масштаб.
    """
    if n < TOY_MIN_SIZE:
        raise ConfigurationError(f"n должно быть >= {TOY_MIN_SIZE}")
    p = discretize_kernel(green_kernel, n, n, rule=rule, name="source")
    p = source_condition_solution(p, source.build(), source.rho, seed=source.seed)
    if source.data_norm is None:
        return p
    # x0 = 0, поэтому x† линеен по ρ
    scale = source.data_norm / p.range_norm(p.y_exact)
    logger.info("Источник: ‖A x†‖ = %.3g, эффективное ρ = %.4g", source.data_norm, source.rho * scale)
    return p.with_solution(p.x_true * scale)


# ---- биосенсор ----

def biosensor_kernel(t, concentration, k_a, k_d, cfg: BiosensorConfig) -> np.ndarray:
    """
    Отклик комплекса с константами (k_a, k_d) на концентрацию C

    Фаза ассоциации берёт t - t0, фаза диссоциации - t_inj без задержки Δt;
    при Δt > 0 на переключении t0 + t_inj + Δt возникает скачок.
    """
    t, concentration, k_a, k_d = np.broadcast_arrays(
        np.asarray(t, dtype=float),
        np.asarray(concentration, dtype=float),
        np.asarray(k_a, dtype=float),
        np.asarray(k_d, dtype=float),
    )
    if np.any(k_a <= 0) or np.any(k_d <= 0) or np.any(concentration <= 0):
        raise DomainError("k_a, k_d и C должны быть > 0")

    observed = k_d + k_a * concentration
    plateau = k_a * concentration / observed
    start = cfg.t0 + cfg.dt_delay
    switch = cfg.t0 + cfg.t_inj + cfg.dt_delay

    elapsed = np.maximum(t - cfg.t0, 0.0)
    association = plateau * -np.expm1(-observed * elapsed)
    dissociation = plateau * -np.expm1(-observed * cfg.t_inj) * np.exp(-k_d * (t - cfg.t0 - cfg.t_inj))

    return np.where(t <= start, 0.0, np.where(t <= switch, association, dissociation))


def kernel_phase_jump(concentration: float, k_a: float, k_d: float, cfg: BiosensorConfig) -> float:
    """K(switch+) - K(switch) на переключении фаз; ноль при Δt = 0"""
    switch = cfg.t0 + cfg.t_inj + cfg.dt_delay
    observed = k_d + k_a * concentration
    plateau = k_a * concentration / observed
    before = plateau * -np.expm1(-observed * (switch - cfg.t0))
    after = plateau * -np.expm1(-observed * cfg.t_inj) * np.exp(-k_d * (switch - cfg.t0 - cfg.t_inj))
    return float(after - before)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Веса составной формулы трапеций на (возможно неравномерной) сетке"""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 1:
        return np.ones(1)
    steps = np.diff(grid)
    weights = np.zeros(grid.size)
    weights[:-1] += 0.5 * steps
    weights[1:] += 0.5 * steps
    return weights


def rate_grid(cfg: BiosensorConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Узлы (log10 k_d, log10 k_a) и веса, развёрнутые по k_d (k_d - внешний индекс)

    Returns:
        (log_kd, log_ka, weights) длины n_kd·n_ka
    """
    log_kd, log_ka = np.meshgrid(cfg.log_kd_grid(), cfg.log_ka_grid(), indexing="ij")
    weights = np.outer(trapezoid_weights(cfg.log_kd_grid()), trapezoid_weights(cfg.log_ka_grid()))
    return log_kd.ravel(), log_ka.ravel(), weights.ravel()


def _observation_rows(cfg: BiosensorConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Строки (C_i, t_k), концентрация - внешний индекс; веса - трапеции по t"""
    times = cfg.time_grid()
    concentrations = cfg.molar_concentrations()
    row_c = np.repeat(concentrations, times.size)
    row_t = np.tile(times, concentrations.size)
    row_w = np.tile(trapezoid_weights(times), concentrations.size)
    return row_c, row_t, row_w


def synthetic_rate_map(cfg: BiosensorConfig, log_kd=None, log_ka=None) -> np.ndarray:
    """Сумма изотропных гауссовых пиков ширины peak_width декад"""
    if log_kd is None or log_ka is None:
        log_kd, log_ka, _ = rate_grid(cfg)
    values = np.zeros_like(np.asarray(log_kd, dtype=float))
    for peak in cfg.all_peaks():
        distance = (log_kd - peak.log_kd) ** 2 + (log_ka - peak.log_ka) ** 2
        values = values + peak.amplitude * np.exp(-distance / (2.0 * cfg.peak_width**2))
    return values


def make_biosensor_problem(cfg: BiosensorConfig, with_truth: bool = True) -> ForwardProblem:
    """
    Дискретная модель R_obs(t; C) = ∫ K(t, C; k_a, k_d) x(k_a, k_d)

    Неизвестная карта задана на логарифмических координатах; строки
    матрицы - пары (C_i, t_k) по всем концентрациям.

    Args:
        cfg: Параметры эксперимента
        with_truth: Задать x_true как синтетическую карту с пиками
    """
    log_kd, log_ka, weights = rate_grid(cfg)
    row_c, row_t, row_w = _observation_rows(cfg)

    kernel = biosensor_kernel(
        row_t[:, None], row_c[:, None], 10.0 ** log_ka[None, :], 10.0 ** log_kd[None, :], cfg
    )
    matrix = kernel * weights[None, :]

    if cfg.dt_delay > 0:
        jump = kernel_phase_jump(float(row_c.max()), 10.0 ** float(log_ka.max()), 10.0 ** float(log_kd.max()), cfg)
        logger.warning("⚠️ Ядро разрывно на t0+t_inj+Δt: скачок до %.3e", jump)

    try:
        p = ForwardProblem.from_matrix(
            matrix,
            weights,
            row_w,
            grid_domain=np.arange(weights.size, dtype=float),
            grid_range=row_t,
            name="biosensor",
            domain_shape=(cfg.n_kd, cfg.n_ka),
        )
    except DomainError as error:
        raise ConfigurationError(f"Вырожденный оператор биосенсора: {error}") from error

    logger.info(
        "Биосенсор: %d строк × %d узлов, ранг %d, σ_1=%.4g, σ_r=%.3e",
        p.m, p.n, p.rank, p.norm, p.singular_values[-1],
    )
    if with_truth:
        p = p.with_solution(synthetic_rate_map(cfg, log_kd, log_ka))
    return p


def nearest_node(cfg: BiosensorConfig, log_kd: float, log_ka: float) -> tuple[int, int]:
    """Индекс узла сетки констант, ближайшего к точке"""
    i = int(np.argmin(np.abs(cfg.log_kd_grid() - log_kd)))
    j = int(np.argmin(np.abs(cfg.log_ka_grid() - log_ka)))
    return i, j


def peak_report(cfg: BiosensorConfig, peaks) -> list[dict]:
    """Пики карты в координатах (log10 k_d, log10 k_a) и расстояние до ближайшего истинного"""
    kd_grid, ka_grid = cfg.log_kd_grid(), cfg.log_ka_grid()
    truth = [nearest_node(cfg, peak.log_kd, peak.log_ka) for peak in cfg.all_peaks()]
    rows = []
    for peak in peaks:
        i, j = peak.index
        cells: Optional[int] = None
        if truth:
            cells = min(max(abs(i - ti), abs(j - tj)) for ti, tj in truth)
        rows.append(
            {
                "i_kd": i,
                "i_ka": j,
                "log_kd": float(kd_grid[i]),
                "log_ka": float(ka_grid[j]),
                "value": peak.value,
                "cells_to_truth": cells,
            }
        )
    return rows


def truth_recovery(cfg: BiosensorConfig, peaks) -> list[Optional[int]]:
    """Для каждого истинного пика - расстояние в клетках до ближайшего найденного"""
    found = [peak.index for peak in peaks]
    distances: list[Optional[int]] = []
    for truth in cfg.all_peaks():
        ti, tj = nearest_node(cfg, truth.log_kd, truth.log_ka)
        distances.append(min((max(abs(i - ti), abs(j - tj)) for i, j in found), default=None))
    return distances

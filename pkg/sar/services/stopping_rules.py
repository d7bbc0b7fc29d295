"""
Правила останова: априорное t* = Θ^{-1}(δ), два стохастических принципа
невязки и балансовое время t_δ
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from sar.exceptions import ConfigurationError, NumericalError, StoppingError, UnsupportedProblemError
from sar.services.index_functions import NormalizedStrEnum, SourceFamily
from sar.services.integrators import (
    SarState,
    analytic_mode_variance,
    sample_mild_law,
)
from sar.services.schedules import NoiseSchedule
from sar.services.spectral_operator import ForwardProblem, apply_forward, spectral_coefficients
from sar.services.stochastic_noise import QWienerSpec, RngLineage
from sar.utils.rootfinding import find_crossing

logger = logging.getLogger(__name__)

DEFAULT_TAU = 1.1


class StoppingRule(NormalizedStrEnum):
    """Правила выбора t*"""
    A_PRIORI = "a_priori"
    DISCREPANCY_CHI1 = "discrepancy_chi1"
    DISCREPANCY_CHI2 = "discrepancy_chi2"
    BALANCE = "balance"

    @classmethod
    def _missing_(cls, value):  # type: ignore[override]
        aliases = {"chi1": "discrepancy_chi1", "chi2": "discrepancy_chi2", "apriori": "a_priori"}
        if isinstance(value, str) and value.lower() in aliases:
            return cls(aliases[value.lower()])
        return super()._missing_(value)


class StopFlag(NormalizedStrEnum):
    """Особые исходы"""
    IMMEDIATE_STOP = "immediate_stop"  # ‖A x0 - y^δ‖ ≤ τδ
    BELOW_T_MIN = "below_t_min"  # δ ≥ Θ(t_min)
    DEGENERATE = "degenerate"  # E‖x(t) - x†‖ = 0
    SPECTRAL_WINDOW_EXCEEDED = "spectral_window_exceeded"  # σ_r² t* > 1


@dataclass(frozen=True)
class StoppingOutcome:
    """Итог правила: t*, невязка, число вычислений и финальная скобка"""

    rule: StoppingRule
    t_star: float
    residual_at_stop: float
    evaluations: int
    bracket: tuple[float, float]
    flag: Optional[StopFlag] = None

    def as_record(self) -> dict:
        return {
            "rule": self.rule.value,
            "t_star": self.t_star,
            "residual_at_stop": self.residual_at_stop,
            "evaluations": self.evaluations,
            "bracket_lo": self.bracket[0],
            "bracket_hi": self.bracket[1],
            "flag": self.flag.value if self.flag else "",
        }


def default_t_max(p: ForwardProblem) -> float:
    """1e8/σ_1² - дальше конечномерная модель не описывает исходную задачу"""
    return 1e8 / p.eigenvalues[0]


def default_t_start(p: ForwardProblem) -> float:
    return 1e-2 / p.eigenvalues[0]


def spectral_window_exceeded(p: ForwardProblem, t_star: float) -> bool:
    """t* выталкивает спектральное окно за наименьшее σ_r²"""
    return p.eigenvalues[-1] * t_star > 1.0


def _with_window_check(p: ForwardProblem, outcome: StoppingOutcome) -> StoppingOutcome:
    if outcome.flag is None and spectral_window_exceeded(p, outcome.t_star):
        logger.warning(
            "⚠️ t*=%.4g выходит за разрешённый спектр (σ_r²t* = %.3g)",
            outcome.t_star, p.eigenvalues[-1] * outcome.t_star,
        )
        return StoppingOutcome(
            outcome.rule, outcome.t_star, outcome.residual_at_stop,
            outcome.evaluations, outcome.bracket, StopFlag.SPECTRAL_WINDOW_EXCEEDED,
        )
    return outcome


# ---- априорное правило ----

def a_priori_time(
    family: SourceFamily,
    delta: float,
    t_min: float = 1e-8,
    t_max: float = 1e300,
) -> StoppingOutcome:
    """
    t* = Θ^{-1}(δ), Θ(t) = t^{-1/2} φ(1/t)

    Корень ищется бисекцией по log t; для Гёльдера сверяется с δ^{-2/(2p+1)}.
    """
    if delta <= 0:
        raise ConfigurationError("δ должно быть > 0")

    theta_min = float(family.theta(t_min))
    if delta >= theta_min:
        return StoppingOutcome(StoppingRule.A_PRIORI, t_min, theta_min, 1, (t_min, t_min), StopFlag.BELOW_T_MIN)

    bracket = find_crossing(
        lambda t: math.log(float(family.theta(t))) - math.log(delta),
        t_start=t_min,
        t_max=t_max,
        factor=2.0,
    )
    t_star = bracket.hi

    closed = family.a_priori_closed_form(delta)
    if closed is not None:
        if abs(closed - t_star) > 1e-8 * closed:
            raise NumericalError(
                f"Бисекция {t_star:.12g} расходится с формулой {closed:.12g}",
                achieved_tolerance=abs(closed - t_star) / closed,
            )
        t_star = closed

    return StoppingOutcome(
        StoppingRule.A_PRIORI, t_star, float(family.theta(t_star)),
        bracket.evaluations, (bracket.lo, bracket.hi),
    )


# ---- невязки ----

@dataclass(frozen=True)
class _ResidualModel:
    """Спектральное представление ‖A E x(t) - y^δ‖²"""

    lambdas: np.ndarray
    initial: np.ndarray  # σ_j ξ_j(0) - d_j
    orthogonal: float  # ‖(I - P) y^δ‖²

    @classmethod
    def build(cls, p: ForwardProblem, y_delta, x0) -> "_ResidualModel":
        y_delta = np.asarray(y_delta, dtype=float)
        data = p.range_coefficients(y_delta)
        start = spectral_coefficients(p, x0)
        orthogonal = max(p.range_norm(y_delta) ** 2 - float(np.sum(data**2)), 0.0)
        return cls(p.eigenvalues, p.singular_values * start - data, orthogonal)

    def mean_squared(self, t: float) -> float:
        return float(np.sum(np.exp(-2.0 * self.lambdas * t) * self.initial**2)) + self.orthogonal


def _prepare(p: ForwardProblem, x0, delta: float, tau: float):
    if tau <= 1:
        raise ConfigurationError("τ должно быть > 1")
    if delta <= 0:
        raise ConfigurationError("δ должно быть > 0")
    return np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)


def mean_residual(p: ForwardProblem, y_delta, x0, t: float) -> float:
    """‖A E x^δ(t) - y^δ‖"""
    x0 = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    return math.sqrt(_ResidualModel.build(p, y_delta, x0).mean_squared(t))


def discrepancy_chi1(
    p: ForwardProblem,
    y_delta,
    x0,
    delta: float,
    tau: float = DEFAULT_TAU,
    t_max: Optional[float] = None,
    t_start: Optional[float] = None,
    factor: float = 2.0,
) -> StoppingOutcome:
    """
    χ1(t) = ‖A E x^δ(t) - y^δ‖ - τδ, первое t с χ1 < 0

    χ1 детерминирована, поэтому считается по аналитическому среднему.
    """
    x0 = _prepare(p, x0, delta, tau)
    model = _ResidualModel.build(p, y_delta, x0)
    threshold = tau * delta

    initial = math.sqrt(model.mean_squared(0.0))
    if initial <= threshold:
        return StoppingOutcome(StoppingRule.DISCREPANCY_CHI1, 0.0, initial, 1, (0.0, 0.0), StopFlag.IMMEDIATE_STOP)

    t_max = t_max or default_t_max(p)
    try:
        bracket = find_crossing(
            lambda t: math.sqrt(model.mean_squared(t)) - threshold,
            t_start=t_start or default_t_start(p),
            t_max=t_max,
            factor=factor,
            abs_tol=1e-12 * threshold,
        )
    except StoppingError as error:
        last = math.sqrt(model.mean_squared(t_max)) - threshold
        raise StoppingError(f"χ1 не сменила знак до t_max={t_max:.4g}: χ1(t_max)={last:.4g}", last_value=last, delta=delta) from error

    outcome = StoppingOutcome(
        StoppingRule.DISCREPANCY_CHI1,
        bracket.hi,
        math.sqrt(model.mean_squared(bracket.hi)),
        bracket.evaluations,
        (bracket.lo, bracket.hi),
    )
    return _with_window_check(p, outcome)


def expected_squared_residual(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    t: float,
) -> float:
    """E‖A x^δ(t) - y^δ‖² = ‖A E x - y^δ‖² + Σ σ_j² Var ξ_j(t)"""
    x0 = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    model = _ResidualModel.build(p, y_delta, x0)
    variance = analytic_mode_variance(p, spec, sched, t)
    return model.mean_squared(t) + float(np.sum(p.eigenvalues * variance))


def discrepancy_chi2(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    delta: float,
    tau: float = DEFAULT_TAU,
    t_max: Optional[float] = None,
    t_start: Optional[float] = None,
    factor: float = 2.0,
) -> StoppingOutcome:
    """
    χ2(t) = E‖A x^δ(t) - y^δ‖² - τδ²

    Ожидание считается аналитически (среднее + квадратура дисперсий).
    """
    x0 = _prepare(p, x0, delta, tau)
    if not sched.is_decaying:
        raise ConfigurationError("χ2 требует убывающего f(t)")
    model = _ResidualModel.build(p, y_delta, x0)
    threshold = tau * delta**2

    def chi2(t: float) -> float:
        variance = analytic_mode_variance(p, spec, sched, t)
        return model.mean_squared(t) + float(np.sum(p.eigenvalues * variance)) - threshold

    if model.mean_squared(0.0) <= threshold:
        return StoppingOutcome(
            StoppingRule.DISCREPANCY_CHI2, 0.0, math.sqrt(model.mean_squared(0.0)), 1, (0.0, 0.0), StopFlag.IMMEDIATE_STOP
        )

    t_max = t_max or default_t_max(p)
    try:
        bracket = find_crossing(
            chi2,
            t_start=t_start or default_t_start(p),
            t_max=t_max,
            factor=factor,
            abs_tol=1e-12 * threshold,
        )
    except StoppingError as error:
        last = chi2(t_max)
        raise StoppingError(f"χ2 не сменила знак до t_max={t_max:.4g}: χ2(t_max)={last:.4g}", last_value=last, delta=delta) from error

    residual = math.sqrt(bracket.value + threshold)
    outcome = StoppingOutcome(
        StoppingRule.DISCREPANCY_CHI2, bracket.hi, residual, bracket.evaluations, (bracket.lo, bracket.hi)
    )
    return _with_window_check(p, outcome)


def discrepancy_chi2_monte_carlo(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    t: float,
    n_paths: int,
    master_seed: int,
) -> tuple[float, float]:
    """
    Оценка E‖A x^δ(t) - y^δ‖² по N траекториям (для проверки аналитики)

    Returns:
        (среднее, стандартная ошибка)
    """
    lineages = [RngLineage(master_seed, index) for index in range(n_paths)]
    state: SarState = sample_mild_law(p, spec, sched, y_delta, x0, t, lineages)
    residuals = apply_forward(p, state.values(p)) - np.asarray(y_delta)[None, :]
    squared = np.sum(residuals**2 * p.quadrature_weights_range[None, :], axis=1)
    return float(np.mean(squared)), float(np.std(squared, ddof=1) / math.sqrt(n_paths))


# ---- балансовое время ----

def expected_error(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    x0,
    t: float,
) -> float:
    """E‖x(t) - x†‖² при точных данных: смещение² + след дисперсии"""
    if p.x_true is None:
        raise UnsupportedProblemError("Нужен x_true")
    x0 = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    gap = x0 - p.x_true
    coeffs = spectral_coefficients(p, gap)
    unrepresented = max(p.domain_norm(gap) ** 2 - float(np.sum(coeffs**2)), 0.0)
    bias = float(np.sum(np.exp(-2.0 * p.eigenvalues * t) * coeffs**2)) + unrepresented
    variance = 0.0 if sched.is_zero else float(np.sum(analytic_mode_variance(p, spec, sched, t)))
    return bias + variance


def balance_time(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    x0,
    delta: float,
    t_max: Optional[float] = None,
    t_start: Optional[float] = None,
) -> StoppingOutcome:
    """
    t_δ из E‖x(t_δ) - x†‖² = δ² t_δ

    ξ(t) = E‖x(t) - x†‖²/t - δ² непрерывна и строго убывает; корень - бисекцией по log t.
    """
    if p.x_true is None:
        raise UnsupportedProblemError("balance_time требует известного x_true")
    if delta <= 0:
        raise ConfigurationError("δ должно быть > 0")

    t_start = t_start or default_t_start(p)
    if expected_error(p, spec, sched, x0, t_start) == 0.0:
        logger.warning("⚠️ E‖x(t)-x†‖ = 0: вырожденная ветвь баланса")
        return StoppingOutcome(StoppingRule.BALANCE, t_start, 0.0, 1, (t_start, t_start), StopFlag.DEGENERATE)

    t_max = t_max or default_t_max(p)
    bracket = find_crossing(
        lambda t: expected_error(p, spec, sched, x0, t) / t - delta**2,
        t_start=t_start,
        t_max=t_max,
    )
    t_star = bracket.hi
    outcome = StoppingOutcome(
        StoppingRule.BALANCE,
        t_star,
        math.sqrt(expected_error(p, spec, sched, x0, t_star)),
        bracket.evaluations,
        (bracket.lo, bracket.hi),
    )
    return _with_window_check(p, outcome)

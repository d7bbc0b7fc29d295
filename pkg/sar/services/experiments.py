"""
Экспериментальные прогоны: скорость сходимости по δ, порядок схем по Δt,
обратное утверждение о скоростях (диагностика)
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from sar.exceptions import ConfigurationError, StoppingError, UnsupportedProblemError
from sar.services.ensemble import run_ensemble
from sar.services.index_functions import SourceFamily, SourceKind
from sar.services.integrators import (
    SarState,
    Scheme,
    analytic_mean,
    calibrate_schedule,
    euler_step_limit,
    step,
    time_steps,
)
from sar.services.schedules import NoiseSchedule
from sar.services.spectral_operator import ForwardProblem, apply_forward, spectral_coefficients, spectral_tail
from sar.services.stochastic_noise import DATA_STREAM, QWienerSpec, RngLineage, batch_normals, inject_data_noise
from sar.services.stopping_rules import (
    DEFAULT_TAU,
    StopFlag,
    StoppingOutcome,
    StoppingRule,
    a_priori_time,
    balance_time,
    discrepancy_chi1,
    discrepancy_chi2,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlopeFit:
    """Наклон МНК с полушириной 95% доверительного интервала"""

    slope: float
    halfwidth: float
    intercept: float

    def contains(self, value: float, tolerance: float) -> bool:
        return abs(self.slope - value) <= tolerance


def fit_slope(x, y) -> SlopeFit:
    """Прямая y = a + b x и t-квантиль Стьюдента для полуширины"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3 or not np.all(np.isfinite(y)):
        return SlopeFit(math.nan, math.nan, math.nan)
    fit = stats.linregress(x, y)
    t_crit = stats.t.ppf(0.975, df=x.size - 2)
    return SlopeFit(float(fit.slope), float(t_crit * fit.stderr), float(fit.intercept))


# ---- скорость по δ ----

@dataclass
class RateSweepResult:
    """Прогон по убывающим δ"""

    rule: StoppingRule
    deltas: np.ndarray
    errors: np.ndarray
    error_stderr: np.ndarray
    t_stars: np.ndarray
    fitted_slope: SlopeFit
    t_star_slope: SlopeFit
    abscissa: str
    outcomes: list[StoppingOutcome] = field(default_factory=list)
    theoretical_slope: Optional[float] = None

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "delta": self.deltas,
                "t_star": self.t_stars,
                "mse": self.errors,
                "mse_stderr": self.error_stderr,
                "flag": [outcome.flag.value if outcome.flag else "" for outcome in self.outcomes],
                "evaluations": [outcome.evaluations for outcome in self.outcomes],
            }
        )

    def summary(self) -> dict:
        return {
            "rule": self.rule.value,
            "abscissa": self.abscissa,
            "slope": self.fitted_slope.slope,
            "slope_halfwidth": self.fitted_slope.halfwidth,
            "t_star_slope": self.t_star_slope.slope,
            "t_star_slope_halfwidth": self.t_star_slope.halfwidth,
            "theoretical_slope": self.theoretical_slope,
        }


def _check_deltas(deltas: Sequence[float]) -> np.ndarray:
    deltas = np.sort(np.asarray(deltas, dtype=float))[::-1]
    if deltas.size < 4:
        raise ConfigurationError("Нужно не меньше 4 значений δ")
    if np.any(deltas <= 0) or np.any(np.diff(deltas) >= 0):
        raise ConfigurationError("Значения δ должны быть положительны и различны")
    if math.log10(deltas[0] / deltas[-1]) < 2 - 1e-12:
        raise ConfigurationError("δ должны покрывать не меньше двух декад")
    return deltas


def stopping_time(
    rule: StoppingRule,
    p: ForwardProblem,
    family: SourceFamily,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    delta: float,
    tau: float = DEFAULT_TAU,
) -> StoppingOutcome:
    """Диспетчер правил останова"""
    rule = StoppingRule(rule)
    if rule == StoppingRule.A_PRIORI:
        return a_priori_time(family, delta)
    if rule == StoppingRule.DISCREPANCY_CHI1:
        return discrepancy_chi1(p, y_delta, x0, delta, tau)
    if rule == StoppingRule.DISCREPANCY_CHI2:
        return discrepancy_chi2(p, spec, sched, y_delta, x0, delta, tau)
    return balance_time(p, spec, sched, x0, delta)


# правила, не зависящие от f(t)
SCHEDULE_FREE_RULES = (StoppingRule.A_PRIORI, StoppingRule.DISCREPANCY_CHI1)


def stop_with_schedule(
    rule: StoppingRule,
    p: ForwardProblem,
    family: SourceFamily,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    delta: float,
    tau: float = DEFAULT_TAU,
    noise_level: Optional[float] = None,
) -> tuple[StoppingOutcome, NoiseSchedule]:
    """
    Момент останова и f(t) запуска

    При noise_level = κ константа f(t) калибруется так, что разброс ансамбля
    в опорный момент t равен κ·δ·√t. Для a_priori и χ1 опорный момент - сам t*;
    χ2 и балансовое время зависят от дисперсии, для них берётся априорный t.
    """
    rule = StoppingRule(rule)
    if noise_level is None:
        return stopping_time(rule, p, family, spec, sched, y_delta, x0, delta, tau), sched
    if rule in SCHEDULE_FREE_RULES:
        outcome = stopping_time(rule, p, family, spec, sched, y_delta, x0, delta, tau)
        return outcome, calibrate_schedule(p, spec, sched, delta, outcome.t_star, noise_level)
    reference = a_priori_time(family, delta).t_star
    sched = calibrate_schedule(p, spec, sched, delta, reference, noise_level)
    return stopping_time(rule, p, family, spec, sched, y_delta, x0, delta, tau), sched


def rate_sweep(
    p: ForwardProblem,
    family: SourceFamily,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    rule: StoppingRule,
    deltas: Sequence[float],
    n_paths: int,
    master_seed: int,
    x0=None,
    tau: float = DEFAULT_TAU,
    scheme: Scheme = Scheme.MILD_LAW,
    dt: float = 0.1,
    fixed_direction: bool = False,
    noise_level: Optional[float] = None,
    workers: int = 1,
    chunk_size: int = 250,
) -> RateSweepResult:
    """
    MSE в момент останова для каждого δ и наклон log MSE от log δ

    Для логарифмического источника абсцисса - log log(1/δ), теоретический
    наклон -2μ. δ здесь абсолютный: ‖y^δ - y‖ = δ. Точки с t* = 0
    (немедленный останов) в наклоны не входят.

    Args:
        p: Задача с x_true, удовлетворяющим условию истокообразности family
        fixed_direction: Одно направление шума данных для всех δ
        noise_level: Уровень κ калибровки f(t) по каждому δ (None - f(t) как есть)
    """
    if p.x_true is None:
        raise UnsupportedProblemError("rate_sweep требует известного x_true")
    rule = StoppingRule(rule)
    deltas = _check_deltas(deltas)

    errors, stderrs, t_stars, outcomes = [], [], [], []
    for index, delta in enumerate(deltas):
        noise_lineage = RngLineage(master_seed, 0 if fixed_direction else index, stream=DATA_STREAM)
        y_delta = inject_data_noise(p, float(delta), noise_lineage)
        try:
            outcome, run_sched = stop_with_schedule(
                rule, p, family, spec, sched, y_delta, x0, float(delta), tau, noise_level
            )
        except StoppingError as error:
            error.delta = float(delta)
            raise

        t_end = outcome.t_star
        if scheme != Scheme.MILD_LAW:
            t_end = math.ceil(t_end / dt - 1e-9) * dt
        stats_ = run_ensemble(
            p, spec, run_sched, y_delta, x0, scheme, dt, t_end, n_paths,
            levels=(), master_seed=master_seed, workers=workers,
            chunk_size=chunk_size, keep_samples=False,
        )
        logger.info("δ=%.3g: t*=%.6g, MSE=%.4g ± %.2g", delta, t_end, stats_.mse_vs_truth, stats_.mse_stderr)
        errors.append(stats_.mse_vs_truth)
        stderrs.append(stats_.mse_stderr)
        t_stars.append(t_end)
        outcomes.append(outcome)

    errors = np.asarray(errors)
    t_stars = np.asarray(t_stars)

    if family.kind == SourceKind.LOGARITHMIC:
        abscissa = "loglog_inv_delta"
        x = np.log(np.log(1.0 / deltas))
        theoretical = -2.0 * family.exponent
    else:
        abscissa = "log_delta"
        x = np.log(deltas)
        theoretical = family.rate_exponent()

    usable = np.array([outcome.flag != StopFlag.IMMEDIATE_STOP for outcome in outcomes]) & (t_stars > 0)
    if not np.all(usable):
        logger.warning("⚠️ Немедленный останов при δ = %s: точки исключены из наклонов", deltas[~usable].tolist())

    result = RateSweepResult(
        rule=rule,
        deltas=deltas,
        errors=errors,
        error_stderr=np.asarray(stderrs),
        t_stars=t_stars,
        fitted_slope=fit_slope(x[usable], np.log(errors[usable])),
        t_star_slope=fit_slope(np.log(deltas[usable]), np.log(t_stars[usable])),
        abscissa=abscissa,
        outcomes=outcomes,
        theoretical_slope=theoretical,
    )
    logger.info(
        "✅ Наклон MSE: %.4f ± %.4f (теория %s)",
        result.fitted_slope.slope, result.fitted_slope.halfwidth, theoretical,
    )
    return result


# ---- порядок схем ----

@dataclass
class OrderSweepResult:
    """Сильная ошибка схем относительно exact_spectral на тех же нормальных числах"""

    dts: np.ndarray
    terminal_errors: dict[Scheme, np.ndarray]
    max_errors: dict[Scheme, np.ndarray]
    slopes: dict[Scheme, SlopeFit]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"dt": self.dts})
        for scheme, values in self.terminal_errors.items():
            frame[f"{scheme.value}_error"] = values
            frame[f"{scheme.value}_max_error"] = self.max_errors[scheme]
        return frame

    def slope_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "scheme": [scheme.value for scheme in self.slopes],
                "slope": [fit.slope for fit in self.slopes.values()],
                "halfwidth": [fit.halfwidth for fit in self.slopes.values()],
            }
        )


def _strong_error(a: SarState, b: SarState) -> float:
    """√(E‖x_a - x_b‖²) по ансамблю"""
    diff = a.coeffs - b.coeffs
    return math.sqrt(float(np.mean(np.sum(diff**2, axis=1))))


def order_sweep(
    p: ForwardProblem,
    spec: QWienerSpec,
    sched: NoiseSchedule,
    y_delta,
    x0,
    dts: Sequence[float],
    t_end: float,
    n_paths: int,
    master_seed: int = 0,
    schemes: Sequence[Scheme] = (Scheme.EULER, Scheme.EXP_EULER),
) -> OrderSweepResult:
    """
    Сильный порядок схем: наклон max_k √(E‖X_k - X(t_k)‖²) по Δt

    Опорное решение - exact_spectral с тем же Δt и теми же нормальными
    числами, поэтому разность траекторий отражает только ошибку схемы.
    Явная схема Эйлера пропускается при Δt ≥ 2/σ_1².
    """
    dts = np.sort(np.asarray(dts, dtype=float))[::-1]
    if dts.size < 4:
        raise ConfigurationError("Нужно не меньше 4 шагов Δt")
    schemes = [Scheme(scheme) for scheme in schemes]
    if Scheme.MILD_LAW in schemes or Scheme.EXACT_SPECTRAL in schemes:
        raise ConfigurationError("Сравниваются только euler и exp_euler")

    lineages = [RngLineage(master_seed, path) for path in range(n_paths)]
    terminal = {scheme: np.full(dts.size, np.nan) for scheme in schemes}
    maximal = {scheme: np.full(dts.size, np.nan) for scheme in schemes}

    for k, dt in enumerate(dts):
        active = [s for s in schemes if s != Scheme.EULER or dt < euler_step_limit(p)]
        skipped = set(schemes) - set(active)
        if skipped:
            logger.warning("⚠️ Δt=%.4g ≥ 2/σ_1²: euler исключён", dt)

        reference = SarState.initial(p, y_delta, x0, lineages)
        states = {scheme: reference for scheme in active}
        worst = {scheme: 0.0 for scheme in active}
        for size in time_steps(0.0, t_end, float(dt)):
            normals = batch_normals(reference.lineages, p.rank)
            reference = step(reference, p, spec, sched, Scheme.EXACT_SPECTRAL, size, normals)
            for scheme in active:
                states[scheme] = step(states[scheme], p, spec, sched, scheme, size, normals)
                worst[scheme] = max(worst[scheme], _strong_error(states[scheme], reference))
        for scheme in active:
            terminal[scheme][k] = _strong_error(states[scheme], reference)
            maximal[scheme][k] = worst[scheme]
        logger.info("Δt=%.4g: %s", dt, {s.value: float(terminal[s][k]) for s in active})

    # сильная ошибка - максимум по узлам времени
    slopes = {}
    for scheme in schemes:
        errors = maximal[scheme]
        usable = np.isfinite(errors) & (errors > 0)
        slopes[scheme] = fit_slope(np.log(dts[usable]), np.log(errors[usable]))
    return OrderSweepResult(dts=dts, terminal_errors=terminal, max_errors=maximal, slopes=slopes)


# ---- обратное утверждение ----

@dataclass
class ConverseDiagnostic:
    """
    Таблицы (t, ‖Ex(t)-x†‖², φ(1/t)²) и (λ, ω(λ), φ(λ)²)

    sup-отношения конечны и не растут при расширении сеток, если x0 - x†
    удовлетворяет условию истокообразности с φ.
    """

    bias_table: pd.DataFrame
    tail_table: pd.DataFrame
    sup_bias_ratio: float
    sup_tail_ratio: float
    bias_stability: float
    tail_stability: float
    bias_windows: list[float]
    tail_windows: list[float]

    def summary(self) -> dict:
        return {
            "sup_bias_ratio": self.sup_bias_ratio,
            "sup_tail_ratio": self.sup_tail_ratio,
            "bias_stability": self.bias_stability,
            "tail_stability": self.tail_stability,
        }


def _decade_windows(grid: np.ndarray, ratios: np.ndarray) -> list[float]:
    """sup отношения по декадам, отсчитанным от первого узла сетки"""
    decades = np.floor(np.abs(np.log10(grid / grid[0])) + 1e-12)
    windows = []
    for decade in dict.fromkeys(decades.tolist()):
        windows.append(float(np.max(ratios[decades == decade])))
    return windows


def _stability(windows: list[float]) -> float:
    """Во сколько раз растёт накопленный sup по мере расширения сетки"""
    if not windows or windows[0] == 0:
        return 1.0
    return max(windows) / windows[0]


def converse_diagnostic(
    p: ForwardProblem,
    x0,
    family: SourceFamily,
    t_grid: Optional[Sequence[float]] = None,
    lambda_grid: Optional[Sequence[float]] = None,
) -> ConverseDiagnostic:
    """
    Эмпирические константы sup_t ‖Ex(t)-x†‖²/φ(1/t)² и sup_λ ω(λ)/φ(λ)²

    Смещение считается по точным данным A x† двумя путями: через
    analytic_mean и через спектральное представление Σ e^{-2λt}c_j².
    """
    if p.x_true is None:
        raise UnsupportedProblemError("converse_diagnostic требует известного x_true")
    x0 = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    lam1 = float(p.eigenvalues[0])
    t_grid = np.geomspace(1.0 / lam1, 100.0 / lam1, 41) if t_grid is None else np.asarray(t_grid, dtype=float)
    lambda_grid = p.eigenvalues if lambda_grid is None else np.asarray(lambda_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(lambda_grid <= 0):
        raise ConfigurationError("Сетки t и λ должны быть положительны")

    y_model = apply_forward(p, p.x_true)
    gap = x0 - p.x_true
    coeffs = spectral_coefficients(p, gap)
    unrepresented = p.domain_norm(p.unrepresented_part(gap)) ** 2

    bias = np.array([p.domain_norm(analytic_mean(p, y_model, x0, t) - p.x_true) ** 2 for t in t_grid])
    representation = np.array(
        [float(np.sum(np.exp(-2.0 * p.eigenvalues * t) * coeffs**2)) + unrepresented for t in t_grid]
    )
    phi_t = family(1.0 / t_grid) ** 2
    bias_ratio = bias / phi_t
    bias_table = pd.DataFrame(
        {"t": t_grid, "bias_sq": bias, "bias_sq_spectral": representation, "phi_sq": phi_t, "ratio": bias_ratio}
    )

    omega = np.array([spectral_tail(p, x0, lam) for lam in lambda_grid])
    phi_lam = family(lambda_grid) ** 2
    tail_ratio = np.divide(omega, phi_lam, out=np.zeros_like(omega), where=phi_lam > 0)
    tail_table = pd.DataFrame({"lambda": lambda_grid, "omega": omega, "phi_sq": phi_lam, "ratio": tail_ratio})

    # λ обходится от больших к малым: «расширение» сетки идёт вниз по спектру
    order = np.argsort(lambda_grid)[::-1]
    bias_windows = _decade_windows(t_grid, bias_ratio)
    tail_windows = _decade_windows(lambda_grid[order], tail_ratio[order])

    diagnostic = ConverseDiagnostic(
        bias_table=bias_table,
        tail_table=tail_table,
        sup_bias_ratio=float(np.max(bias_ratio)),
        sup_tail_ratio=float(np.max(tail_ratio)),
        bias_stability=_stability(bias_windows),
        tail_stability=_stability(tail_windows),
        bias_windows=bias_windows,
        tail_windows=tail_windows,
    )
    logger.info("Диагностика %s: %s", family.label(), diagnostic.summary())
    return diagnostic

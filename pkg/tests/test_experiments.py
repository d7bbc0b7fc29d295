"""Прогоны по δ и Δt, диагностика обратного утверждения"""
import math

import numpy as np
import pytest

from sar.exceptions import ConfigurationError, UnsupportedProblemError
from sar.services.experiments import converse_diagnostic, fit_slope, order_sweep, rate_sweep, stopping_time
from sar.services.index_functions import SourceFamily
from sar.services.integrators import Scheme
from sar.services.schedules import NoiseSchedule
from sar.services.spectral_operator import ForwardProblem, source_condition_solution
from sar.services.stochastic_noise import QWienerFamily, make_qwiener
from sar.services.stopping_rules import StopFlag, StoppingRule, balance_time

HOLDER = SourceFamily.holder(0.5)


@pytest.fixture(scope="module")
def source_noise(source_problem):
    return make_qwiener(source_problem, QWienerFamily.power(6.0, c=0.1)), NoiseSchedule.matched(HOLDER, c=1.0)


class TestFitSlope:
    def test_exact_line(self):
        x = np.log([1e-1, 1e-2, 1e-3, 1e-4])
        fit = fit_slope(x, 2.0 * x + 1.0)
        assert fit.slope == pytest.approx(2.0)
        assert fit.intercept == pytest.approx(1.0)
        assert fit.halfwidth == pytest.approx(0.0, abs=1e-9)
        assert fit.contains(2.05, tolerance=0.1)

    def test_too_few_points(self):
        assert math.isnan(fit_slope([1.0, 2.0], [1.0, 2.0]).slope)


class TestStoppingTime:
    def test_dispatch(self, single_mode):
        spec = make_qwiener(single_mode, QWienerFamily.custom([1.0]))
        sched = NoiseSchedule.zero()
        outcome = stopping_time("balance", single_mode, HOLDER, spec, sched, single_mode.y_exact, None, 0.1)
        assert outcome.t_star == balance_time(single_mode, spec, sched, None, 0.1).t_star
        assert stopping_time("a_priori", single_mode, HOLDER, spec, sched, None, None, 1e-2).t_star == pytest.approx(100.0)


class TestRateSweep:
    DELTAS = (1e-3, 1e-4, 1e-5, 1e-6)

    def test_a_priori_stopping_times(self, source_problem, source_noise):
        spec, sched = source_noise
        result = rate_sweep(source_problem, HOLDER, spec, sched, StoppingRule.A_PRIORI, self.DELTAS, 40, 11)
        np.testing.assert_allclose(result.t_stars, 1.0 / np.array(self.DELTAS), rtol=1e-12)
        assert result.t_star_slope.slope == pytest.approx(-1.0, abs=1e-9)
        assert result.abscissa == "log_delta"
        assert result.theoretical_slope == pytest.approx(1.0)
        assert result.errors[-1] < result.errors[0]
        frame = result.to_frame()
        assert list(frame["delta"]) == sorted(self.DELTAS, reverse=True)
        assert set(result.summary()) >= {"slope", "slope_halfwidth", "t_star_slope", "theoretical_slope"}

    def test_logarithmic_abscissa(self, toy):
        family = SourceFamily.logarithmic(1.0)
        p = source_condition_solution(toy, family, 1.0, seed=3)
        spec = make_qwiener(p, QWienerFamily.power(6.0, c=0.1))
        result = rate_sweep(p, family, spec, NoiseSchedule.matched(family), "a_priori", self.DELTAS, 20, 5)
        assert result.abscissa == "loglog_inv_delta"
        assert result.theoretical_slope == pytest.approx(-2.0)

    def test_delta_validation(self, source_problem, source_noise):
        spec, sched = source_noise
        with pytest.raises(ConfigurationError):
            rate_sweep(source_problem, HOLDER, spec, sched, "a_priori", (1e-3, 1e-4, 1e-5), 10, 1)
        with pytest.raises(ConfigurationError):
            rate_sweep(source_problem, HOLDER, spec, sched, "a_priori", (1e-3, 5e-4, 2e-4, 1e-4), 10, 1)

    def test_requires_truth(self, source_noise):
        spec, sched = source_noise
        p = ForwardProblem.from_matrix(np.eye(3), np.ones(3), np.ones(3))
        with pytest.raises(UnsupportedProblemError):
            rate_sweep(p, HOLDER, spec, sched, "a_priori", self.DELTAS, 10, 1)

    def test_immediate_stop_excluded_from_fit(self, source_problem, source_noise):
        """δ = 20 ≥ ‖y‖·10: χ1 останавливается в t = 0, наклоны по остальным точкам"""
        spec, sched = source_noise
        deltas = (20.0, 1e-1, 1e-2, 1e-3)
        result = rate_sweep(source_problem, HOLDER, spec, sched, "chi1", deltas, 20, 3)
        assert result.to_frame()["flag"].iloc[0] == "immediate_stop"
        assert result.t_stars[0] == 0.0
        expected = fit_slope(np.log(result.deltas[1:]), np.log(result.t_stars[1:]))
        assert result.t_star_slope.slope == pytest.approx(expected.slope)
        assert np.isfinite(result.fitted_slope.slope)

    def test_noise_level_calibrates_each_delta(self, source_problem, source_noise):
        """κ = 1: разброс ансамбля в t* равен δ√t* для каждого δ"""
        spec, sched = source_noise
        result = rate_sweep(
            source_problem, HOLDER, spec, sched, "a_priori", self.DELTAS, 2000, 5, noise_level=1.0,
        )
        for delta, t_star, mse in zip(result.deltas, result.t_stars, result.errors):
            assert mse >= 0.8 * delta**2 * t_star

    @pytest.mark.slow
    @pytest.mark.parametrize(
        ("rule", "tolerance"), [("a_priori", 0.15), ("discrepancy_chi1", 0.2), ("balance", 0.2)]
    )
    def test_slope_near_theory(self, source_problem, source_noise, rule, tolerance):
        """δ от 1e-2 до 1e-4 относительно ‖y‖ = 1, f(t) по уровню κ = 1"""
        spec, sched = source_noise
        deltas = np.geomspace(1e-2, 1e-4, 5)
        result = rate_sweep(
            source_problem, HOLDER, spec, sched, rule, deltas, 400, 20210101, noise_level=1.0,
        )
        assert StopFlag.IMMEDIATE_STOP not in [outcome.flag for outcome in result.outcomes]
        assert abs(result.fitted_slope.slope - result.theoretical_slope) <= tolerance
        if rule == "discrepancy_chi1":
            assert abs(result.t_star_slope.slope + 1.0) <= 0.2


class TestOrderSweep:
    @pytest.fixture(scope="class")
    def result(self, small_toy):
        spec = make_qwiener(small_toy, QWienerFamily.power(6.0, c=0.1))
        return order_sweep(
            small_toy, spec, NoiseSchedule.constant(1.0), small_toy.y_exact, None,
            dts=[8.0, 4.0, 2.0, 1.0], t_end=16.0, n_paths=100, master_seed=4,
        )

    def test_first_order_slopes(self, result):
        for scheme in (Scheme.EULER, Scheme.EXP_EULER):
            assert abs(result.slopes[scheme].slope - 1.0) <= 0.2

    def test_slope_uses_max_over_steps(self, result):
        for scheme in (Scheme.EULER, Scheme.EXP_EULER):
            expected = fit_slope(np.log(result.dts), np.log(result.max_errors[scheme]))
            assert result.slopes[scheme].slope == pytest.approx(expected.slope, rel=1e-12)

    def test_errors_shrink(self, result):
        for scheme in (Scheme.EULER, Scheme.EXP_EULER):
            errors = result.terminal_errors[scheme]
            assert np.all(np.diff(errors) < 0)
            assert np.all(result.max_errors[scheme] >= errors)

    def test_frames(self, result):
        assert list(result.to_frame().columns) == [
            "dt", "euler_error", "euler_max_error", "exp_euler_error", "exp_euler_max_error",
        ]
        assert list(result.slope_frame()["scheme"]) == ["euler", "exp_euler"]

    def test_unstable_euler_skipped(self, small_toy):
        spec = make_qwiener(small_toy, QWienerFamily.power(6.0, c=0.1))
        dts = [400.0, 8.0, 4.0, 2.0]
        result = order_sweep(small_toy, spec, NoiseSchedule.constant(1.0), small_toy.y_exact, None,
                             dts=dts, t_end=400.0, n_paths=10)
        assert math.isnan(result.terminal_errors[Scheme.EULER][0])
        assert np.isfinite(result.terminal_errors[Scheme.EXP_EULER][0])

    def test_validation(self, small_toy):
        spec = make_qwiener(small_toy, QWienerFamily.power(6.0, c=0.1))
        args = (small_toy, spec, NoiseSchedule.constant(1.0), small_toy.y_exact, None)
        with pytest.raises(ConfigurationError):
            order_sweep(*args, dts=[1.0, 0.5, 0.25], t_end=1.0, n_paths=5)
        with pytest.raises(ConfigurationError):
            order_sweep(*args, dts=[1.0, 0.5, 0.25, 0.125], t_end=1.0, n_paths=5, schemes=["exact_spectral"])


class TestConverseDiagnostic:
    def test_source_element_gives_bounded_ratios(self, toy):
        j = np.arange(1, toy.rank + 1)
        v = toy.right_vectors @ (1.0 / j)
        p = source_condition_solution(toy, HOLDER, 1.0, v=v)
        diagnostic = converse_diagnostic(p, None, HOLDER)
        assert diagnostic.bias_stability < 2.0
        assert diagnostic.tail_stability < 2.0
        assert diagnostic.sup_bias_ratio <= 1.0 / (2.0 * math.e) + 1e-9
        np.testing.assert_allclose(
            diagnostic.bias_table["bias_sq"], diagnostic.bias_table["bias_sq_spectral"], rtol=1e-8
        )

    def test_too_smooth_family_grows(self, toy):
        diagnostic = converse_diagnostic(toy, None, SourceFamily.holder(2.0))
        assert diagnostic.bias_stability > 10.0
        assert len(diagnostic.bias_windows) == 3

    def test_custom_grids(self, toy):
        lam1 = toy.eigenvalues[0]
        diagnostic = converse_diagnostic(toy, None, HOLDER, t_grid=[1 / lam1, 10 / lam1], lambda_grid=[lam1])
        assert len(diagnostic.bias_table) == 2
        assert len(diagnostic.tail_table) == 1
        with pytest.raises(ConfigurationError):
            converse_diagnostic(toy, None, HOLDER, t_grid=[0.0, 1.0])

    def test_requires_truth(self):
        p = ForwardProblem.from_matrix(np.eye(2), np.ones(2), np.ones(2))
        with pytest.raises(UnsupportedProblemError):
            converse_diagnostic(p, None, HOLDER)

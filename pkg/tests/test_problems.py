"""Встроенные задачи: модельное уравнение, условие истокообразности, биосенсор"""
import numpy as np
import pytest

from sar.exceptions import ConfigurationError, DomainError
from sar.schemas import BiosensorConfig, SourceConfig
from sar.services.ensemble import Peak
from sar.services.problems import (
    biosensor_kernel,
    green_kernel,
    kernel_phase_jump,
    make_biosensor_problem,
    make_source_problem,
    make_toy_problem,
    nearest_node,
    peak_report,
    rate_grid,
    synthetic_rate_map,
    toy_data,
    toy_solution,
    toy_solution_polynomial,
    trapezoid_weights,
)
from sar.services.spectral_operator import recover_source_element


@pytest.fixture(scope="module")
def small_bio():
    return BiosensorConfig(n_kd=8, n_ka=8, n_times=61, n_tail=20)


class TestToyProblem:
    def test_solution_is_minus_second_derivative(self):
        t = np.linspace(0.0, 1.0, 11)
        np.testing.assert_allclose(toy_solution(t), toy_solution_polynomial()(t), atol=1e-12)

    def test_green_kernel_symmetry(self):
        s, t = np.meshgrid(np.linspace(0, 1, 7), np.linspace(0, 1, 7))
        np.testing.assert_allclose(green_kernel(s, t), green_kernel(t, s))

    def test_discretisation_error_is_small(self, toy):
        """Данные из замкнутой формулы, ошибка квадратуры O(h²)"""
        mismatch = toy.range_norm(toy.matrix @ toy.x_true - toy.y_exact) / toy.range_norm(toy.y_exact)
        assert mismatch < 1e-2
        np.testing.assert_allclose(toy.y_exact, toy_data(toy.grid_range))

    def test_minimum_size(self):
        with pytest.raises(ConfigurationError):
            make_toy_problem(5)

    @pytest.mark.parametrize("rule", ["trapezoid", "gauss"])
    def test_other_rules(self, rule):
        p = make_toy_problem(30, rule)
        assert p.rank >= 28
        assert p.norm == pytest.approx(1.0 / np.pi**2, rel=2e-2)


class TestSourceProblem:
    def test_source_element_norm(self):
        source = SourceConfig(exponent=1.0, rho=2.5, data_norm=None, seed=4)
        p = make_source_problem(40, source)
        assert np.linalg.norm(recover_source_element(p, source.build())) == pytest.approx(2.5, rel=1e-8)

    def test_data_normalized_by_default(self):
        """‖A x†‖ = 1: шкала δ в прогонах по скорости относительная"""
        source = SourceConfig(exponent=0.5, seed=7)
        p = make_source_problem(60, source)
        assert p.range_norm(p.y_exact) == pytest.approx(1.0, rel=1e-10)
        direction = make_source_problem(60, source.model_copy(update={"data_norm": None}))
        np.testing.assert_allclose(p.x_true / np.linalg.norm(p.x_true), direction.x_true / np.linalg.norm(direction.x_true))

    def test_seeded(self):
        source = SourceConfig(seed=9)
        np.testing.assert_array_equal(make_source_problem(20, source).x_true, make_source_problem(20, source).x_true)


class TestBiosensorKernel:
    def test_zero_before_injection(self, small_bio):
        values = biosensor_kernel(np.array([0.0, 50.0, 100.0]), 1e-6, 1e4, 1e-2, small_bio)
        np.testing.assert_array_equal(values, 0.0)

    def test_association_approaches_plateau(self, small_bio):
        concentration, k_a, k_d = 1e-5, 1e5, 1e-2
        value = biosensor_kernel(small_bio.t0 + small_bio.t_inj, concentration, k_a, k_d, small_bio)
        plateau = k_a * concentration / (k_d + k_a * concentration)
        assert float(value) == pytest.approx(plateau, rel=1e-6)

    def test_continuous_without_delay(self, small_bio):
        assert kernel_phase_jump(1e-6, 1e4, 1e-2, small_bio) == pytest.approx(0.0, abs=1e-15)

    def test_jump_with_delay(self):
        delayed = BiosensorConfig(dt_delay=20.0, n_kd=4, n_ka=4)
        assert abs(kernel_phase_jump(1e-5, 1e5, 1e-1, delayed)) > 1e-3

    def test_rejects_non_positive_rates(self, small_bio):
        with pytest.raises(DomainError):
            biosensor_kernel(200.0, 1e-6, 0.0, 1e-2, small_bio)


class TestBiosensorProblem:
    def test_shape_and_truth(self, small_bio):
        p = make_biosensor_problem(small_bio)
        assert p.domain_shape == (8, 8)
        assert p.n == 64
        assert p.m == 9 * (61 + 20)
        np.testing.assert_allclose(p.x_true, synthetic_rate_map(small_bio))
        assert np.all(p.singular_values > 0)

    def test_without_truth(self, small_bio):
        assert make_biosensor_problem(small_bio, with_truth=False).x_true is None

    def test_rate_grid_is_kd_major(self, small_bio):
        log_kd, log_ka, weights = rate_grid(small_bio)
        assert log_kd[0] == log_kd[7] == -4.0
        assert log_ka[0] == 3.0 and log_ka[7] == 7.0
        assert weights.sum() == pytest.approx(16.0)

    def test_trapezoid_weights(self):
        grid = np.array([0.0, 1.0, 3.0])
        np.testing.assert_allclose(trapezoid_weights(grid), [0.5, 1.5, 1.0])

    def test_synthetic_peaks_are_local_maxima(self):
        field = synthetic_rate_map(BiosensorConfig(n_kd=40, n_ka=40)).reshape(40, 40)
        cfg = BiosensorConfig()
        for peak in cfg.peaks:
            i, j = nearest_node(cfg, peak.log_kd, peak.log_ka)
            assert field[i, j] == field[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2].max()

    def test_minor_peak(self):
        cfg = BiosensorConfig(include_minor_peak=True, n_kd=4, n_ka=4)
        assert len(cfg.all_peaks()) == 3


class TestPeakReport:
    def test_distance_in_cells(self):
        cfg = BiosensorConfig()
        i, j = nearest_node(cfg, cfg.peaks[0].log_kd, cfg.peaks[0].log_ka)
        rows = peak_report(cfg, [Peak((i + 1, j - 2), 1.0)])
        assert rows[0]["cells_to_truth"] == 2
        assert rows[0]["log_kd"] == pytest.approx(cfg.log_kd_grid()[i + 1])

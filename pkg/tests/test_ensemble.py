"""Ансамбли: слияние моментов, воспроизводимость, полосы, карты моментов"""
import numpy as np
import pytest

from sar.exceptions import ConfigurationError
from sar.services.ensemble import (
    MomentAccumulator,
    find_peaks,
    merge_tree,
    moment_maps,
    peak_prominences,
    run_ensemble,
)
from sar.services.integrators import Scheme, analytic_mean
from sar.services.schedules import NoiseSchedule
from sar.services.stochastic_noise import QWienerFamily, make_qwiener


@pytest.fixture(scope="module")
def noise(small_toy):
    return make_qwiener(small_toy, QWienerFamily.power(6.0, c=0.1)), NoiseSchedule.constant(1.0)


def ensemble(p, noise, **kwargs):
    spec, sched = noise
    options = dict(scheme=Scheme.MILD_LAW, dt=0.1, t_end=200.0, n_paths=300, master_seed=17)
    options.update(kwargs)
    return run_ensemble(p, spec, sched, p.y_exact, None, **options)


class TestMomentAccumulator:
    def test_merge_matches_single_batch(self):
        rng = np.random.default_rng(0)
        values = rng.gamma(2.0, size=(500, 3))
        merged = MomentAccumulator.from_batch(values[:123]).merge(MomentAccumulator.from_batch(values[123:]))
        whole = MomentAccumulator.from_batch(values)
        assert merged.count == 500
        for order in (2, 3, 4):
            np.testing.assert_allclose(merged.central(order), whole.central(order), rtol=1e-10)
        np.testing.assert_allclose(merged.mean, values.mean(axis=0), rtol=1e-12)

    def test_population_variance(self):
        values = np.array([[1.0], [2.0], [3.0], [4.0]])
        np.testing.assert_allclose(MomentAccumulator.from_batch(values).central(2), [1.25])

    def test_raw_moments(self):
        rng = np.random.default_rng(1)
        values = rng.normal(1.0, 2.0, size=(400, 2))
        acc = MomentAccumulator.from_batch(values)
        for order in (1, 2, 3, 4):
            np.testing.assert_allclose(acc.raw(order), np.mean(values**order, axis=0), rtol=1e-9)

    def test_merge_with_empty(self):
        acc = MomentAccumulator.from_batch(np.ones((3, 2)))
        assert acc.merge(MomentAccumulator.empty(2)) is acc
        assert MomentAccumulator.empty(2).merge(acc) is acc

    def test_merge_tree_fixed_order(self):
        rng = np.random.default_rng(2)
        parts = [MomentAccumulator.from_batch(rng.normal(size=(10, 4))) for _ in range(5)]
        first, second = merge_tree(parts), merge_tree(parts)
        np.testing.assert_array_equal(first.m4, second.m4)
        with pytest.raises(ValueError):
            merge_tree([])


class TestRunEnsemble:
    def test_workers_do_not_change_result(self, small_toy, noise):
        serial = ensemble(small_toy, noise, chunk_size=64, workers=1)
        parallel = ensemble(small_toy, noise, chunk_size=64, workers=3)
        np.testing.assert_array_equal(serial.mean, parallel.mean)
        np.testing.assert_array_equal(serial.variance, parallel.variance)
        np.testing.assert_array_equal(serial.band(0.85)[0], parallel.band(0.85)[0])
        assert serial.mse_vs_truth == parallel.mse_vs_truth

    def test_chunking_changes_only_roundoff(self, small_toy, noise):
        coarse = ensemble(small_toy, noise, chunk_size=300)
        fine = ensemble(small_toy, noise, chunk_size=7)
        np.testing.assert_allclose(coarse.mean, fine.mean, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(coarse.variance, fine.variance, rtol=1e-9, atol=1e-18)

    def test_mse_decomposition(self, small_toy, noise):
        stats = ensemble(small_toy, noise)
        assert stats.mse_vs_truth == pytest.approx(stats.bias_squared + stats.variance_trace, rel=1e-10)
        assert stats.mse_stderr > 0

    def test_mean_close_to_analytic(self, small_toy, noise):
        stats = ensemble(small_toy, noise, n_paths=1000)
        expected = analytic_mean(small_toy, small_toy.y_exact, None, 200.0)
        stderr = np.sqrt(stats.variance / stats.n_paths)
        assert np.all(np.abs(stats.mean - expected) <= 5.0 * stderr + 1e-12)

    def test_bands_are_nested(self, small_toy, noise):
        stats = ensemble(small_toy, noise)
        lower70, upper70 = stats.band(0.70)
        lower85, upper85 = stats.band(0.85)
        assert np.all(lower85 <= lower70) and np.all(upper70 <= upper85)
        assert stats.coverage(stats.mean, 0.85) >= stats.coverage(stats.mean, 0.70)
        with pytest.raises(KeyError):
            stats.band(0.5)

    def test_stepping_scheme(self, small_toy, noise):
        stats = ensemble(small_toy, noise, scheme=Scheme.EXACT_SPECTRAL, dt=10.0, t_end=50.0, n_paths=50)
        assert stats.n_paths == 50
        assert stats.excluded == 0

    def test_frame_columns(self, small_toy, noise):
        stats = ensemble(small_toy, noise, n_paths=20)
        frame = stats.to_frame(small_toy.grid_domain, small_toy.x_true)
        assert list(frame.columns) == [
            "node", "grid", "mean", "variance", "m3", "m4",
            "lower_70", "upper_70", "lower_85", "upper_85", "x_true",
        ]
        assert len(frame) == small_toy.n

    def test_samples_optional(self, small_toy, noise):
        assert ensemble(small_toy, noise, n_paths=10).samples.shape == (10, small_toy.n)
        assert ensemble(small_toy, noise, n_paths=10, keep_samples=False).samples is None

    @pytest.mark.slow
    def test_band_holds_fresh_paths(self, small_toy, noise):
        """Полоса по 5000 траекториям содержит долю ≈ уровня новых траекторий с другим seed"""
        stats = ensemble(small_toy, noise, n_paths=5000, keep_samples=False)
        fresh = ensemble(small_toy, noise, n_paths=5000, master_seed=2021).samples
        for level in (0.70, 0.85):
            lower, upper = stats.band(level)
            inside = (fresh >= lower) & (fresh <= upper)
            assert abs(inside.mean(axis=0) - level).max() <= 0.03

    @pytest.mark.parametrize(
        "kwargs",
        [{"n_paths": 1}, {"levels": (0.7, 1.0)}, {"workers": 0}, {"t_end": -1.0}],
    )
    def test_invalid_arguments(self, small_toy, noise, kwargs):
        with pytest.raises(ConfigurationError):
            ensemble(small_toy, noise, **kwargs)


class TestMomentMaps:
    def test_find_peaks_two_bumps(self):
        i, j = np.meshgrid(np.arange(20), np.arange(20), indexing="ij")
        field = np.exp(-((i - 5) ** 2 + (j - 5) ** 2) / 4.0) + 0.5 * np.exp(-((i - 14) ** 2 + (j - 12) ** 2) / 4.0)
        peaks = find_peaks(field)
        assert [peak.index for peak in peaks] == [(5, 5), (14, 12)]
        assert peaks[0].value > peaks[1].value

    def test_threshold_hides_small_peak(self):
        field = np.zeros((9, 9))
        field[2, 2] = 1.0
        field[6, 6] = 0.01
        assert [peak.index for peak in find_peaks(field, threshold=0.05)] == [(2, 2)]

    def test_non_positive_field(self):
        assert find_peaks(-np.ones((4, 4))) == ()

    def test_low_prominence_shoulder(self):
        """Бугорок 0.52 над седловиной 0.5 на склоне пика - не пик"""
        field = np.array([0.0, 0.5, 1.0, 0.7, 0.5, 0.52, 0.45, 0.3, 0.1])
        assert [peak.index for peak in find_peaks(field)] == [(2,)]

    def test_ramp_to_border(self):
        """Подъём к краю на 0.04 над седловиной меньше 5% максимума"""
        field = np.array([0.1, 0.6, 1.0, 0.6, 0.3, 0.31, 0.32, 0.33, 0.34])
        assert [peak.index for peak in find_peaks(field)] == [(2,)]
        assert peak_prominences(field)[(8,)] == pytest.approx(0.04)

    def test_plateau_is_one_peak(self):
        field = np.zeros((8, 8))
        field[3:5, 3:5] = 1.0
        assert [peak.index for peak in find_peaks(field)] == [(3, 3)]

    def test_prominence_of_second_bump(self):
        field = np.array([0.0, 1.0, 0.2, 0.6, 0.0])
        prominences = peak_prominences(field)
        assert prominences[(1,)] == pytest.approx(1.0)
        assert prominences[(3,)] == pytest.approx(0.4)

    def test_maps_from_ensemble(self, small_toy, noise):
        stats = ensemble(small_toy, noise, n_paths=50)
        np.testing.assert_allclose(moment_maps(stats, 1, "raw").field, stats.mean)
        np.testing.assert_allclose(moment_maps(stats, 2).field, stats.variance)
        assert moment_maps(stats, 4).field.shape == (small_toy.n,)
        with pytest.raises(ConfigurationError):
            moment_maps(stats, 5)
        with pytest.raises(ConfigurationError):
            moment_maps(stats, 2, kind="standardized")

"""Поиск корня по log t и составная квадратура"""
import math

import numpy as np
import pytest
from scipy import optimize

from sar.exceptions import NumericalError, StoppingError
from sar.utils.quadrature import composite_gauss_legendre, graded_edges, integrate_doubling
from sar.utils.rootfinding import find_crossing


def decreasing(t: float) -> float:
    return 1.0 - t / 3.0


class TestFindCrossing:
    def test_expands_right(self):
        bracket = find_crossing(decreasing, t_start=1.0, t_max=100.0)
        expected = optimize.brentq(decreasing, 1.0, 100.0, xtol=1e-14)
        assert math.isclose(bracket.hi, expected, rel_tol=1e-12)
        assert decreasing(bracket.lo) > 0 >= bracket.value

    def test_shrinks_left(self):
        """Старт уже за корнем: скобка ищется делением t"""
        bracket = find_crossing(decreasing, t_start=10.0, t_max=100.0)
        assert bracket.lo < 3.0 <= bracket.hi * (1.0 + 1e-12)
        assert bracket.value <= 0

    def test_abs_tol_stops_early(self):
        exact = find_crossing(decreasing, t_start=1.0, t_max=100.0)
        loose = find_crossing(decreasing, t_start=1.0, t_max=100.0, abs_tol=1e-3)
        assert loose.evaluations < exact.evaluations
        assert abs(loose.value) <= 1e-3

    def test_no_sign_change(self):
        with pytest.raises(StoppingError) as error:
            find_crossing(lambda t: 1.0, t_start=1.0, t_max=8.0)
        assert error.value.last_value == 1.0

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            find_crossing(decreasing, t_start=0.0, t_max=1.0)


class TestQuadrature:
    def test_graded_edges(self):
        edges = graded_edges(0.0, 1.0, 0.1)
        np.testing.assert_allclose(edges, [0.0, 0.0625, 0.125, 0.25, 0.5, 0.75, 0.875, 0.9375, 1.0])

    def test_coarse_resolution_is_one_panel(self):
        np.testing.assert_array_equal(graded_edges(0.0, 1.0, 2.0), [0.0, 1.0])

    def test_composite_weights_sum_to_length(self):
        _, weights = composite_gauss_legendre(np.array([0.0, 0.5, 2.0]), 8)
        assert math.isclose(weights.sum(), 2.0, rel_tol=1e-14)

    def test_vector_integrand(self):
        values = integrate_doubling(lambda s: np.vstack([np.exp(-s), s**2]), 0.0, 2.0, resolution=0.1)
        np.testing.assert_allclose(values, [-math.expm1(-2.0), 8.0 / 3.0], rtol=1e-10)

    def test_empty_interval(self):
        values = integrate_doubling(lambda s: np.vstack([s, s]), 1.0, 1.0)
        np.testing.assert_array_equal(values, [0.0, 0.0])

    def test_no_refinements_left(self):
        with pytest.raises(NumericalError) as error:
            integrate_doubling(np.sin, 0.0, 1.0, max_refinements=0)
        assert error.value.achieved_tolerance == math.inf

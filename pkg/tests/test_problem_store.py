"""Сохранение задачи в JSON и повторная загрузка без разложения"""
import json

import numpy as np
import pytest

from sar.exceptions import ConfigurationError
from sar.services.problem_store import load_problem, problem_to_dict, save_problem
from sar.services.spectral_operator import spectral_coefficients


class TestProblemStore:
    def test_saved_problem_keeps_singular_system(self, small_toy, tmp_path):
        path = save_problem(small_toy, tmp_path / "nested" / "toy.json")
        loaded = load_problem(path)
        np.testing.assert_array_equal(loaded.singular_values, small_toy.singular_values)
        np.testing.assert_array_equal(loaded.right_vectors, small_toy.right_vectors)
        np.testing.assert_array_equal(loaded.x_true, small_toy.x_true)
        assert loaded.name == "toy"
        assert loaded.domain_shape == (small_toy.n,)

    def test_problem_without_truth(self, tmp_path, diagonal):
        data = problem_to_dict(diagonal)
        data["x_true"] = data["y_exact"] = None
        path = tmp_path / "bare.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        assert load_problem(path).x_true is None

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_problem(tmp_path / "absent.json")

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_problem(path)

    def test_version_and_fields(self, tmp_path, diagonal):
        data = problem_to_dict(diagonal)
        path = tmp_path / "p.json"
        path.write_text(json.dumps({**data, "format_version": 99}), encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_problem(path)
        del data["matrix"]
        path.write_text(json.dumps(data), encoding="utf-8")
        with pytest.raises(ConfigurationError):
            load_problem(path)

    def test_loaded_problem_computes_identically(self, toy, tmp_path):
        """Задача из файла даёт побитово те же коэффициенты и синтез"""
        loaded = load_problem(save_problem(toy, tmp_path / "toy.json"))
        assert loaded.right_vectors.flags.c_contiguous and toy.right_vectors.flags.c_contiguous
        x = np.linspace(-1.0, 1.0, toy.n)
        np.testing.assert_array_equal(spectral_coefficients(loaded, x), spectral_coefficients(toy, x))
        coeffs = spectral_coefficients(toy, x)
        np.testing.assert_array_equal(loaded.synthesize(coeffs), toy.synthesize(coeffs))

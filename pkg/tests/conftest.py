"""Общие фикстуры: модельная задача, одномодовая и диагональная задачи, изоляция реестра"""
import numpy as np
import pytest

from sar.config import config
from sar.schemas import SourceConfig
from sar.services.problems import make_source_problem, make_toy_problem
from sar.services.spectral_operator import ForwardProblem


@pytest.fixture(scope="session")
def toy():
    """Модельная задача с ядром Грина на 100 узлах"""
    return make_toy_problem(100)


@pytest.fixture(scope="session")
def small_toy():
    return make_toy_problem(20)


@pytest.fixture(scope="session")
def single_mode():
    """A = 0.5 на R¹: σ_1 = 0.5, x† = 2, y = 1"""
    p = ForwardProblem.from_matrix([[0.5]], [1.0], [1.0], name="single")
    return p.with_solution(np.array([2.0]))


@pytest.fixture(scope="session")
def diagonal():
    """Четыре хорошо разделённые моды с единичными весами"""
    p = ForwardProblem.from_matrix(np.diag([1.0, 0.5, 0.25, 0.125]), np.ones(4), np.ones(4), name="diagonal")
    return p.with_solution(np.array([1.0, -1.0, 0.5, 2.0]))


@pytest.fixture(scope="session")
def source_problem():
    return make_source_problem(60, SourceConfig(exponent=0.5, rho=1.0, seed=7))


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch, tmp_path):
    """Реестр выключен, результаты - во временном каталоге"""
    monkeypatch.setattr(config, "RECORD_RUNS", False)
    monkeypatch.setattr(config, "OUTPUT_DIR", str(tmp_path / "results"))
    monkeypatch.setattr(config, "WORKERS", 1)
    monkeypatch.setattr(config, "CHUNK_SIZE", 250)

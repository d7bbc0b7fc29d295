"""
Сохранение задач в JSON: сетки, веса, матрица, сингулярная система, x_true, y_exact
"""
import json
import logging
from pathlib import Path

import numpy as np

from sar.exceptions import ConfigurationError
from sar.services.spectral_operator import ForwardProblem

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

_ARRAYS = (
    "matrix",
    "quadrature_weights_domain",
    "quadrature_weights_range",
    "grid_domain",
    "grid_range",
    "singular_values",
    "right_vectors",
    "left_vectors",
)


def problem_to_dict(p: ForwardProblem) -> dict:
    data = {"format_version": FORMAT_VERSION, "name": p.name, "domain_shape": list(p.domain_shape)}
    for name in _ARRAYS:
        data[name] = getattr(p, name).tolist()
    data["x_true"] = None if p.x_true is None else p.x_true.tolist()
    data["y_exact"] = None if p.y_exact is None else p.y_exact.tolist()
    return data


def problem_from_dict(data: dict) -> ForwardProblem:
    """Восстановить задачу без повторного разложения"""
    if data.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(f"Неподдерживаемая версия файла задачи: {data.get('format_version')}")
    missing = [name for name in _ARRAYS if name not in data]
    if missing:
        raise ConfigurationError(f"В файле задачи нет полей: {', '.join(missing)}")

    arrays = {name: np.asarray(data[name], dtype=float) for name in _ARRAYS}
    for name in ("right_vectors", "left_vectors", "matrix"):
        arrays[name] = np.atleast_2d(arrays[name])

    return ForwardProblem(
        **arrays,
        x_true=None if data.get("x_true") is None else np.asarray(data["x_true"], dtype=float),
        y_exact=None if data.get("y_exact") is None else np.asarray(data["y_exact"], dtype=float),
        name=data.get("name", "file"),
        domain_shape=tuple(data.get("domain_shape") or ()),
    )


def save_problem(p: ForwardProblem, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(problem_to_dict(p), handle)
    logger.info("✅ Задача %s сохранена: %s", p.name, path)
    return path


def load_problem(path: str | Path) -> ForwardProblem:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Файл задачи не найден: {path}")
    try:
        with open(path, "r", encoding="utf-8") as handle:
            data = json.load(handle)
    except json.JSONDecodeError as error:
        raise ConfigurationError(f"Файл задачи повреждён: {error}") from error
    return problem_from_dict(data)

"""
Файлы результатов: таблицы с заголовком, manifest.json и текстовые сводки
"""
import json
import logging
import platform
from importlib import metadata
from pathlib import Path
from typing import Optional

import pandas as pd

import sar
from sar.services.stopping_rules import StoppingOutcome

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "sqlalchemy")


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version(), "sar": sar.__version__}
    for name in _PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


class ReportWriter:
    """Пишет результаты одного запуска в свой каталог"""

    def __init__(self, output_dir: str | Path, master_seed: int, config_hash: str):
        """
        Args:
            output_dir: Каталог запуска (создаётся)
            master_seed: Зерно, попадает в заголовок каждого файла
            config_hash: Хэш конфигурации, тоже в заголовок
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.master_seed = master_seed
        self.config_hash = config_hash
        self.files: list[str] = []

    def _header(self, extra: Optional[dict] = None) -> str:
        items = {"master_seed": self.master_seed, "config_hash": self.config_hash}
        items.update(extra or {})
        return "".join(f"# {key}={value}\n" for key, value in items.items())

    def write_table(self, frame: pd.DataFrame, name: str, extra: Optional[dict] = None) -> Path:
        """
        Таблица CSV с заголовком '# key=value'

        Временных меток нет: повтор с тем же зерном даёт тот же файл побайтно.
        """
        path = self.output_dir / name
        with open(path, "w", encoding="utf-8", newline="") as handle:
            handle.write(self._header(extra))
            frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        self.files.append(name)
        logger.debug("Записан %s (%d строк)", path, len(frame))
        return path

    def write_json(self, payload: dict, name: str) -> Path:
        path = self.output_dir / name
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        self.files.append(name)
        return path

    def write_manifest(self, command: str, config: dict, timings: dict, summary: Optional[dict] = None) -> Path:
        """manifest.json: конфигурация, зерно, версии, время этапов"""
        payload = {
            "command": command,
            "master_seed": self.master_seed,
            "config_hash": self.config_hash,
            "config": config,
            "versions": package_versions(),
            "timings_seconds": timings,
            "summary": summary or {},
            "files": sorted(self.files),
        }
        path = self.output_dir / "manifest.json"
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(payload, handle, indent=2, sort_keys=True, default=_json_default)
        logger.info("✅ Результаты записаны в %s", self.output_dir)
        return path


def _json_default(value):
    if hasattr(value, "tolist"):
        return value.tolist()
    if hasattr(value, "value"):
        return value.value
    return str(value)


def format_outcome(outcome: StoppingOutcome, delta: float) -> str:
    """Короткая сводка правила останова для вывода в консоль"""
    lines = [
        f"⏱ Правило: {outcome.rule.value}",
        f"δ = {delta:.4g}",
        f"t* = {outcome.t_star:.6g}",
        f"Невязка в t*: {outcome.residual_at_stop:.6g}",
        f"Вычислений: {outcome.evaluations}",
    ]
    if outcome.flag:
        lines.append(f"⚠️ Флаг: {outcome.flag.value}")
    return "\n".join(lines)


def format_summary(title: str, summary: dict) -> str:
    lines = [title, "━━━━━━━━━━━━━━━━━━━"]
    for key, value in summary.items():
        if isinstance(value, float):
            value = f"{value:.6g}"
        lines.append(f"{key}: {value}")
    return "\n".join(lines)

"""Файлы результатов и текстовые сводки"""
import json

import pandas as pd

from sar.services.report_generator import ReportWriter, format_outcome, format_summary, package_versions
from sar.services.stopping_rules import StopFlag, StoppingOutcome, StoppingRule


def outcome(flag=None):
    return StoppingOutcome(StoppingRule.DISCREPANCY_CHI1, 12.5, 0.01, 40, (12.4, 12.5), flag)


class TestReportWriter:
    def test_table_header_and_precision(self, tmp_path):
        writer = ReportWriter(tmp_path / "run", master_seed=42, config_hash="abc")
        writer.write_table(pd.DataFrame({"x": [0.1, 1.0 / 3.0]}), "values.csv", {"t_end": 2.0})
        lines = (tmp_path / "run" / "values.csv").read_text(encoding="utf-8").splitlines()
        assert lines[:4] == ["# master_seed=42", "# config_hash=abc", "# t_end=2.0", "x"]
        assert float(lines[5]) == 1.0 / 3.0
        assert writer.files == ["values.csv"]

    def test_same_input_same_bytes(self, tmp_path):
        frame = pd.DataFrame({"a": [1.5, 2.5], "b": ["x", "y"]})
        first = ReportWriter(tmp_path / "a", 1, "h").write_table(frame, "t.csv")
        second = ReportWriter(tmp_path / "b", 1, "h").write_table(frame, "t.csv")
        assert first.read_bytes() == second.read_bytes()

    def test_manifest(self, tmp_path):
        writer = ReportWriter(tmp_path, master_seed=7, config_hash="h")
        writer.write_table(pd.DataFrame({"x": [1]}), "b.csv")
        writer.write_json({"flag": StopFlag.DEGENERATE}, "a.json")
        path = writer.write_manifest("solve", {"delta": 0.01}, {"problem": 0.5}, {"t_star": 1.0})
        manifest = json.loads(path.read_text(encoding="utf-8"))
        assert manifest["master_seed"] == 7
        assert manifest["files"] == ["a.json", "b.csv"]
        assert manifest["summary"] == {"t_star": 1.0}
        assert "numpy" in manifest["versions"]
        assert json.loads((tmp_path / "a.json").read_text(encoding="utf-8")) == {"flag": "degenerate"}

    def test_versions(self):
        versions = package_versions()
        assert {"python", "sar", "scipy"} <= set(versions)


class TestFormatting:
    def test_outcome(self):
        text = format_outcome(outcome(), 0.001)
        assert "discrepancy_chi1" in text
        assert "t* = 12.5" in text
        assert "Флаг" not in text
        assert "spectral_window_exceeded" in format_outcome(outcome(StopFlag.SPECTRAL_WINDOW_EXCEEDED), 0.001)

    def test_summary(self):
        text = format_summary("title", {"slope": 1.23456789, "n": 3})
        lines = text.splitlines()
        assert lines[0] == "title"
        assert set(lines[1]) == {"━"}
        assert lines[2:] == ["slope: 1.23457", "n: 3"]

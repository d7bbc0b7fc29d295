"""Подкоманды CLI: файлы результатов, коды выхода, реестр"""
import json
from pathlib import Path

import pytest

from database.database import close_db
from sar.config import config
from sar.exceptions import NumericalError, StoppingError
from sar.main import error_record, run_cli
from sar.schemas import ExperimentConfig

SMALL = ["--n", "30", "--n-paths", "40"]


def last_error(capsys) -> dict:
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def read_header(path) -> list[str]:
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line.startswith("#")]


class TestUsage:
    def test_unknown_command(self, capsys):
        assert run_cli(["deconvolve"]) == 2
        assert last_error(capsys)["error"] == "UsageError"

    def test_unknown_flag(self, capsys):
        assert run_cli(["solve", "--noise", "0.1"]) == 2

    def test_help(self, capsys):
        assert run_cli(["--help"]) == 0
        assert "solve" in capsys.readouterr().out

    def test_bad_rule(self, capsys, tmp_path):
        assert run_cli(["solve", *SMALL, "--rule", "morozov", "--output", str(tmp_path)]) == 2
        assert last_error(capsys)["error"] == "ConfigurationError"

    def test_invalid_config_value(self, capsys, tmp_path):
        assert run_cli(["solve", "--n", "3", "--output", str(tmp_path)]) == 2
        assert last_error(capsys)["error"] == "ValidationError"

    def test_truncated_config_file(self, capsys, tmp_path):
        """Битый JSON конфигурации - ошибка конфигурации, код 2"""
        broken = tmp_path / "broken.json"
        broken.write_text('{"n": 30, "delta": ', encoding="utf-8")
        assert run_cli(["solve", "--config", str(broken), "--output", str(tmp_path / "out")]) == 2
        assert last_error(capsys)["error"] == "ValidationError"

    def test_ensemble_needs_t_end(self, capsys, tmp_path):
        assert run_cli(["ensemble", *SMALL, "--output", str(tmp_path)]) == 2


class TestSolve:
    def test_writes_results(self, tmp_path, capsys):
        out = tmp_path / "solve"
        assert run_cli(["solve", *SMALL, "--seed", "5", "--output", str(out)]) == 0
        assert {"solution.csv", "stopping.csv", "manifest.json"} <= {path.name for path in out.iterdir()}
        header = read_header(out / "solution.csv")
        assert header[0] == "# master_seed=5"
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["master_seed"] == 5
        assert manifest["summary"]["rule"] == "discrepancy_chi1"
        assert "t* =" in capsys.readouterr().out

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert run_cli(["solve", *SMALL, "--output", str(tmp_path / name)]) == 0
        first = (tmp_path / "a" / "solution.csv").read_bytes()
        assert first == (tmp_path / "b" / "solution.csv").read_bytes()

    def test_schedule_recorded(self, tmp_path):
        out = tmp_path / "solve"
        assert run_cli(["solve", *SMALL, "--schedule-scale", "absolute", "--schedule-c", "0.1", "--output", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["schedule"]["scale"] == "absolute"
        assert "c=0.1" in manifest["summary"]["schedule"]

    @pytest.mark.slow
    def test_bands_cover_truth(self, tmp_path):
        """Модельная задача n = 100, δ = 1%, χ1, 1000 траекторий: 85%-полоса накрывает x† в ≥ 70% узлов"""
        out = tmp_path / "fig"
        assert run_cli(["solve", "--seed", "20210101", "--output", str(out)]) == 0
        summary = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["summary"]
        assert summary["coverage_85"] >= 0.70
        assert summary["coverage_70"] <= summary["coverage_85"]

    def test_default_output_dir(self):
        assert run_cli(["solve", *SMALL]) == 0
        produced = list(Path(config.OUTPUT_DIR).iterdir())
        assert len(produced) == 1
        assert produced[0].name.startswith("solve-")

    def test_stopping_failure(self, monkeypatch, capsys, tmp_path):
        def fail(*args, **kwargs):
            raise StoppingError("Порог не достигнут", last_value=0.25, delta=0.01)

        monkeypatch.setattr("sar.services.experiments.stopping_time", fail)
        assert run_cli(["solve", *SMALL, "--output", str(tmp_path)]) == 4
        record = last_error(capsys)
        assert record == {
            "error": "StoppingError",
            "message": "Порог не достигнут",
            "exit_code": 4,
            "last_value": 0.25,
            "delta": 0.01,
        }

    def test_numerical_failure(self, monkeypatch, capsys, tmp_path):
        def fail(*args, **kwargs):
            raise NumericalError("Квадратура не сошлась", achieved_tolerance=1e-3)

        monkeypatch.setattr("sar.services.experiments.stopping_time", fail)
        assert run_cli(["solve", *SMALL, "--output", str(tmp_path)]) == 3
        assert last_error(capsys)["achieved_tolerance"] == 1e-3

    def test_unexpected_failure(self, monkeypatch, capsys, tmp_path):
        def fail(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr("sar.services.experiments.stopping_time", fail)
        assert run_cli(["solve", *SMALL, "--output", str(tmp_path)]) == 1

    def test_error_record_skips_missing_fields(self):
        assert error_record(StoppingError("x"), 4) == {"error": "StoppingError", "message": "x", "exit_code": 4}


class TestOtherCommands:
    def test_ensemble_with_trace(self, tmp_path):
        out = tmp_path / "ens"
        argv = ["ensemble", *SMALL, "--scheme", "exp_euler", "--dt", "5", "--t-end", "50", "--trace"]
        assert run_cli([*argv, "--output", str(out)]) == 0
        assert {"ensemble.csv", "raw_moments.csv", "path.csv"} <= {path.name for path in out.iterdir()}

    def test_order(self, tmp_path):
        out = tmp_path / "order"
        assert run_cli(["order", *SMALL, "--dts", "4", "--output", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["dts"] == [0.1, 0.05, 0.025, 0.0125]
        assert "euler_slope" in manifest["summary"]

    def test_order_rejects_short_grid(self, capsys, tmp_path):
        assert run_cli(["order", *SMALL, "--dts", "2", "--output", str(tmp_path)]) == 2

    def test_rates(self, tmp_path):
        out = tmp_path / "rates"
        argv = ["rates", *SMALL, "--rule", "apriori", "--deltas", "1e-2", "1e-3", "1e-4", "1e-5"]
        assert run_cli([*argv, "--output", str(out)]) == 0
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["summary"]["source"] == "holder(p=0.5)"
        assert (out / "rates.csv").exists()

    def test_rates_need_spread(self, tmp_path):
        argv = ["rates", *SMALL, "--rule", "apriori", "--deltas", "1e-2", "5e-3", "2e-3", "1e-3"]
        assert run_cli([*argv, "--output", str(tmp_path)]) == 2

    def test_converse(self, tmp_path):
        out = tmp_path / "converse"
        assert run_cli(["converse", "--n", "30", "--points", "11", "--output", str(out)]) == 0
        assert (out / "converse_bias.csv").exists()
        assert (out / "converse_tail.csv").exists()

    def test_saved_problem_round_trip(self, tmp_path):
        saved = tmp_path / "toy.json"
        assert run_cli(["problem-info", "--n", "30", "--save", str(saved), "--output", str(tmp_path / "info")]) == 0
        assert (tmp_path / "info" / "spectrum.csv").exists()
        argv = ["solve", "--problem", "file", "--problem-file", str(saved), "--n-paths", "40"]
        assert run_cli([*argv, "--output", str(tmp_path / "from-file")]) == 0
        assert run_cli(["solve", *SMALL, "--output", str(tmp_path / "direct")]) == 0
        from_file = (tmp_path / "from-file" / "solution.csv").read_text(encoding="utf-8").splitlines()[3:]
        direct = (tmp_path / "direct" / "solution.csv").read_text(encoding="utf-8").splitlines()[3:]
        assert from_file == direct

    @pytest.mark.slow
    def test_biosensor(self, tmp_path):
        out = tmp_path / "bio"
        assert run_cli(["biosensor", "--grid", "8", "--n-paths", "40", "--output", str(out)]) == 0
        files = {path.name for path in out.iterdir()}
        assert {"rate_map.csv", "peaks.csv", "manifest.json"} <= files
        manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["qwiener"]["kind"] == "spectral"
        assert ExperimentConfig.model_validate(manifest["config"]).config_hash() == manifest["config_hash"]

    @pytest.mark.slow
    def test_biosensor_recovers_both_peaks(self, tmp_path):
        """Сетка 40×40, δ = 1%, χ1: у каждого истинного пика есть пик среднего в пределах 2 клеток"""
        out = tmp_path / "bio-full"
        assert run_cli(["biosensor", "--n-paths", "200", "--output", str(out)]) == 0
        summary = json.loads((out / "manifest.json").read_text(encoding="utf-8"))["summary"]
        assert len(summary["mean_cells_per_truth"]) == 2
        assert all(cells is not None and cells <= 2 for cells in summary["mean_cells_per_truth"])
        assert summary["relative_residual"] <= 0.05


class TestRegistry:
    @pytest.fixture
    def registry(self, monkeypatch, tmp_path):
        close_db()
        monkeypatch.setattr(config, "RECORD_RUNS", True)
        monkeypatch.setattr(config, "DATABASE_URL", f"sqlite:///{tmp_path / 'runs.db'}")
        yield
        close_db()

    def test_runs_are_recorded(self, registry, tmp_path, capsys):
        assert run_cli(["solve", *SMALL, "--output", str(tmp_path / "ok")]) == 0
        assert run_cli(["solve", *SMALL, "--rule", "morozov", "--output", str(tmp_path / "bad")]) == 2
        capsys.readouterr()

        assert run_cli(["runs"]) == 0
        out = capsys.readouterr().out
        assert "Запусков: 2" in out
        assert "✅" in out and "❌" in out

    def test_empty_registry(self, registry, capsys):
        assert run_cli(["runs", "--status", "failed"]) == 0
        assert "Запусков пока нет" in capsys.readouterr().out

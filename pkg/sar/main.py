"""
Главный файл CLI - точка входа
"""
import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from database import crud
from database.database import get_session, init_db
from sar.config import config
from sar.exceptions import SarError

# Импортируем все подкоманды
from sar.handlers import biosensor, converse, ensemble, order, problem_info, rates, runs, solve

logger = logging.getLogger(__name__)

HANDLERS = (solve, ensemble, rates, order, biosensor, problem_info, converse, runs)
USAGE_EXIT_CODE = 2
UNEXPECTED_EXIT_CODE = 1


def setup_logging(verbose: bool = False) -> None:
    """Настройка логирования"""
    level = logging.DEBUG if verbose else getattr(logging, config.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        stream=sys.stdout
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sar", description="Стохастическая асимптотическая регуляризация")
    parser.add_argument("-v", "--verbose", action="store_true", help="Логи уровня DEBUG")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in HANDLERS:
        module.register(subparsers)
    return parser


class RunRecorder:
    """
    Запись запуска в реестр

    Ошибки реестра только логируются: код выхода от них не зависит.
    """

    def __init__(self, command: str, enabled: bool):
        self.command = command
        self.enabled = enabled
        self.run_id: Optional[int] = None

    def start(self) -> None:
        if not self.enabled:
            return
        try:
            init_db()
            with get_session() as session:
                self.run_id = crud.create_run(session, self.command).id
        except Exception as error:
            logger.warning("⚠️ Реестр запусков недоступен: %s", error)
            self.run_id = None

    def finish(self, exit_code: int, ctx=None) -> None:
        if self.run_id is None:
            return
        try:
            details = {}
            if ctx is not None:
                details = {
                    "summary": ctx.summary,
                    "problem": ctx.cfg.problem,
                    "master_seed": ctx.master_seed,
                    "config_hash": ctx.config_hash,
                    "output_dir": str(ctx.output_dir),
                }
            with get_session() as session:
                crud.finish_run(session, self.run_id, exit_code, **details)
        except Exception as error:
            logger.warning("⚠️ Не удалось обновить запись запуска %s: %s", self.run_id, error)


def error_record(error: BaseException, exit_code: int) -> dict:
    """Машиночитаемая запись об ошибке для stderr"""
    record = {"error": type(error).__name__, "message": str(error), "exit_code": exit_code}
    for name in ("last_value", "delta", "achieved_tolerance"):
        value = getattr(error, name, None)
        if value is not None:
            record[name] = value
    return record


def _report(error: BaseException, exit_code: int) -> int:
    print(json.dumps(error_record(error, exit_code), ensure_ascii=False, default=str), file=sys.stderr)
    return exit_code


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Разобрать аргументы и выполнить подкоманду

    Returns:
        0 при успехе; 2 - конфигурация, 3 - численная ошибка, 4 - правило останова
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exit_:
        # argparse уже напечатал usage
        code = exit_.code if isinstance(exit_.code, int) else USAGE_EXIT_CODE
        if code:
            record = {"error": "UsageError", "message": "Неверные аргументы командной строки", "exit_code": code}
            print(json.dumps(record, ensure_ascii=False), file=sys.stderr)
        return code

    setup_logging(args.verbose)
    recorder = RunRecorder(args.command, enabled=args.record and config.RECORD_RUNS)
    recorder.start()

    ctx = None
    exit_code = 0
    try:
        ctx = args.handler(args)
    except ValidationError as error:
        logger.error("❌ Неверная конфигурация: %s", error)
        exit_code = _report(error, USAGE_EXIT_CODE)
    except SarError as error:
        logger.error("❌ %s: %s", type(error).__name__, error)
        exit_code = _report(error, error.exit_code)
    except KeyboardInterrupt as error:
        logger.info("⏹ Прервано пользователем")
        exit_code = _report(error, 130)
    except Exception as error:
        logger.exception("❌ Критическая ошибка: %s", error)
        exit_code = _report(error, UNEXPECTED_EXIT_CODE)
    finally:
        recorder.finish(exit_code, ctx)

    if exit_code == 0:
        logger.info("✅ %s завершена", args.command)
    return exit_code


if __name__ == "__main__":
    sys.exit(run_cli(sys.argv[1:]))

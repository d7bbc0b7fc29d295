"""
Подкоманда runs: последние запуски из реестра
"""
import argparse
import logging

from database import crud
from database.database import get_session, init_db
from database.models import RunStatus

logger = logging.getLogger(__name__)

COMMAND = "runs"


def register(subparsers) -> argparse.ArgumentParser:
    parser = subparsers.add_parser(COMMAND, help="Список запусков из реестра")
    parser.add_argument("--limit", type=int, default=20)
    parser.add_argument("--status", choices=[status.value for status in RunStatus])
    parser.add_argument("--config-hash", dest="config_hash", help="Все запуски одной конфигурации")
    parser.set_defaults(handler=run, record=False)
    return parser


def format_run(run) -> str:
    status_emoji = {RunStatus.SUCCESS: "✅", RunStatus.FAILED: "❌", RunStatus.RUNNING: "⏳"}
    duration = f"{run.duration_seconds:.1f} с" if run.duration_seconds is not None else "-"
    return (
        f"{status_emoji.get(run.status, '•')} #{run.id} {run.command} "
        f"[{run.problem or '-'}] seed={run.master_seed} hash={run.config_hash or '-'} "
        f"exit={run.exit_code if run.exit_code is not None else '-'} {duration}"
    )


def run(args: argparse.Namespace) -> None:
    init_db()
    with get_session() as session:
        if args.config_hash:
            runs = crud.get_runs_by_config_hash(session, args.config_hash)
        else:
            status = RunStatus(args.status) if args.status else None
            runs = crud.get_recent_runs(session, limit=args.limit, status=status)

    if not runs:
        print("📭 Запусков пока нет")
        return None

    print(f"📋 Запусков: {len(runs)}")
    print("━━━━━━━━━━━━━━━━━━━")
    for item in runs:
        print(format_run(item))
    return None

"""
CRUD операции реестра запусков
"""
import json
import logging
from datetime import datetime
from typing import List, Optional

from sqlalchemy import select
from sqlalchemy.orm import Session

from database.models import ExperimentRun, RunStatus

logger = logging.getLogger(__name__)


def _seed_text(master_seed: Optional[int]) -> Optional[str]:
    return None if master_seed is None else str(master_seed)


# ============ EXPERIMENT RUN CRUD ============

def create_run(
    session: Session,
    command: str,
    problem: Optional[str] = None,
    master_seed: Optional[int] = None,
    config_hash: Optional[str] = None,
    output_dir: Optional[str] = None,
) -> ExperimentRun:
    """Зарегистрировать начатый запуск"""
    run = ExperimentRun(
        command=command,
        problem=problem,
        master_seed=_seed_text(master_seed),
        config_hash=config_hash,
        output_dir=output_dir,
        status=RunStatus.RUNNING,
    )
    session.add(run)
    session.commit()
    session.refresh(run)
    return run


def finish_run(
    session: Session,
    run_id: int,
    exit_code: int,
    summary: Optional[dict] = None,
    problem: Optional[str] = None,
    master_seed: Optional[int] = None,
    config_hash: Optional[str] = None,
    output_dir: Optional[str] = None,
) -> Optional[ExperimentRun]:
    """
    Отметить завершение запуска (успех при exit_code == 0)

    Поля, известные только после разбора конфигурации, дописываются здесь.
    """
    run = session.get(ExperimentRun, run_id)
    if run is None:
        logger.warning("⚠️ Запуск %s не найден в реестре", run_id)
        return None

    run.finished_at = datetime.utcnow()
    run.duration_seconds = (run.finished_at - run.started_at).total_seconds()
    run.exit_code = exit_code
    run.status = RunStatus.SUCCESS if exit_code == 0 else RunStatus.FAILED
    if summary is not None:
        run.summary = json.dumps(summary, sort_keys=True, default=str)
    for name, value in (
        ("problem", problem),
        ("master_seed", _seed_text(master_seed)),
        ("config_hash", config_hash),
        ("output_dir", output_dir),
    ):
        if value is not None:
            setattr(run, name, value)
    session.commit()
    session.refresh(run)
    return run


def get_recent_runs(session: Session, limit: int = 20, status: Optional[RunStatus] = None) -> List[ExperimentRun]:
    """Последние запуски, новые первыми"""
    query = select(ExperimentRun)
    if status is not None:
        query = query.where(ExperimentRun.status == status)
    query = query.order_by(ExperimentRun.started_at.desc(), ExperimentRun.id.desc()).limit(limit)
    result = session.execute(query)
    return list(result.scalars().all())


def get_runs_by_config_hash(session: Session, config_hash: str) -> List[ExperimentRun]:
    """Все запуски одной конфигурации"""
    result = session.execute(
        select(ExperimentRun)
        .where(ExperimentRun.config_hash == config_hash)
        .order_by(ExperimentRun.started_at.asc(), ExperimentRun.id.asc())
    )
    return list(result.scalars().all())

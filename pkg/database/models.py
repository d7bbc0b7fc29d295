"""
SQLAlchemy модели реестра запусков
"""
from datetime import datetime
from typing import Optional

from sqlalchemy import DateTime, Enum, Float, Integer, String, Text
from sqlalchemy.orm import DeclarativeBase, Mapped, mapped_column

from sar.services.index_functions import NormalizedStrEnum


class Base(DeclarativeBase):
    """Базовый класс для всех моделей"""
    pass


class RunStatus(NormalizedStrEnum):
    """Статусы запусков"""
    RUNNING = "running"
    SUCCESS = "success"
    FAILED = "failed"


class ExperimentRun(Base):
    """Один вызов CLI"""
    __tablename__ = "experiment_runs"

    id: Mapped[int] = mapped_column(Integer, primary_key=True, autoincrement=True)
    command: Mapped[str] = mapped_column(String(64), nullable=False, index=True)
    problem: Mapped[Optional[str]] = mapped_column(String(64))
    master_seed: Mapped[Optional[str]] = mapped_column(String(20))  # 64-битные зёрна не влезают в INTEGER
    config_hash: Mapped[Optional[str]] = mapped_column(String(64), index=True)
    status: Mapped[RunStatus] = mapped_column(
        Enum(RunStatus, values_callable=lambda x: [e.value for e in x]),
        default=RunStatus.RUNNING,
        nullable=False,
        index=True,
    )
    exit_code: Mapped[Optional[int]] = mapped_column(Integer)

    # Время
    started_at: Mapped[datetime] = mapped_column(DateTime, default=datetime.utcnow, nullable=False)
    finished_at: Mapped[Optional[datetime]] = mapped_column(DateTime)
    duration_seconds: Mapped[Optional[float]] = mapped_column(Float)

    # Результаты
    output_dir: Mapped[Optional[str]] = mapped_column(Text)
    summary: Mapped[Optional[str]] = mapped_column(Text)  # JSON

    def __repr__(self):
        return f"<ExperimentRun(id={self.id}, command='{self.command}', status={self.status})>"

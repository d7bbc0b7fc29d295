"""
Подключение к базе данных и создание сессий
"""
import logging
from contextlib import contextmanager
from typing import Iterator

from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, sessionmaker

from database.models import Base
from sar.config import config

logger = logging.getLogger(__name__)

_engine: Engine | None = None
_session_maker: sessionmaker | None = None


def get_engine(database_url: str | None = None) -> Engine:
    """Engine создаётся лениво: импорт пакета не трогает файл базы"""
    global _engine, _session_maker
    if database_url is not None:
        close_db()
    if _engine is None:
        _engine = create_engine(
            database_url or config.DATABASE_URL,
            echo=False,  # Установить True для debug SQL запросов
        )
        _session_maker = sessionmaker(_engine, expire_on_commit=False, autoflush=False)
    return _engine


@contextmanager
def get_session() -> Iterator[Session]:
    """
    Получить сессию базы данных

    Использование:
        with get_session() as session:
            # работа с БД
    """
    get_engine()
    with _session_maker() as session:
        yield session


def init_db(database_url: str | None = None) -> None:
    """Инициализация базы данных - создание всех таблиц"""
    engine = get_engine(database_url)
    Base.metadata.create_all(engine)
    logger.info("✅ База данных инициализирована")


def close_db() -> None:
    """Закрытие подключения к базе данных"""
    global _engine, _session_maker
    if _engine is not None:
        _engine.dispose()
        logger.debug("Подключение к базе данных закрыто")
    _engine = None
    _session_maker = None

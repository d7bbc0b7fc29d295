"""Database package"""
from database.models import Base, ExperimentRun, RunStatus
from database.database import get_engine, get_session, init_db, close_db
from database import crud

__all__ = [
    "Base", "ExperimentRun", "RunStatus",
    "get_engine", "get_session", "init_db", "close_db",
    "crud"
]

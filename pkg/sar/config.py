"""
Конфигурация - загрузка переменных окружения
"""
import logging

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Загружаем переменные из .env файла
load_dotenv()

logger = logging.getLogger(__name__)

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class Settings(BaseSettings):
    """Настройки процесса (не путать с ExperimentConfig конкретного запуска)"""

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    # Воспроизводимость
    MASTER_SEED: int = Field(default=20210101, alias="SAR_MASTER_SEED")

    # Куда писать результаты
    OUTPUT_DIR: str = Field(default="results", alias="SAR_OUTPUT_DIR")

    LOG_LEVEL: str = Field(default="INFO", alias="SAR_LOG_LEVEL")

    # Параллельность ансамбля
    WORKERS: int = Field(default=1, alias="SAR_WORKERS")
    CHUNK_SIZE: int = Field(default=250, alias="SAR_CHUNK_SIZE")

    # Реестр запусков
    DATABASE_URL: str = Field(default="sqlite:///sar_runs.db", alias="DATABASE_URL")
    RECORD_RUNS: bool = Field(default=True, alias="SAR_RECORD_RUNS")

    def validate_settings(self) -> bool:
        """Проверка значений, которые pydantic не может проверить сам"""
        errors = []

        if not 0 <= self.MASTER_SEED < 2**64:
            errors.append("❌ SAR_MASTER_SEED должен быть 64-битным неотрицательным целым")

        if self.LOG_LEVEL.upper() not in LOG_LEVELS:
            errors.append(f"❌ SAR_LOG_LEVEL должен быть одним из {', '.join(LOG_LEVELS)}")

        if self.WORKERS < 1:
            errors.append("❌ SAR_WORKERS должен быть >= 1")

        if self.CHUNK_SIZE < 1:
            errors.append("❌ SAR_CHUNK_SIZE должен быть >= 1")

        if not self.DATABASE_URL:
            errors.append("⚠️ DATABASE_URL не установлен - реестр запусков отключён")

        if errors:
            for error in errors:
                logger.error(error)
            return all(error.startswith("⚠️") for error in errors)

        return True


# Глобальный экземпляр конфигурации
config = Settings()

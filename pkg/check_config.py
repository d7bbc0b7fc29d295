"""
Скрипт для проверки настроек окружения
Запустите перед первыми экспериментами
"""
from pathlib import Path

from sar.config import config


def check_config():
    """Проверка всех переменных окружения"""

    print("🔍 Проверка настроек SAR...\n")
    print("=" * 60)

    print(f"✅ SAR_MASTER_SEED: {config.MASTER_SEED}")

    output_dir = Path(config.OUTPUT_DIR)
    if output_dir.exists():
        print(f"✅ SAR_OUTPUT_DIR: {output_dir} (существует)")
    else:
        print(f"⚠️  SAR_OUTPUT_DIR: {output_dir} (будет создан при первом запуске)")

    print(f"✅ SAR_LOG_LEVEL: {config.LOG_LEVEL}")
    print(f"✅ SAR_WORKERS: {config.WORKERS}, SAR_CHUNK_SIZE: {config.CHUNK_SIZE}")

    if config.DATABASE_URL:
        print("✅ DATABASE_URL: установлен")
        # Скрываем пароль в выводе
        db_url = config.DATABASE_URL
        if "@" in db_url and ":" in db_url.split("@")[0].split("//")[-1]:
            scheme, rest = db_url.split("//", 1)
            user = rest.split(":", 1)[0]
            print(f"   Значение: {scheme}//{user}:****@{rest.split('@', 1)[1]}")
        else:
            print(f"   Значение: {db_url}")
    else:
        print("❌ DATABASE_URL: НЕ УСТАНОВЛЕН")

    if config.RECORD_RUNS:
        print("✅ SAR_RECORD_RUNS: запуски пишутся в реестр")
    else:
        print("⚠️  SAR_RECORD_RUNS: реестр отключён")

    print("=" * 60)

    # Итоговая валидация
    if config.validate_settings():
        print("\n✅ Настройки валидны! Можно запускать эксперименты.")
        print("\nПример: python -m sar.main solve --problem toy --n 100 --delta 0.01")
    else:
        print("\n❌ Настройки содержат ошибки!")
        print("\nСм. .env.example для примера")


if __name__ == "__main__":
    check_config()

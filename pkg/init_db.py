"""
Скрипт для инициализации реестра запусков (создание таблиц)
"""
from database.database import close_db, init_db


def main():
    print("🔄 Инициализация реестра запусков...")
    init_db()
    close_db()
    print("✅ Реестр успешно инициализирован!")
    print("\nСписок запусков: python -m sar.main runs")


if __name__ == "__main__":
    main()

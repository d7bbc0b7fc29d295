"""
Иерархия ошибок и коды выхода CLI
"""


class SarError(Exception):
    """Базовая ошибка пакета"""

    exit_code: int = 3


class ConfigurationError(SarError):
    """Неверные параметры: шаг по времени, семейства, квадратура"""

    exit_code = 2


class DomainError(SarError):
    """Нечисловые значения ядра, несовпадение размерностей"""

    exit_code = 3


class NumericalError(SarError):
    """Квадратура или поиск корня не сошлись"""

    exit_code = 3

    def __init__(self, message: str, achieved_tolerance: float | None = None):
        super().__init__(message)
        self.achieved_tolerance = achieved_tolerance


class UnsupportedProblemError(SarError):
    """Операция требует x_true, а задача его не содержит"""

    exit_code = 3


class StoppingError(SarError):
    """Правило останова не нашло смену знака до t_max"""

    exit_code = 4

    def __init__(self, message: str, last_value: float | None = None, delta: float | None = None):
        super().__init__(message)
        self.last_value = last_value
        self.delta = delta

"""
Поиск корня монотонной функции времени: расширение скобки и бисекция по log t
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable

from sar.exceptions import StoppingError

logger = logging.getLogger(__name__)

MAX_BISECTIONS = 200


@dataclass(frozen=True)
class RootBracket:
    """Результат поиска: корень, финальная скобка и число вычислений функции"""

    root: float
    lo: float
    hi: float
    value: float
    evaluations: int


def find_crossing(
    func: Callable[[float], float],
    t_start: float,
    t_max: float,
    factor: float = 2.0,
    abs_tol: float = 0.0,
    rel_width: float = 1e-15,
) -> RootBracket:
    """
    Найти первое t, где func меняет знак с + на -

    Скобка расширяется в `factor` раз от t_start (вниз, если уже func(t_start) < 0),
    затем бисекция по log t. На каждой итерации func(lo) > 0 >= func(hi).

    Args:
        func: Функция, положительная при малых t и отрицательная при больших
        t_start: Начальная точка расширения
        t_max: Правая граница; если знак не сменился - StoppingError
        factor: Множитель расширения скобки
        abs_tol: Досрочный выход при |func| <= abs_tol
        rel_width: Относительная ширина скобки для остановки

    Returns:
        RootBracket
    """
    if t_start <= 0 or t_max <= t_start:
        raise ValueError("Нужно 0 < t_start < t_max")

    evaluations = 0

    def evaluate(t: float) -> float:
        nonlocal evaluations
        evaluations += 1
        return float(func(t))

    t = t_start
    value = evaluate(t)

    if value > 0:
        # Расширяем вправо до смены знака
        lo, f_lo = t, value
        while value > 0:
            lo, f_lo = t, value
            if t >= t_max:
                raise StoppingError(
                    f"Нет смены знака до t_max={t_max:.6g}", last_value=value
                )
            t = min(t * factor, t_max)
            value = evaluate(t)
        hi, f_hi = t, value
    else:
        # Уже отрицательно: сужаем влево
        hi, f_hi = t, value
        while value <= 0:
            hi, f_hi = t, value
            t = t / factor
            if t < 1e-300:
                return RootBracket(root=hi, lo=0.0, hi=hi, value=f_hi, evaluations=evaluations)
            value = evaluate(t)
        lo, f_lo = t, value

    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(MAX_BISECTIONS):
        if f_hi == 0.0 or abs(f_hi) <= abs_tol:
            break
        if log_hi - log_lo <= rel_width:
            break
        log_mid = 0.5 * (log_lo + log_hi)
        mid_value = evaluate(math.exp(log_mid))
        if mid_value > 0:
            log_lo, f_lo = log_mid, mid_value
        else:
            log_hi, f_hi = log_mid, mid_value

    logger.debug(
        "Корень в [%.6g, %.6g], f(hi)=%.3e, вычислений: %d",
        math.exp(log_lo), math.exp(log_hi), f_hi, evaluations,
    )
    return RootBracket(
        root=math.exp(log_hi),
        lo=math.exp(log_lo),
        hi=math.exp(log_hi),
        value=f_hi,
        evaluations=evaluations,
    )

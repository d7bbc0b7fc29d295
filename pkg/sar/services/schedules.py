"""
Функция f(t) при стохастическом члене: параметрические семейства
"""
import math
from dataclasses import dataclass

import numpy as np

from sar.services.index_functions import NormalizedStrEnum, SourceFamily, SourceKind


class ScheduleKind(NormalizedStrEnum):
    """Семейства f(t)"""
    HOLDER_DECAY = "holder_decay"  # c·(1+t)^{-p}
    LOG_DECAY = "log_decay"  # c·log^{-μ}(e+t)
    CONSTANT = "constant"  # c
    ZERO = "zero"


@dataclass(frozen=True)
class NoiseSchedule:
    """
    Ограниченная глобально липшицева f(t) с известной константой Липшица

    Убывающие семейства удовлетворяют f(t) → 0 и f(t) = O(φ(1/t)) для
    соответствующего источника.
    """

    kind: ScheduleKind
    c: float = 0.0
    exponent: float = 0.0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("c должно быть >= 0")
        if self.kind == ScheduleKind.HOLDER_DECAY and self.exponent <= 0:
            raise ValueError("Показатель убывания должен быть > 0")
        if self.kind == ScheduleKind.LOG_DECAY and self.exponent <= 0:
            raise ValueError("μ должно быть > 0")

    @classmethod
    def holder_decay(cls, p_exp: float, c: float = 1.0) -> "NoiseSchedule":
        return cls(ScheduleKind.HOLDER_DECAY, c=c, exponent=p_exp)

    @classmethod
    def log_decay(cls, mu: float, c: float = 1.0) -> "NoiseSchedule":
        return cls(ScheduleKind.LOG_DECAY, c=c, exponent=mu)

    @classmethod
    def constant(cls, c: float) -> "NoiseSchedule":
        return cls(ScheduleKind.CONSTANT, c=c)

    @classmethod
    def zero(cls) -> "NoiseSchedule":
        return cls(ScheduleKind.ZERO)

    @classmethod
    def matched(cls, family: SourceFamily, c: float = 1.0) -> "NoiseSchedule":
        """f(t) = O(φ(1/t)) для источника family"""
        if family.kind == SourceKind.HOLDER:
            if family.exponent == 0:
                return cls.constant(c)
            return cls.holder_decay(family.exponent, c)
        return cls.log_decay(family.exponent, c)

    @classmethod
    def sqrt_matched(cls, family: SourceFamily, c: float = 1.0) -> "NoiseSchedule":
        """f(t) = C·√φ(1/t) (с точностью до сдвига t → 1+t)"""
        if family.kind == SourceKind.HOLDER:
            if family.exponent == 0:
                return cls.constant(c)
            return cls.holder_decay(family.exponent / 2.0, c)
        return cls.log_decay(family.exponent / 2.0, c)

    @property
    def is_zero(self) -> bool:
        return self.kind == ScheduleKind.ZERO or self.c == 0

    @property
    def is_decaying(self) -> bool:
        return self.kind in (ScheduleKind.HOLDER_DECAY, ScheduleKind.LOG_DECAY) or self.is_zero

    @property
    def lipschitz_bound(self) -> float:
        if self.kind == ScheduleKind.HOLDER_DECAY:
            return self.c * self.exponent
        if self.kind == ScheduleKind.LOG_DECAY:
            return self.c * self.exponent / math.e
        return 0.0

    @property
    def sup_norm(self) -> float:
        """‖f‖_∞ на [0, ∞)"""
        return 0.0 if self.kind == ScheduleKind.ZERO else self.c

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == ScheduleKind.HOLDER_DECAY:
            return self.c * np.power(1.0 + t, -self.exponent)
        if self.kind == ScheduleKind.LOG_DECAY:
            return self.c * np.power(np.log(math.e + t), -self.exponent)
        if self.kind == ScheduleKind.CONSTANT:
            return np.full_like(t, self.c)
        return np.zeros_like(t)

    def label(self) -> str:
        if self.kind == ScheduleKind.ZERO:
            return "zero"
        if self.kind == ScheduleKind.CONSTANT:
            return f"constant(c={self.c:g})"
        return f"{self.kind.value}({self.exponent:g}, c={self.c:g})"

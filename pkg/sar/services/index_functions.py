"""
Индексные функции условий истокообразности: Гёльдер и логарифмическая
"""
import enum
import math
from dataclasses import dataclass

import numpy as np


class NormalizedStrEnum(str, enum.Enum):
    """Enum, который принимает значения независимо от регистра."""

    @classmethod
    def _missing_(cls, value):  # type: ignore[override]
        if isinstance(value, str):
            normalized = value.lower()
            for member in cls:
                if member.value == normalized or member.name.lower() == normalized:
                    return member
        return None


class SourceKind(NormalizedStrEnum):
    """Семейства φ"""
    HOLDER = "holder"  # φ_p(λ) = λ^p
    LOGARITHMIC = "logarithmic"  # φ_μ(λ) = log^{-μ}(1/λ)


@dataclass(frozen=True)
class SourceFamily:
    """
    Индексная функция φ с параметром

    exponent - это p для Гёльдера и μ для логарифмического семейства.
    Логарифмическая функция при λ > e^{-μ-1} продолжена линейно (касательной),
    что сохраняет непрерывность и монотонность.
    """

    kind: SourceKind
    exponent: float

    def __post_init__(self):
        if self.kind == SourceKind.HOLDER and self.exponent < 0:
            raise ValueError("Показатель Гёльдера p должен быть >= 0")
        if self.kind == SourceKind.LOGARITHMIC and self.exponent <= 0:
            raise ValueError("Показатель μ должен быть > 0")

    @classmethod
    def holder(cls, p: float) -> "SourceFamily":
        return cls(SourceKind.HOLDER, float(p))

    @classmethod
    def logarithmic(cls, mu: float) -> "SourceFamily":
        return cls(SourceKind.LOGARITHMIC, float(mu))

    @property
    def switch_point(self) -> float:
        """λ₀ = e^{-μ-1}: граница, за которой логарифмическая φ продолжена"""
        return math.exp(-self.exponent - 1.0)

    def __call__(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if self.kind == SourceKind.HOLDER:
            if self.exponent == 0:
                return np.ones_like(lam)
            return np.power(np.maximum(lam, 0.0), self.exponent)

        mu = self.exponent
        lam0 = self.switch_point
        safe = np.clip(lam, 1e-300, lam0)
        inner = np.power(np.log(1.0 / safe), -mu)
        value0 = (mu + 1.0) ** -mu
        slope0 = mu * (mu + 1.0) ** (-mu - 1.0) / lam0
        outer = value0 + slope0 * (lam - lam0)
        values = np.where(lam > lam0, outer, inner)
        return np.where(lam > 0, values, 0.0)

    def theta(self, t) -> np.ndarray:
        """Θ(t) = t^{-1/2} φ(1/t)"""
        t = np.asarray(t, dtype=float)
        return np.power(t, -0.5) * self(1.0 / t)

    def a_priori_closed_form(self, delta: float) -> float | None:
        """t* = δ^{-2/(2p+1)} для Гёльдера, None для логарифмического"""
        if self.kind != SourceKind.HOLDER:
            return None
        return delta ** (-2.0 / (2.0 * self.exponent + 1.0))

    def rate_exponent(self) -> float | None:
        """Показатель 4p/(2p+1) для E‖x(t*)-x†‖² = O(δ^{...})"""
        if self.kind != SourceKind.HOLDER:
            return None
        p = self.exponent
        return 4.0 * p / (2.0 * p + 1.0)

    def label(self) -> str:
        if self.kind == SourceKind.HOLDER:
            return f"holder(p={self.exponent:g})"
        return f"logarithmic(mu={self.exponent:g})"

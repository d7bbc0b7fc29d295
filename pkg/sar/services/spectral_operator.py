"""
Дискретизация компактных операторов и их сингулярные системы

Скалярные произведения взвешены квадратурой: ⟨x, z⟩ = Σ w_i x_i z_i на области
определения и Σ ω_k y_k z_k на области значений. Сингулярные векторы
ортонормированы именно в этих произведениях, так что A u_j = σ_j v_j и
A* v_j = σ_j u_j с сопряжённым A* = W⁻¹ Mᵀ Ω.
"""
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy.special import exprel

from sar.exceptions import ConfigurationError, DomainError, UnsupportedProblemError
from sar.services.index_functions import SourceFamily

logger = logging.getLogger(__name__)

# σ_j < TRUNCATION·σ_1 считаются численным шумом
TRUNCATION = 1e-12

QUADRATURE_RULES = ("midpoint", "trapezoid", "gauss")


def _frozen(array) -> Optional[np.ndarray]:
    if array is None:
        return None
    # Единая C-раскладка: иначе BLAS даёт разные младшие биты для задачи из файла
    result = np.array(array, dtype=float, order="C")
    result.setflags(write=False)
    return result


@dataclass(frozen=True)
class ForwardProblem:
    """
    Дискретный оператор A с сингулярной системой

    matrix уже содержит квадратурные веса области определения,
    (A x)_k = Σ_i matrix[k, i] x_i. После создания не изменяется.
    """

    matrix: np.ndarray
    quadrature_weights_domain: np.ndarray
    quadrature_weights_range: np.ndarray
    grid_domain: np.ndarray
    grid_range: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray  # u_j по столбцам, n × r
    left_vectors: np.ndarray  # v_j по столбцам, m × r
    x_true: Optional[np.ndarray] = None
    y_exact: Optional[np.ndarray] = None
    name: str = "custom"
    domain_shape: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for name in (
            "matrix", "quadrature_weights_domain", "quadrature_weights_range",
            "grid_domain", "grid_range", "singular_values", "right_vectors",
            "left_vectors", "x_true", "y_exact",
        ):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if not self.domain_shape:
            object.__setattr__(self, "domain_shape", (self.n,))

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        return self.singular_values.size

    @property
    def norm(self) -> float:
        """‖A‖ = σ_1"""
        return float(self.singular_values[0])

    @property
    def eigenvalues(self) -> np.ndarray:
        """λ_j = σ_j² - спектр A*A"""
        return self.singular_values**2

    # ---- нормы и проекции ----

    def domain_inner(self, x: np.ndarray, z: np.ndarray) -> float:
        return float(np.sum(self.quadrature_weights_domain * x * z))

    def domain_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(self.domain_inner(x, x)))

    def range_norm(self, y: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.quadrature_weights_range * y * y)))

    def range_coefficients(self, y: np.ndarray) -> np.ndarray:
        """⟨y, v_j⟩ во взвешенном произведении области значений"""
        y = _check_dim(y, self.m, "range")
        return (y * self.quadrature_weights_range) @ self.left_vectors

    def synthesize(self, coeffs: np.ndarray, base: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Значения на сетке по коэффициентам ξ_j

        Компонента base вне span{u_j} сохраняется (A*A её не меняет).
        Работает и для пачки коэффициентов формы (paths, r).
        """
        values = np.asarray(coeffs) @ self.right_vectors.T
        if base is not None:
            values = values + self.unrepresented_part(base)
        return values

    def unrepresented_part(self, x: np.ndarray) -> np.ndarray:
        """x - Σ ⟨x,u_j⟩ u_j"""
        return x - self.right_vectors @ spectral_coefficients(self, x)

    def with_solution(self, x_true: np.ndarray, y_exact: Optional[np.ndarray] = None) -> "ForwardProblem":
        """Копия с x† и y = A x† (если y_exact не задан явно)"""
        x_true = _check_dim(x_true, self.n, "domain")
        if y_exact is None:
            y_exact = self.matrix @ x_true
        else:
            y_exact = _check_dim(y_exact, self.m, "range")
        return dataclasses.replace(self, x_true=x_true, y_exact=y_exact)

    # ---- конструкторы ----

    @classmethod
    def from_matrix(
        cls,
        matrix,
        quadrature_weights_domain,
        quadrature_weights_range,
        grid_domain=None,
        grid_range=None,
        name: str = "custom",
        domain_shape: tuple[int, ...] = (),
    ) -> "ForwardProblem":
        """
        Построить задачу по матрице и весам (взвешенное SVD)

        B = Ω^{1/2} M W^{-1/2} = P S Qᵀ, затем u_j = W^{-1/2} Q_j, v_j = Ω^{-1/2} P_j.
        """
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        m, n = matrix.shape
        w = np.asarray(quadrature_weights_domain, dtype=float).ravel()
        omega = np.asarray(quadrature_weights_range, dtype=float).ravel()

        if w.size != n or omega.size != m:
            raise DomainError(f"Веса ({w.size}, {omega.size}) не совпадают с матрицей {m}×{n}")
        if np.any(w <= 0) or np.any(omega <= 0):
            raise ConfigurationError("Квадратурные веса должны быть строго положительны")
        if not np.all(np.isfinite(matrix)):
            raise DomainError("Матрица оператора содержит нечисловые значения")

        sqrt_w = np.sqrt(w)
        sqrt_omega = np.sqrt(omega)
        scaled = sqrt_omega[:, None] * matrix / sqrt_w[None, :]
        p_vectors, sigma, q_vectors_t = np.linalg.svd(scaled, full_matrices=False)

        if sigma.size == 0 or sigma[0] <= 0:
            raise DomainError("Оператор нулевого ранга: нет положительных сингулярных чисел")

        keep = sigma >= TRUNCATION * sigma[0]
        sigma = sigma[keep]
        right = q_vectors_t[keep].T / sqrt_w[:, None]
        left = p_vectors[:, keep] / sqrt_omega[:, None]

        # Знак фиксируем, чтобы результат не зависел от LAPACK
        signs = np.sign(right[np.argmax(np.abs(right), axis=0), np.arange(sigma.size)])
        signs[signs == 0] = 1.0
        right = right * signs
        left = left * signs

        logger.debug("%s: ранг %d из %d, σ_1=%.6g, σ_r=%.3e", name, sigma.size, min(m, n), sigma[0], sigma[-1])

        return cls(
            matrix=matrix,
            quadrature_weights_domain=w,
            quadrature_weights_range=omega,
            grid_domain=np.arange(n, dtype=float) if grid_domain is None else grid_domain,
            grid_range=np.arange(m, dtype=float) if grid_range is None else grid_range,
            singular_values=sigma,
            right_vectors=right,
            left_vectors=left,
            name=name,
            domain_shape=tuple(domain_shape),
        )


@dataclass(frozen=True)
class SpectralFunctionTable:
    """Значения φ(λ_j) для спектра A*A"""

    name: str
    lambdas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.lambdas.shape != self.values.shape:
            raise DomainError("Длины lambdas и values не совпадают")
        if not np.all(np.isfinite(self.values)):
            raise DomainError(f"Нечисловые значения в таблице {self.name}")


def _check_dim(vector, size: int, space: str) -> np.ndarray:
    vector = np.asarray(vector, dtype=float)
    if vector.shape[-1] != size:
        raise DomainError(f"Размерность {space}: ожидалось {size}, получено {vector.shape[-1]}")
    return vector


def quadrature_rule(rule: str, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Узлы и веса на [0, 1]"""
    if count < 2:
        raise ConfigurationError("Нужно не меньше двух узлов")
    if rule == "midpoint":
        h = 1.0 / count
        return (np.arange(count) + 0.5) * h, np.full(count, h)
    if rule == "trapezoid":
        nodes = np.linspace(0.0, 1.0, count)
        weights = np.full(count, 1.0 / (count - 1))
        weights[[0, -1]] *= 0.5
        return nodes, weights
    if rule == "gauss":
        nodes, weights = legendre.leggauss(count)
        return 0.5 * (nodes + 1.0), 0.5 * weights
    raise ConfigurationError(f"Неизвестное квадратурное правило: {rule}")


def discretize_kernel(
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n: int,
    m: int,
    rule: str = "midpoint",
    name: str = "kernel",
) -> ForwardProblem:
    """
    Коллокация Нистрёма: (A x)(s_k) ≈ Σ_i K(s_k, t_i) w_i x_i

    Args:
        kernel: Векторизованная K(s, t)
        n: Число узлов области определения
        m: Число узлов области значений
        rule: midpoint, trapezoid или gauss

    Returns:
        ForwardProblem без x_true / y_exact
    """
    if n < 2 or m < 2:
        raise ConfigurationError("n и m должны быть >= 2")

    t_nodes, t_weights = quadrature_rule(rule, n)
    s_nodes, s_weights = quadrature_rule(rule, m)
    if np.any(t_weights <= 0) or np.any(s_weights <= 0):
        raise ConfigurationError(f"Вырожденная квадратура {rule}: нулевой вес")

    values = np.asarray(kernel(s_nodes[:, None], t_nodes[None, :]), dtype=float)
    values = np.broadcast_to(values, (m, n))
    if not np.all(np.isfinite(values)):
        raise DomainError("Ядро принимает нечисловые значения на [0,1]²")

    return ForwardProblem.from_matrix(
        values * t_weights[None, :],
        t_weights,
        s_weights,
        grid_domain=t_nodes,
        grid_range=s_nodes,
        name=name,
    )


def apply_forward(p: ForwardProblem, x) -> np.ndarray:
    """y = A x"""
    x = _check_dim(x, p.n, "domain")
    return x @ p.matrix.T


def apply_adjoint(p: ForwardProblem, y) -> np.ndarray:
    """A* y во взвешенных произведениях"""
    y = _check_dim(y, p.m, "range")
    return ((y * p.quadrature_weights_range) @ p.matrix) / p.quadrature_weights_domain


def spectral_coefficients(p: ForwardProblem, x) -> np.ndarray:
    """⟨x, u_j⟩ для всех сохранённых мод"""
    x = _check_dim(x, p.n, "domain")
    return (x * p.quadrature_weights_domain) @ p.right_vectors


def spectral_tail(p: ForwardProblem, x0, lam: float) -> float:
    """
    ω(λ) = Σ_{σ_j² ≤ λ} ⟨x0 - x†, u_j⟩²

    Не убывает по λ; при λ ≥ σ_1² равна квадрату нормы представимой части x0 - x†.
    """
    if p.x_true is None:
        raise UnsupportedProblemError("spectral_tail требует известного x_true")
    if lam < 0:
        raise ValueError("λ должна быть >= 0")
    coeffs = spectral_coefficients(p, np.asarray(x0, dtype=float) - p.x_true)
    window = p.eigenvalues <= lam
    return float(np.sum(coeffs[window] ** 2))


def g_function(t: float, lam) -> np.ndarray:
    """g(t, λ) = (1 - e^{-λt})/λ, с пределом t при λ → 0"""
    return t * exprel(-np.asarray(lam, dtype=float) * t)


def r_function(t: float, lam) -> np.ndarray:
    """r(t, λ) = e^{-λt}"""
    return np.exp(-np.asarray(lam, dtype=float) * t)


def spectral_table(p: ForwardProblem, name: str, t: float | None = None, family: SourceFamily | None = None) -> SpectralFunctionTable:
    """Таблица g, r или φ источника на спектре A*A"""
    lambdas = p.eigenvalues
    if name == "g":
        values = g_function(t, lambdas)
    elif name == "r":
        values = r_function(t, lambdas)
    elif name == "source":
        if family is None:
            raise ConfigurationError("Для таблицы source нужно семейство φ")
        values = family(lambdas)
        name = family.label()
    else:
        raise ConfigurationError(f"Неизвестная спектральная функция: {name}")
    return SpectralFunctionTable(name=name, lambdas=lambdas, values=values)


def brownian_bridge_coefficients(rank: int, rng: np.random.Generator) -> np.ndarray:
    """Случайные коэффициенты z_j / j (гладкость броуновского моста)"""
    return rng.standard_normal(rank) / np.arange(1, rank + 1)


def source_condition_solution(
    p: ForwardProblem,
    family: SourceFamily,
    rho: float,
    seed: int | None = None,
    x0=None,
    v=None,
) -> ForwardProblem:
    """
    Задать x† так, что x0 - x† = φ(A*A) v, ‖v‖ = ρ

    Если v не передан, он случайный с коэффициентами z_j/j в базисе {u_j}.
    Данные y_exact пересчитываются как A x†.

    Returns:
        Копия задачи с x_true и y_exact
    """
    if rho <= 0:
        raise ConfigurationError("ρ должна быть > 0")

    x0 = np.zeros(p.n) if x0 is None else _check_dim(x0, p.n, "domain")

    if v is None:
        rng = np.random.default_rng(seed)
        v_coeffs = brownian_bridge_coefficients(p.rank, rng)
    else:
        v_coeffs = spectral_coefficients(p, v)

    norm = float(np.linalg.norm(v_coeffs))
    if norm == 0:
        raise ConfigurationError("v не имеет компонент в представимом подпространстве")
    v_coeffs = v_coeffs * (rho / norm)

    difference = p.right_vectors @ (family(p.eigenvalues) * v_coeffs)
    return p.with_solution(x0 - difference)


def recover_source_element(p: ForwardProblem, family: SourceFamily, x0=None) -> np.ndarray:
    """Коэффициенты v = φ(A*A)^{-1}(x0 - x†) на сохранённых модах"""
    if p.x_true is None:
        raise UnsupportedProblemError("Нужен x_true")
    x0 = np.zeros(p.n) if x0 is None else np.asarray(x0, dtype=float)
    return spectral_coefficients(p, x0 - p.x_true) / family(p.eigenvalues)

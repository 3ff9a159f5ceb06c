"""Exact 2x2 real linear algebra.

Every value is immutable and every operation is a pure function of its
inputs. The module carries two independent matrix exponentials:

    expm_closed:   e^A = e^(tau/2) * [cosh(D) * I + sinhc(D) * (A - tau/2 * I)]
                   with tau = trace(A) and D^2 = tau^2/4 - det(A). Negative D^2
                   switches to the (cos, sinc) pair of |D|; a tiny |D^2| uses
                   truncated Taylor series. Only real functions are evaluated.
    expm_squaring: scaling and squaring around a Taylor kernel, the oracle the
                   closed form is tested against.

expm1_closed returns e^A - I without forming e^A first, which keeps matrices
close to the identity accurate entry by entry.
"""

import math
from dataclasses import dataclass
from enum import StrEnum
from typing import Iterable, Tuple, overload

import numpy as np
import numpy.typing as npt

from flycap.errors import DomainError, SingularMatrix

EPS_SING = 1e-300
SERIES_TERMS = 6
SERIES_CAP = 1e-3
TAYLOR_ORDER = 18
POWER_SUM_TERMS = 30

# cosh(sqrt(q)) - 1 and sinh(sqrt(q)) / sqrt(q) as power series in q
_COSH_TAIL = tuple(1.0 / math.factorial(2 * k) for k in range(1, SERIES_TERMS))
_SINHC = tuple(1.0 / math.factorial(2 * k + 1) for k in range(SERIES_TERMS))


def _all_finite(values: Iterable[float]) -> bool:
    return all(math.isfinite(x) for x in values)


@dataclass(frozen=True, slots=True)
class Vec2:
    first: float
    second: float

    def __post_init__(self) -> None:
        if not _all_finite((self.first, self.second)):
            raise DomainError(f"Vec2 entries must be finite, got {self.entries()}")

    def entries(self) -> Tuple[float, float]:
        return (self.first, self.second)

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.first + other.first, self.second + other.second)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.first - other.first, self.second - other.second)

    def __neg__(self) -> "Vec2":
        return Vec2(-self.first, -self.second)

    def scale(self, s: float) -> "Vec2":
        return Vec2(s * self.first, s * self.second)

    def norm_inf(self) -> float:
        return max(abs(self.first), abs(self.second))

    def to_array(self) -> npt.NDArray[np.float64]:
        return np.array(self.entries(), dtype=np.float64)

    @classmethod
    def zero(cls) -> "Vec2":
        return cls(0.0, 0.0)

    @classmethod
    def from_array(cls, values: npt.ArrayLike) -> "Vec2":
        first, second = np.asarray(values, dtype=np.float64).reshape(2)
        return cls(float(first), float(second))


@dataclass(frozen=True, slots=True)
class Mat2:
    m11: float
    m12: float
    m21: float
    m22: float

    def __post_init__(self) -> None:
        if not _all_finite(self.entries()):
            raise DomainError(f"Mat2 entries must be finite, got {self.entries()}")

    def entries(self) -> Tuple[float, float, float, float]:
        return (self.m11, self.m12, self.m21, self.m22)

    def trace(self) -> float:
        return self.m11 + self.m22

    def __add__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.m11 + other.m11,
            self.m12 + other.m12,
            self.m21 + other.m21,
            self.m22 + other.m22,
        )

    def __sub__(self, other: "Mat2") -> "Mat2":
        return Mat2(
            self.m11 - other.m11,
            self.m12 - other.m12,
            self.m21 - other.m21,
            self.m22 - other.m22,
        )

    def __neg__(self) -> "Mat2":
        return Mat2(-self.m11, -self.m12, -self.m21, -self.m22)

    def scale(self, s: float) -> "Mat2":
        return Mat2(s * self.m11, s * self.m12, s * self.m21, s * self.m22)

    @overload
    def __matmul__(self, other: "Mat2") -> "Mat2":
        ...

    @overload
    def __matmul__(self, other: Vec2) -> Vec2:
        ...

    def __matmul__(self, other: "Mat2 | Vec2") -> "Mat2 | Vec2":
        if isinstance(other, Vec2):
            return mat_vec(self, other)
        return mat_mul(self, other)

    def frobenius_norm(self) -> float:
        return math.sqrt(sum(x * x for x in self.entries()))

    def to_array(self) -> npt.NDArray[np.float64]:
        return np.array(
            [[self.m11, self.m12], [self.m21, self.m22]], dtype=np.float64
        )

    @classmethod
    def from_array(cls, values: npt.ArrayLike) -> "Mat2":
        m11, m12, m21, m22 = np.asarray(values, dtype=np.float64).reshape(4)
        return cls(float(m11), float(m12), float(m21), float(m22))

    @classmethod
    def identity(cls) -> "Mat2":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def diag(cls, d1: float, d2: float) -> "Mat2":
        return cls(d1, 0.0, 0.0, d2)


IDENTITY = Mat2.identity()


@dataclass(frozen=True, slots=True)
class CharPoly2:
    """p(lam) = lam^2 + alpha * lam + beta."""

    alpha: float
    beta: float

    def __call__(self, lam: float) -> float:
        return lam * lam + self.alpha * lam + self.beta


class ExpmBranch(StrEnum):
    AUTO = "auto"
    SERIES = "series"
    EXACT = "exact"


def det(A: Mat2) -> float:
    return A.m11 * A.m22 - A.m12 * A.m21


def inverse(A: Mat2) -> Mat2:
    d = det(A)
    if abs(d) <= EPS_SING:
        raise SingularMatrix(f"Matrix {A.entries()} is singular (det={d!r})")
    return Mat2(A.m22 / d, -A.m12 / d, -A.m21 / d, A.m11 / d)


def charpoly(A: Mat2) -> CharPoly2:
    return CharPoly2(alpha=-(A.m11 + A.m22), beta=det(A))


def mat_vec(A: Mat2, x: Vec2) -> Vec2:
    return Vec2(
        A.m11 * x.first + A.m12 * x.second,
        A.m21 * x.first + A.m22 * x.second,
    )


def mat_mul(A: Mat2, B: Mat2) -> Mat2:
    return Mat2(
        A.m11 * B.m11 + A.m12 * B.m21,
        A.m11 * B.m12 + A.m12 * B.m22,
        A.m21 * B.m11 + A.m22 * B.m21,
        A.m21 * B.m12 + A.m22 * B.m22,
    )


def _horner(coeffs: Tuple[float, ...], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def half_discriminant(A: Mat2) -> float:
    """tau^2/4 - det(A), written as ((m11 - m22)/2)^2 + m12 * m21."""
    half_gap = 0.5 * (A.m11 - A.m22)
    return half_gap * half_gap + A.m12 * A.m21


def series_threshold(trace: float) -> float:
    return min(1e-6 * max(1.0, trace * trace), SERIES_CAP)


def _exp_coefficients(A: Mat2, branch: ExpmBranch) -> Tuple[float, float, float]:
    """Return (c0, c0 - 1, c1) with e^A = c0 * I + c1 * (A - tau/2 * I)."""
    mu = 0.5 * A.trace()
    q = half_discriminant(A)
    use_series = branch is ExpmBranch.SERIES or q == 0.0
    if branch is ExpmBranch.AUTO and abs(q) < series_threshold(2.0 * mu):
        use_series = True

    if use_series:
        e_mu = math.exp(mu)
        cosh_tail = q * _horner(_COSH_TAIL, q)
        return (
            e_mu * (1.0 + cosh_tail),
            math.expm1(mu) + e_mu * cosh_tail,
            e_mu * _horner(_SINHC, q),
        )

    if q < 0.0:
        delta = math.sqrt(-q)
        e_mu = math.exp(mu)
        half_sin = math.sin(0.5 * delta)
        return (
            e_mu * math.cos(delta),
            math.expm1(mu) - 2.0 * e_mu * half_sin * half_sin,
            e_mu * math.sin(delta) / delta,
        )

    delta = math.sqrt(q)
    if delta <= 1.0:
        e_mu = math.exp(mu)
        half_sinh = math.sinh(0.5 * delta)
        return (
            e_mu * math.cosh(delta),
            math.expm1(mu) + 2.0 * e_mu * half_sinh * half_sinh,
            e_mu * math.sinh(delta) / delta,
        )

    # real eigenvalues mu +- delta, the smaller-magnitude one taken from det
    d = det(A)
    if mu < 0.0:
        upper, lower = -d / (delta - mu), mu - delta
    else:
        upper, lower = mu + delta, d / (mu + delta)
    e_upper, e_lower = math.exp(upper), math.exp(lower)
    return (
        0.5 * (e_upper + e_lower),
        0.5 * (math.expm1(upper) + math.expm1(lower)),
        0.5 * (e_upper - e_lower) / delta,
    )


def _exp_power_sums(trace: float, determinant: float) -> Tuple[float, float]:
    """Coefficients of e^A - I = -det * tail * I + c1 * A.

    Uses A^k = h(k-1) * A - det * h(k-2) * I where h is the complete
    homogeneous sum of the eigenvalues, h(k) = trace * h(k-1) - det * h(k-2).
    """
    h_prev, h = 0.0, 1.0
    inv_fact = 1.0
    c1 = tail = 0.0
    for k in range(1, POWER_SUM_TERMS + 1):
        inv_fact /= k
        c1 += inv_fact * h
        tail += inv_fact * h_prev
        h_prev, h = h, trace * h - determinant * h_prev
    return c1, tail


def expm_closed(A: Mat2, branch: ExpmBranch = ExpmBranch.AUTO) -> Mat2:
    try:
        c0, _, c1 = _exp_coefficients(A, branch)
    except OverflowError as exc:
        raise DomainError(f"e^A overflows for A={A.entries()}") from exc
    y = 0.5 * (A.m11 - A.m22)
    return Mat2(c0 + c1 * y, c1 * A.m12, c1 * A.m21, c0 - c1 * y)


def expm1_closed(A: Mat2) -> Mat2:
    tau, d = A.trace(), det(A)
    if abs(tau) <= 1.0 and abs(d) <= 1.0:
        c1, tail = _exp_power_sums(tau, d)
        c0m1 = -d * tail
        return Mat2(
            c0m1 + c1 * A.m11, c1 * A.m12, c1 * A.m21, c0m1 + c1 * A.m22
        )
    try:
        _, c0m1, c1 = _exp_coefficients(A, ExpmBranch.AUTO)
    except OverflowError as exc:
        raise DomainError(f"e^A overflows for A={A.entries()}") from exc
    y = 0.5 * (A.m11 - A.m22)
    return Mat2(c0m1 + c1 * y, c1 * A.m12, c1 * A.m21, c0m1 - c1 * y)


def expm_squaring(A: Mat2) -> Mat2:
    norm = max(abs(A.m11) + abs(A.m12), abs(A.m21) + abs(A.m22))
    squarings = max(0, math.ceil(math.log2(norm / 0.5))) if norm > 0.5 else 0
    B = A.scale(math.ldexp(1.0, -squarings))

    result = IDENTITY
    for k in range(TAYLOR_ORDER, 0, -1):
        result = IDENTITY + mat_mul(B, result).scale(1.0 / k)
    for _ in range(squarings):
        result = mat_mul(result, result)
    return result

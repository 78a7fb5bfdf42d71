"""High-precision plumbing shared by every module.

All real arithmetic runs on :mod:`mpmath` at a configurable binary precision
(256 bits by default).  mpmath floats carry unbounded exponents, so numbers
such as ``exp(-1e10)`` are representable; :class:`LogAmplitude` is the
sign/log-magnitude view used in interfaces and reports.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Union

import mpmath
from mpmath import mp, mpf

DEFAULT_PREC = 256
GUARD_BITS = 32
# Hard ceiling for locally raised precision (large-time phase reduction).
MAX_PREC = 1 << 16

Real = Union[mpf, int, float, Fraction, str]


class PrecisionError(ArithmeticError):
    """Working precision cannot certify the requested statement."""

    def __init__(self, message: str, required_bits: int | None = None):
        super().__init__(message)
        self.required_bits = required_bits


class CapacityError(OverflowError):
    """A construction exceeds representable sizes (never truncated silently)."""


if mp.prec < DEFAULT_PREC:
    mp.prec = DEFAULT_PREC


@contextmanager
def precision(bits: int) -> Iterator[None]:
    """Run a block at ``bits`` of binary precision."""
    if bits > MAX_PREC:
        raise PrecisionError(f"{bits} bits exceeds the configured ceiling {MAX_PREC}", bits)
    with mp.workprec(int(bits)):
        yield


def to_mpf(x: Real) -> mpf:
    if isinstance(x, mpf):
        return x
    if isinstance(x, Fraction):
        return mpf(x.numerator) / x.denominator
    return mpf(x)


def mpf_to_fraction(x: mpf) -> Fraction:
    """Exact rational value of a finite binary float."""
    if not x:
        return Fraction(0)
    man, exp = (int(v) for v in x.man_exp)
    man = abs(man) if x > 0 else -abs(man)
    return Fraction(man * 2**exp) if exp >= 0 else Fraction(man, 2**-exp)


def decimal_digits(prec: int | None = None) -> int:
    """Significant digits needed for a decimal round trip at ``prec`` bits."""
    prec = mp.prec if prec is None else prec
    return int(prec * math.log10(2)) + 3


def to_decimal(x: Real) -> str:
    x = to_mpf(x)
    if mpmath.isinf(x):
        return "inf" if x > 0 else "-inf"
    if mpmath.isnan(x):
        return "nan"
    return mpmath.nstr(x, decimal_digits(), min_fixed=-5, max_fixed=10, strip_zeros=True)


def from_decimal(text: str) -> mpf:
    return mpf(text.strip())


# ---------------------------------------------------------------------------
# Log-domain amplitudes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogAmplitude:
    """Real number stored as ``sign * exp(log_mag)``."""

    sign: int
    log_mag: mpf

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign}")
        object.__setattr__(self, "log_mag", to_mpf(self.log_mag))
        if self.sign == 0:
            object.__setattr__(self, "log_mag", mpf("-inf"))
        elif mpmath.isinf(self.log_mag) and self.log_mag < 0:
            object.__setattr__(self, "sign", 0)

    @classmethod
    def zero(cls) -> "LogAmplitude":
        return cls(0, mpf("-inf"))

    @classmethod
    def from_value(cls, x: Real) -> "LogAmplitude":
        x = to_mpf(x)
        if x == 0:
            return cls.zero()
        return cls(1 if x > 0 else -1, mpmath.log(abs(x)))

    @classmethod
    def from_log(cls, log_mag: Real, sign: int = 1) -> "LogAmplitude":
        return cls(sign, to_mpf(log_mag))

    def value(self) -> mpf:
        if self.sign == 0:
            return mpf(0)
        return self.sign * mpmath.exp(self.log_mag)

    __float__ = lambda self: float(self.value())  # noqa: E731

    def log10(self) -> mpf:
        return self.log_mag / mpmath.log(10)

    def __bool__(self) -> bool:
        return self.sign != 0

    def __neg__(self) -> "LogAmplitude":
        return LogAmplitude(-self.sign, self.log_mag)

    def __abs__(self) -> "LogAmplitude":
        return LogAmplitude(abs(self.sign), self.log_mag)

    @staticmethod
    def _coerce(other) -> "LogAmplitude":
        return other if isinstance(other, LogAmplitude) else LogAmplitude.from_value(other)

    def __mul__(self, other) -> "LogAmplitude":
        other = self._coerce(other)
        if not self or not other:
            return LogAmplitude.zero()
        return LogAmplitude(self.sign * other.sign, self.log_mag + other.log_mag)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "LogAmplitude":
        other = self._coerce(other)
        if not other:
            raise ZeroDivisionError("division by a zero LogAmplitude")
        if not self:
            return LogAmplitude.zero()
        return LogAmplitude(self.sign * other.sign, self.log_mag - other.log_mag)

    def __rtruediv__(self, other) -> "LogAmplitude":
        return self._coerce(other) / self

    def __pow__(self, p) -> "LogAmplitude":
        p = to_mpf(p)
        if not self:
            if p > 0:
                return LogAmplitude.zero()
            raise ZeroDivisionError("zero to a non-positive power")
        if self.sign < 0:
            if p != int(p):
                raise ValueError("non-integer power of a negative amplitude")
            sign = -1 if int(p) % 2 else 1
        else:
            sign = 1
        return LogAmplitude(sign, self.log_mag * p)

    def __add__(self, other) -> "LogAmplitude":
        other = self._coerce(other)
        if not other:
            return self
        if not self:
            return other
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        ratio = mpmath.exp(small.log_mag - big.log_mag)
        if big.sign == small.sign:
            return LogAmplitude(big.sign, big.log_mag + mpmath.log1p(ratio))
        if ratio == 1:
            return LogAmplitude.zero()
        return LogAmplitude(big.sign, big.log_mag + mpmath.log1p(-ratio))

    __radd__ = __add__

    def __sub__(self, other) -> "LogAmplitude":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "LogAmplitude":
        return self._coerce(other) - self

    def __eq__(self, other) -> bool:
        if not isinstance(other, (LogAmplitude, mpf, int, float)):
            return NotImplemented
        other = self._coerce(other)
        return self.sign == other.sign and (self.sign == 0 or self.log_mag == other.log_mag)

    def __hash__(self):
        return hash((self.sign, str(self.log_mag)))

    def __lt__(self, other) -> bool:
        other = self._coerce(other)
        if self.sign != other.sign:
            return self.sign < other.sign
        if self.sign == 0:
            return False
        if self.sign > 0:
            return self.log_mag < other.log_mag
        return self.log_mag > other.log_mag

    def __le__(self, other) -> bool:
        return self == other or self < other

    def __gt__(self, other) -> bool:
        return self._coerce(other) < self

    def __ge__(self, other) -> bool:
        return self == other or self > other

    def __repr__(self) -> str:
        if not self:
            return "LogAmplitude(0)"
        return f"LogAmplitude({'+' if self.sign > 0 else '-'}exp({mpmath.nstr(self.log_mag, 12)}))"

    def to_json(self) -> dict:
        return {"sign": self.sign, "log_mag": to_decimal(self.log_mag)}

    @classmethod
    def from_json(cls, data: dict) -> "LogAmplitude":
        return cls(int(data["sign"]), from_decimal(data["log_mag"]))


def log_sum(terms) -> LogAmplitude:
    """Sum of LogAmplitudes, largest magnitudes first."""
    total = LogAmplitude.zero()
    for term in sorted(terms, key=lambda a: a.log_mag, reverse=True):
        total = total + term
    return total


# ---------------------------------------------------------------------------
# Phase integrals: all of the closed-form flow reduces to these three.
# ---------------------------------------------------------------------------


def _sin_minus_id_over_sq(y: mpf) -> mpf:
    """(sin y - y)/y**2 without cancellation near y = 0."""
    if abs(y) >= 1:
        return (mpmath.sin(y) - y) / (y * y)
    eps = mpmath.eps * mpf(2) ** -8
    total, term, m = mpf(0), -y / 6, 1
    while term:
        total += term
        term = -term * y * y / ((2 * m + 2) * (2 * m + 3))
        m += 1
        if abs(term) <= eps * abs(total):
            break
    return total


def cos_integral(a: mpf, b: mpf, t: mpf) -> mpf:
    """Integral over [0, t] of cos(2 pi (a + b u)) du; exact at b = 0."""
    return t * mpmath.cospi(2 * a + b * t) * mpmath.sinc(mpmath.pi * b * t)


def sin_integral(a: mpf, b: mpf, t: mpf) -> mpf:
    """Integral over [0, t] of sin(2 pi (a + b u)) du; exact at b = 0."""
    return t * mpmath.sinpi(2 * a + b * t) * mpmath.sinc(mpmath.pi * b * t)


def cos_double_integral(a: mpf, b: mpf, t: mpf) -> mpf:
    """Integral over [0, t] of :func:`cos_integral` (a, b, u) du."""
    y = 2 * mpmath.pi * b * t
    one_minus_cos = mpmath.sinc(y / 2) ** 2 / 2
    return t * t * (mpmath.cospi(2 * a) * one_minus_cos + mpmath.sinpi(2 * a) * _sin_minus_id_over_sq(y))


def phase_bits(*products: mpf) -> int:
    """Extra bits needed so that a + b*t is resolved mod 1 at working precision."""
    worst = max((abs(p) for p in products), default=mpf(0))
    if worst <= 1:
        return 0
    return int(mpmath.ceil(mpmath.log(worst, 2)))

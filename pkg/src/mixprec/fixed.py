"""Q(m, n) fixed-point values with round-to-nearest and stochastic rounding.

A value is stored as a two's-complement integer ``raw`` and represents
``raw * 2**-n``.  Explicit conversions raise :class:`FixedRangeError` when the
input falls outside the format; arithmetic saturates instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

RandomSource = np.random.Generator


def make_rng(seed: int | None) -> RandomSource:
    return np.random.Generator(np.random.PCG64(seed))


class FixedRangeError(ValueError):
    pass


@dataclass(frozen=True)
class FixedFormat:
    integer_bits: int
    fraction_bits: int
    signed: bool = True

    def __post_init__(self):
        if self.integer_bits < 1 or self.fraction_bits < 0:
            raise ValueError("need integer_bits >= 1 and fraction_bits >= 0")
        if self.width > 64:
            raise ValueError(f"Q({self.integer_bits},{self.fraction_bits}) is wider than 64 bits")

    @property
    def width(self) -> int:
        return self.integer_bits + self.fraction_bits + int(self.signed)

    @property
    def epsilon(self) -> Fraction:
        return Fraction(1, 1 << self.fraction_bits)

    @property
    def raw_min(self) -> int:
        return -(1 << (self.integer_bits + self.fraction_bits)) if self.signed else 0

    @property
    def raw_max(self) -> int:
        return (1 << (self.integer_bits + self.fraction_bits)) - 1

    @property
    def min_value(self) -> Fraction:
        return self.raw_min * self.epsilon

    @property
    def max_value(self) -> Fraction:
        return self.raw_max * self.epsilon

    def __str__(self):
        return f"fixed({self.integer_bits},{self.fraction_bits})"


@dataclass(frozen=True)
class FixedValue:
    fmt: FixedFormat
    raw: int

    def __post_init__(self):
        if not self.fmt.raw_min <= self.raw <= self.fmt.raw_max:
            raise FixedRangeError(f"raw {self.raw} outside {self.fmt}")

    @property
    def value(self) -> Fraction:
        return self.raw * self.fmt.epsilon

    def __float__(self):
        return math.ldexp(self.raw, -self.fmt.fraction_bits)


def from_bits(bits: Sequence[int], fmt: FixedFormat) -> Fraction:
    """Weighted sum ``sum(b_i * 2**(i - n))`` with ``bits[i]`` the weight-``i`` bit."""
    n = fmt.fraction_bits
    return sum((Fraction(b) * Fraction(2) ** (i - n) for i, b in enumerate(bits)), Fraction(0))


def _scaled_split(x, fmt: FixedFormat) -> tuple[int, Fraction]:
    """Return ``(floor(x / eps), remainder in [0, 1))`` in units of eps."""
    s = Fraction(x) * (1 << fmt.fraction_bits)
    lo = math.floor(s)
    return lo, s - lo


def _checked(raw: int, fmt: FixedFormat, x) -> FixedValue:
    if not fmt.raw_min <= raw <= fmt.raw_max:
        raise FixedRangeError(f"{x} is outside the range of {fmt}")
    return FixedValue(fmt, raw)


def _saturate(raw: int, fmt: FixedFormat) -> FixedValue:
    return FixedValue(fmt, min(max(raw, fmt.raw_min), fmt.raw_max))


def floor_to_grid(x, fmt: FixedFormat) -> FixedValue:
    """Largest multiple of eps that is <= x."""
    lo, _ = _scaled_split(x, fmt)
    return _checked(lo, fmt, x)


def _nearest_raw(lo: int, rem: Fraction) -> int:
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and lo & 1):
        return lo + 1
    return lo


def _stochastic_raw(lo: int, rem: Fraction, rng: RandomSource) -> int:
    # one draw per call, even on-grid, so replays stay aligned
    u = rng.random()
    return lo + 1 if Fraction(u) < rem else lo


def round_nearest(x, fmt: FixedFormat) -> FixedValue:
    """Nearest grid point; ties go to the even raw integer."""
    lo, rem = _scaled_split(x, fmt)
    return _checked(_nearest_raw(lo, rem), fmt, x)


def round_stochastic(x, fmt: FixedFormat, rng: RandomSource) -> FixedValue:
    """Round down with probability ``1 - (x - floor(x)) / eps``, up otherwise."""
    lo, rem = _scaled_split(x, fmt)
    return _checked(_stochastic_raw(lo, rem, rng), fmt, x)


def fixed_add(a: FixedValue, b: FixedValue) -> FixedValue:
    if a.fmt != b.fmt:
        raise ValueError("format mismatch")
    return _saturate(a.raw + b.raw, a.fmt)


def fixed_mul(
    a: FixedValue,
    b: FixedValue,
    mode: str = "nearest",
    rng: RandomSource | None = None,
) -> FixedValue:
    """Exact product with 2n fraction bits, rounded back to n bits, then saturated."""
    if a.fmt != b.fmt:
        raise ValueError("format mismatch")
    n = a.fmt.fraction_bits
    lo, low_bits = divmod(a.raw * b.raw, 1 << n)
    rem = Fraction(low_bits, 1 << n)
    if mode == "nearest":
        raw = _nearest_raw(lo, rem)
    elif mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic rounding needs a RandomSource")
        raw = _stochastic_raw(lo, rem, rng)
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    return _saturate(raw, a.fmt)


def quantize_array(
    x: np.ndarray,
    fmt: FixedFormat,
    mode: str = "nearest",
    rng: RandomSource | None = None,
) -> np.ndarray:
    """Vectorized rounding of float64 values onto the grid, saturating at the bounds.

    Stochastic mode draws exactly one uniform per element.  Scaling by
    ``2**n`` is exact, so the remainder fed to the probability is exact too.
    """
    x = np.asarray(x, dtype=np.float64)
    scaled = np.ldexp(x, fmt.fraction_bits)
    if mode == "nearest":
        raw = np.rint(scaled)
    elif mode == "stochastic":
        if rng is None:
            raise ValueError("stochastic rounding needs a RandomSource")
        lo = np.floor(scaled)
        raw = lo + (rng.random(x.shape) < (scaled - lo))
    else:
        raise ValueError(f"unknown rounding mode {mode!r}")
    raw = np.clip(raw, fmt.raw_min, fmt.raw_max)
    return np.ldexp(raw, -fmt.fraction_bits)

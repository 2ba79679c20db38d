"""Exact bit-level codec for IEEE 754 binary interchange formats.

Every finite value handled here is a :class:`fractions.Fraction` (all binary
floats are dyadic rationals), so nothing in this module rounds through host
floating point.  Infinities and NaN are carried as the float constants
``math.inf``, ``-math.inf`` and ``math.nan``.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal, localcontext
from fractions import Fraction
from typing import Iterator, Union

ExtendedReal = Union[Fraction, float]
"""A finite exact value (``Fraction``) or one of ``inf``, ``-inf``, ``nan``."""


class FormatError(ValueError):
    """Raised on width mismatches, bad format parameters or unparsable patterns."""


class RoundingMode(str, enum.Enum):
    NEAREST_EVEN = "nearest-even"
    TOWARD_ZERO = "toward-zero"
    TOWARD_POSITIVE = "toward-positive"
    TOWARD_NEGATIVE = "toward-negative"


class FloatClass(str, enum.Enum):
    ZERO = "zero"
    SUBNORMAL = "subnormal"
    NORMAL = "normal"
    INFINITY = "infinity"
    NAN = "nan"


@dataclass(frozen=True)
class FloatFormat:
    """Parameters of a binary format: ``1 + exponent_bits + fraction_bits`` wide."""

    total_bits: int
    exponent_bits: int
    fraction_bits: int
    name: str = ""

    def __post_init__(self):
        if self.exponent_bits < 2 or self.fraction_bits < 1:
            raise FormatError("need at least 2 exponent bits and 1 fraction bit")
        if self.total_bits != 1 + self.exponent_bits + self.fraction_bits:
            raise FormatError(
                f"total_bits={self.total_bits} != 1 + {self.exponent_bits} + {self.fraction_bits}"
            )

    @property
    def bias(self) -> int:
        return (1 << (self.exponent_bits - 1)) - 1

    @property
    def precision(self) -> int:
        """Significand bits including the implicit leading one."""
        return self.fraction_bits + 1

    @property
    def emin(self) -> int:
        return 1 - self.bias

    @property
    def emax(self) -> int:
        return self.bias

    @property
    def exponent_all_ones(self) -> int:
        return (1 << self.exponent_bits) - 1

    @property
    def max_finite(self) -> Fraction:
        return Fraction((1 << self.precision) - 1) * _pow2(self.emax - self.fraction_bits)

    @property
    def smallest_normal(self) -> Fraction:
        return _pow2(self.emin)

    def pattern(self, value: int) -> "BitPattern":
        return BitPattern(value, self.total_bits)

    def __str__(self):
        return self.name or f"e{self.exponent_bits}f{self.fraction_bits}"


HALF = FloatFormat(16, 5, 10, "half")
SINGLE = FloatFormat(32, 8, 23, "single")
DOUBLE = FloatFormat(64, 11, 52, "double")
QUADRUPLE = FloatFormat(128, 15, 112, "quadruple")
OCTUPLE = FloatFormat(256, 19, 236, "octuple")
TOY8 = FloatFormat(8, 4, 3, "toy8")

FORMATS = {f.name: f for f in (HALF, SINGLE, DOUBLE, QUADRUPLE, OCTUPLE, TOY8)}
_ALIASES = {
    "float16": "half",
    "binary16": "half",
    "float32": "single",
    "binary32": "single",
    "float64": "double",
    "binary64": "double",
    "float128": "quadruple",
    "binary128": "quadruple",
    "float256": "octuple",
    "binary256": "octuple",
}


def get_format(name: str) -> FloatFormat:
    """Look up a format by name, alias, or ``e<E>f<F>`` (e.g. ``e4f3``)."""
    key = name.strip().lower()
    key = _ALIASES.get(key, key)
    if key in FORMATS:
        return FORMATS[key]
    m = re.fullmatch(r"e(\d+)f(\d+)", key)
    if m:
        e, f = int(m.group(1)), int(m.group(2))
        return FloatFormat(1 + e + f, e, f)
    raise FormatError(f"unknown format {name!r}")


@dataclass(frozen=True)
class BitPattern:
    value: int
    width: int

    def __post_init__(self):
        if self.width <= 0:
            raise FormatError("width must be positive")
        if not 0 <= self.value < (1 << self.width):
            raise FormatError(f"{self.value:#x} does not fit in {self.width} bits")

    def bit(self, i: int) -> int:
        return (self.value >> i) & 1


@dataclass(frozen=True)
class DecodedFields:
    sign: int
    biased_exponent: int
    fraction: Fraction


def _pow2(n: int) -> Fraction:
    return Fraction(1 << n) if n >= 0 else Fraction(1, 1 << -n)


def _check(p: BitPattern, fmt: FloatFormat) -> None:
    if p.width != fmt.total_bits:
        raise FormatError(f"pattern width {p.width} does not match {fmt} ({fmt.total_bits} bits)")


def _split(p: BitPattern, fmt: FloatFormat) -> tuple[int, int, int]:
    _check(p, fmt)
    v = p.value
    frac = v & ((1 << fmt.fraction_bits) - 1)
    exp = (v >> fmt.fraction_bits) & fmt.exponent_all_ones
    sign = v >> (fmt.total_bits - 1)
    return sign, exp, frac


def _join(sign: int, exp: int, frac: int, fmt: FloatFormat) -> BitPattern:
    return BitPattern(
        (sign << (fmt.total_bits - 1)) | (exp << fmt.fraction_bits) | frac,
        fmt.total_bits,
    )


def fields(p: BitPattern, fmt: FloatFormat) -> DecodedFields:
    sign, exp, frac = _split(p, fmt)
    return DecodedFields(-1 if sign else 1, exp, Fraction(frac, 1 << fmt.fraction_bits))


def decode(p: BitPattern, fmt: FloatFormat) -> ExtendedReal:
    sign, exp, frac = _split(p, fmt)
    s = -1 if sign else 1
    if exp == fmt.exponent_all_ones:
        if frac:
            return math.nan
        return s * math.inf
    if exp == 0:
        # subnormal: s * 2^(1-bias) * f
        return s * Fraction(frac) * _pow2(fmt.emin - fmt.fraction_bits)
    return s * Fraction((1 << fmt.fraction_bits) | frac) * _pow2(exp - fmt.bias - fmt.fraction_bits)


def classify(p: BitPattern, fmt: FloatFormat) -> FloatClass:
    _, exp, frac = _split(p, fmt)
    if exp == fmt.exponent_all_ones:
        return FloatClass.NAN if frac else FloatClass.INFINITY
    if exp == 0:
        return FloatClass.SUBNORMAL if frac else FloatClass.ZERO
    return FloatClass.NORMAL


def is_nan(x) -> bool:
    return isinstance(x, float) and math.isnan(x)


def to_exact(x) -> ExtendedReal:
    """Coerce ints, floats, Decimals, Fractions and decimal strings to an ExtendedReal."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        t = x.strip().lower()
        if t in ("inf", "+inf", "infinity", "+infinity"):
            return math.inf
        if t in ("-inf", "-infinity"):
            return -math.inf
        if t in ("nan", "+nan", "-nan"):
            return math.nan
        try:
            return Fraction(t)
        except ValueError as exc:
            raise FormatError(f"cannot parse {x!r} as a number") from exc
    if isinstance(x, float) and not math.isfinite(x):
        return x
    if isinstance(x, Decimal) and not x.is_finite():
        return math.nan if x.is_nan() else (math.inf if x > 0 else -math.inf)
    return Fraction(x)


def _round_magnitude(a: Fraction, fmt: FloatFormat, up: bool | None) -> tuple[int, int]:
    """Round a positive value to (significand, quantum exponent) on the format grid.

    ``up`` is True to round away from zero, False to truncate, None for
    nearest-even.  Exponent range overflow is left to the caller.
    """
    n, d = a.numerator, a.denominator
    e = n.bit_length() - d.bit_length()
    if (n << max(0, -e)) < (d << max(0, e)):
        e -= 1
    q = max(e, fmt.emin) - fmt.fraction_bits
    if q >= 0:
        num, den = n, d << q
    else:
        num, den = n << -q, d
    m, r = divmod(num, den)
    if r:
        if up is None:
            twice = 2 * r
            if twice > den or (twice == den and m & 1):
                m += 1
        elif up:
            m += 1
    if m == 1 << fmt.precision:
        m >>= 1
        q += 1
    return m, q


def encode(x, fmt: FloatFormat, mode: RoundingMode = RoundingMode.NEAREST_EVEN) -> BitPattern:
    """Round ``x`` into ``fmt`` under ``mode`` and return its bit pattern."""
    if isinstance(x, float) and x == 0:
        return _join(int(math.copysign(1.0, x) < 0), 0, 0, fmt)
    x = to_exact(x)
    mode = RoundingMode(mode)
    if is_nan(x):
        return _join(0, fmt.exponent_all_ones, 1 << (fmt.fraction_bits - 1), fmt)
    if isinstance(x, float):
        return _join(int(x < 0), fmt.exponent_all_ones, 0, fmt)
    sign = int(x < 0)
    a = -x if sign else x
    if a == 0:
        return _join(sign, 0, 0, fmt)
    if mode is RoundingMode.NEAREST_EVEN:
        up = None
    elif mode is RoundingMode.TOWARD_ZERO:
        up = False
    elif mode is RoundingMode.TOWARD_POSITIVE:
        up = not sign
    else:
        up = bool(sign)
    m, q = _round_magnitude(a, fmt, up)
    if m == 0:
        return _join(sign, 0, 0, fmt)
    if m < (1 << fmt.fraction_bits):
        return _join(sign, 0, m, fmt)
    exp = q + fmt.fraction_bits + fmt.bias
    if exp >= fmt.exponent_all_ones:
        to_inf = up is None or up
        if to_inf:
            return _join(sign, fmt.exponent_all_ones, 0, fmt)
        return _join(sign, fmt.exponent_all_ones - 1, (1 << fmt.fraction_bits) - 1, fmt)
    return _join(sign, exp, m - (1 << fmt.fraction_bits), fmt)


def round_to(x, fmt: FloatFormat, mode: RoundingMode = RoundingMode.NEAREST_EVEN) -> ExtendedReal:
    """``decode(encode(x))``: the representable value selected by ``mode``."""
    return decode(encode(x, fmt, mode), fmt)


def convert(
    p: BitPattern,
    src: FloatFormat,
    dst: FloatFormat,
    mode: RoundingMode = RoundingMode.NEAREST_EVEN,
) -> BitPattern:
    sign, _, _ = _split(p, src)
    if classify(p, src) is FloatClass.ZERO:
        return _join(sign, 0, 0, dst)
    return encode(decode(p, src), dst, mode)


def next_up(p: BitPattern, fmt: FloatFormat) -> BitPattern:
    """Smallest representable value strictly greater than ``p``."""
    cls = classify(p, fmt)
    if cls is FloatClass.NAN:
        raise FormatError("next_up of NaN")
    sign, exp, frac = _split(p, fmt)
    if cls is FloatClass.ZERO:
        return _join(0, 0, 1, fmt)
    magnitude = p.value & ((1 << (fmt.total_bits - 1)) - 1)
    if not sign:
        if cls is FloatClass.INFINITY:
            return p
        return BitPattern(p.value + 1, fmt.total_bits)
    if magnitude == 1:
        return _join(1, 0, 0, fmt)
    return BitPattern(p.value - 1, fmt.total_bits)


def negate(p: BitPattern, fmt: FloatFormat) -> BitPattern:
    _check(p, fmt)
    return BitPattern(p.value ^ (1 << (fmt.total_bits - 1)), fmt.total_bits)


def next_down(p: BitPattern, fmt: FloatFormat) -> BitPattern:
    """Largest representable value strictly less than ``p``."""
    return negate(next_up(negate(p, fmt), fmt), fmt)


def binade_count(fmt: FloatFormat, n: int) -> int:
    """Number of representable values in ``[2**n, 2**(n+1))``; constant per binade."""
    if not fmt.emin <= n <= fmt.emax:
        raise FormatError(f"binade {n} outside normal range [{fmt.emin}, {fmt.emax}] of {fmt}")
    return 1 << fmt.fraction_bits


def smallest_positive(fmt: FloatFormat) -> Fraction:
    return _pow2(fmt.emin - fmt.fraction_bits)


MAX_ENUMERABLE_BITS = 16


def enumerate_values(fmt: FloatFormat) -> Iterator[tuple[BitPattern, ExtendedReal]]:
    """All patterns of a small format in sign-magnitude order, with decoded values.

    Order: negative patterns from largest magnitude to smallest, then positive
    ones from zero upwards, so non-NaN values come out ascending.
    """
    if fmt.total_bits > MAX_ENUMERABLE_BITS:
        raise FormatError(f"{fmt} has {fmt.total_bits} bits; enumeration capped at {MAX_ENUMERABLE_BITS}")
    half = 1 << (fmt.total_bits - 1)
    for mag in range(half - 1, -1, -1):
        p = BitPattern(half | mag, fmt.total_bits)
        yield p, decode(p, fmt)
    for mag in range(half):
        p = BitPattern(mag, fmt.total_bits)
        yield p, decode(p, fmt)


def binade_counts_enumerated(fmt: FloatFormat) -> dict[int, int]:
    """Count distinct positive finite values per binade by exhaustive enumeration."""
    counts: dict[int, int] = {}
    seen = set()
    for _, v in enumerate_values(fmt):
        if isinstance(v, float) or v <= 0 or v in seen:
            continue
        seen.add(v)
        e = v.numerator.bit_length() - v.denominator.bit_length()
        if v < _pow2(e):
            e -= 1
        counts[e] = counts.get(e, 0) + 1
    return counts


# -- textual forms ---------------------------------------------------------

def format_pattern(p: BitPattern, fmt: FloatFormat) -> str:
    """Grouped form ``S EEEEEEEE FFF...``."""
    _check(p, fmt)
    s = format(p.value, f"0{fmt.total_bits}b")
    return f"{s[0]} {s[1:1 + fmt.exponent_bits]} {s[1 + fmt.exponent_bits:]}"


def format_hex(p: BitPattern) -> str:
    return f"0x{p.value:0{(p.width + 3) // 4}x}"


def looks_like_pattern(text: str, fmt: FloatFormat) -> bool:
    t = text.strip().lower()
    if t.startswith("0x"):
        return True
    compact = re.sub(r"[\s_]", "", t)
    return len(compact) == fmt.total_bits and set(compact) <= {"0", "1"}


def parse_pattern(text: str, fmt: FloatFormat) -> BitPattern:
    """Parse ``0x...`` hex or the grouped binary form (whitespace ignored)."""
    t = text.strip().lower()
    if t.startswith("0x"):
        try:
            v = int(t[2:].replace("_", ""), 16)
        except ValueError as exc:
            raise FormatError(f"bad hex pattern {text!r}") from exc
        return BitPattern(v, fmt.total_bits)
    compact = re.sub(r"[\s_]", "", t)
    if len(compact) != fmt.total_bits or not set(compact) <= {"0", "1"}:
        raise FormatError(f"{text!r} is not a {fmt.total_bits}-bit binary pattern")
    return BitPattern(int(compact, 2), fmt.total_bits)


def exact_decimal(x: ExtendedReal, max_digits: int = 2000) -> str:
    """Exact decimal expansion of a dyadic value (every dyadic has a finite one).

    Falls back to 40 significant digits in scientific notation when the exact
    expansion would exceed ``max_digits`` characters.
    """
    if isinstance(x, float):
        return repr(x)
    if x.denominator == 1:
        return str(x.numerator)
    k = x.denominator.bit_length() - 1  # denominator == 2**k
    sign = "-" if x < 0 else ""
    scaled = abs(x.numerator) * 5**k
    digits = str(scaled)
    if len(digits) + k > max_digits:
        with localcontext() as ctx:
            ctx.prec = 40
            return format(Decimal(x.numerator) / Decimal(x.denominator), ".39e")
    digits = digits.rjust(k + 1, "0")
    return f"{sign}{digits[:-k]}.{digits[-k:]}"


def to_decimal_places(x: ExtendedReal, places: int) -> str:
    """Round-half-even decimal rendering with a fixed number of places, like ``'%.20f'``."""
    if isinstance(x, float):
        return repr(x)
    d = Decimal(exact_decimal(x, max_digits=1 << 62))
    with localcontext() as ctx:
        ctx.prec = max(1, d.adjusted() + 1) + places + 2
        return format(d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_EVEN), "f")

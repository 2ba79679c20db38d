"""FMA-based mixed-precision matrix products with exact rational oracles.

Matrices hold half/single/double values in float64 arrays (float64 embeds all
three formats exactly) tagged with their storage format.  Rounding into half
and single is done on those float64 carriers with exact tricks:

* power-of-two scaling plus ``rint`` gives a correctly rounded nearest-even
  result for any format whose precision and exponent range fit inside double;
* a product of two values with at most 26 significand bits is exact in double;
* a sum is first made exact with TwoSum, then rounded to odd in double, which
  makes the following nearest-even rounding to a format at least two bits
  narrower correct (no double-rounding error).

The scalar :func:`fma` and :func:`gemm_oracle` use ``Fraction`` arithmetic and
serve as independent references for the vectorized paths.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import TextIO

import numpy as np

from . import codec
from .codec import DOUBLE, HALF, SINGLE, FloatFormat

LINALG_FORMATS = {f.name: f for f in (HALF, SINGLE, DOUBLE)}


def _require_linalg_format(fmt: FloatFormat) -> None:
    if fmt not in (HALF, SINGLE, DOUBLE):
        raise codec.FormatError(f"linear algebra supports half/single/double only, got {fmt}")


_MAX_FINITE = {f: float(f.max_finite) for f in (HALF, SINGLE, DOUBLE)}


def _product_exact_in_double(fmt: FloatFormat) -> bool:
    return 2 * fmt.precision <= DOUBLE.precision


# -- elementwise rounding ----------------------------------------------------

def quantize(x, fmt: FloatFormat) -> np.ndarray:
    """Round float64 values to ``fmt`` (nearest-even, gradual underflow, overflow to inf)."""
    _require_linalg_format(fmt)
    x = np.asarray(x, dtype=np.float64)
    if fmt is DOUBLE:
        return x.copy()
    with np.errstate(invalid="ignore", over="ignore"):
        _, e = np.frexp(x)
        q = np.maximum(e - 1, fmt.emin) - fmt.fraction_bits
        r = np.ldexp(np.rint(np.ldexp(x, -q)), q)
        return np.where(np.abs(r) > _MAX_FINITE[fmt], np.copysign(np.inf, x), r)


def _round_odd_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``a + b`` rounded to odd in double (sticky bit kept in the last place)."""
    with np.errstate(invalid="ignore", over="ignore"):
        s = a + b
        bb = s - a
        t = (a - (s - bb)) + (b - bb)
        t = np.where(np.isfinite(s), t, 0.0)
        even = (np.asarray(s).view(np.int64) & 1) == 0
        need = (t != 0) & even
        if not np.any(need):
            return s
        return np.where(need, np.nextafter(s, np.copysign(np.inf, t)), s)


def _sum_exact_in_double(fmt: FloatFormat) -> bool:
    # span between the largest and smallest bit of any two format values
    return fmt.emax + 1 - (fmt.emin - fmt.fraction_bits) <= DOUBLE.precision


def add(a, b, fmt: FloatFormat) -> np.ndarray:
    """Correctly rounded ``a + b`` in ``fmt``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_linalg_format(fmt)
    if fmt is DOUBLE:
        return a + b
    if _sum_exact_in_double(fmt):
        with np.errstate(invalid="ignore"):
            return quantize(a + b, fmt)
    return quantize(_round_odd_sum(a, b), fmt)


def mul(a, b, fmt: FloatFormat) -> np.ndarray:
    """Correctly rounded ``a * b`` in ``fmt``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _require_linalg_format(fmt)
    with np.errstate(invalid="ignore", over="ignore"):
        if fmt is DOUBLE:
            return a * b
        return quantize(a * b, fmt)


def fma(x, y, z, acc: FloatFormat) -> codec.ExtendedReal:
    """Exact ``x*y + z`` rounded once (nearest-even) into ``acc``.

    Reference implementation on exact rationals; returns a ``Fraction`` or an
    infinity / NaN float.
    """
    x, y, z = (codec.to_exact(v) for v in (x, y, z))
    if any(isinstance(v, float) for v in (x, y, z)):
        with np.errstate(invalid="ignore"):
            r = float(x) * float(y) + float(z)
        return r if not math.isfinite(r) else codec.round_to(r, acc)
    return codec.round_to(x * y + z, acc)


def _fma_scalar_float(x: float, y: float, z: float, acc: FloatFormat) -> float:
    r = fma(x, y, z, acc)
    return float(r)


_fma_vec = np.vectorize(_fma_scalar_float, otypes=[np.float64], excluded={3})


def fma_array(x, y, z, acc: FloatFormat, input_format: FloatFormat | None = None) -> np.ndarray:
    """Vectorized single-rounding ``x*y + z`` into ``acc`` (broadcasting).

    ``input_format`` is the format of ``x`` and ``y`` (defaults to ``acc``);
    ``z`` must be representable in ``acc``.
    """
    _require_linalg_format(acc)
    input_format = input_format or acc
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if not _product_exact_in_double(input_format):
        return _fma_vec(x, y, z, acc)
    with np.errstate(invalid="ignore", over="ignore"):
        p = x * y
        if acc is DOUBLE:
            return p + z
        return quantize(_round_odd_sum(p, z), acc)


# -- matrices ----------------------------------------------------------------

@dataclass(frozen=True)
class Matrix:
    values: np.ndarray
    fmt: FloatFormat

    def __post_init__(self):
        _require_linalg_format(self.fmt)
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("matrix values must be 2-D")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if not np.array_equal(quantize(v, self.fmt), v, equal_nan=True):
            raise codec.FormatError(f"values are not all representable in {self.fmt}")

    @classmethod
    def from_values(cls, values, fmt: FloatFormat) -> "Matrix":
        """Round arbitrary float64 values into ``fmt``."""
        return cls(quantize(np.atleast_2d(np.asarray(values, dtype=np.float64)), fmt), fmt)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __matmul__(self, other):
        return gemm_uniform(self, other, self.fmt)


@dataclass(frozen=True)
class AccumulationPolicy:
    input_format: FloatFormat
    accumulate_format: FloatFormat
    final_format: FloatFormat

    def __post_init__(self):
        for f in (self.input_format, self.accumulate_format, self.final_format):
            _require_linalg_format(f)
        if (
            self.accumulate_format.precision < self.input_format.precision
            or self.accumulate_format.exponent_bits < self.input_format.exponent_bits
        ):
            raise ValueError("accumulate_format must be at least as wide as input_format")


def _check_dims(A: Matrix, B: Matrix) -> None:
    if A.shape[1] != B.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} @ {B.shape}")


def gemm_mixed(A: Matrix, B: Matrix, policy: AccumulationPolicy) -> Matrix:
    """``C = A @ B`` by chained FMAs in the accumulate format, k ascending.

    Inputs are widened exactly; each ``c_ij`` gets one final rounding into
    ``policy.final_format``.
    """
    _check_dims(A, B)
    for M in (A, B):
        if M.fmt.precision > policy.input_format.precision:
            raise codec.FormatError(f"{M.fmt} input does not fit policy input {policy.input_format}")
    acc = policy.accumulate_format
    a, b = A.values, B.values
    c = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        c = fma_array(a[:, k:k + 1], b[k:k + 1, :], c, acc, policy.input_format)
    return Matrix(quantize(c, policy.final_format), policy.final_format)


def gemm_uniform(A: Matrix, B: Matrix, fmt: FloatFormat) -> Matrix:
    """Same loop as :func:`gemm_mixed` but each product and each partial sum is rounded into ``fmt``."""
    _check_dims(A, B)
    a = quantize(A.values, fmt)
    b = quantize(B.values, fmt)
    c = np.zeros((a.shape[0], b.shape[1]))
    for k in range(a.shape[1]):
        c = add(c, mul(a[:, k:k + 1], b[k:k + 1, :], fmt), fmt)
    return Matrix(c, fmt)


# -- exact oracle ------------------------------------------------------------

@dataclass(frozen=True)
class ExactMatrix:
    """Exact dyadic matrix: ``ints * 2**exponent`` with ``ints`` an integer array."""

    ints: np.ndarray
    exponent: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.ints.shape

    @classmethod
    def from_matrix(cls, M: Matrix) -> "ExactMatrix":
        if not np.all(np.isfinite(M.values)):
            raise ValueError("exact conversion needs finite values")
        shift = M.fmt.fraction_bits - M.fmt.emin
        if M.fmt is HALF:
            return cls(np.ldexp(M.values, shift).astype(np.int64), -shift)

        def to_int(v: float) -> int:
            n, d = v.as_integer_ratio()
            return n << (shift - (d.bit_length() - 1))

        ints = np.frompyfunc(to_int, 1, 1)(M.values).astype(object)
        return cls(ints, -shift)

    def fraction(self, i: int, j: int) -> Fraction:
        return Fraction(int(self.ints[i, j])) * Fraction(2) ** self.exponent

    def to_float(self) -> np.ndarray:
        f = np.frompyfunc(lambda n: float(Fraction(int(n)) * Fraction(2) ** self.exponent), 1, 1)
        return f(self.ints).astype(np.float64)

    def aligned(self, exponent: int) -> np.ndarray:
        """Integer array rescaled to a (smaller or equal) common exponent, as Python ints."""
        shift = self.exponent - exponent
        if shift < 0:
            raise ValueError("can only align to a finer exponent")
        return self.ints.astype(object) * (1 << shift)


def gemm_oracle(A: Matrix, B: Matrix) -> ExactMatrix:
    """Exact ``A @ B`` with no rounding anywhere."""
    _check_dims(A, B)
    ea, eb = ExactMatrix.from_matrix(A), ExactMatrix.from_matrix(B)
    ia, ib = ea.ints, eb.ints
    if ia.dtype == np.int64 and ib.dtype == np.int64:
        bound = int(np.abs(ia).max(initial=0)) * int(np.abs(ib).max(initial=0)) * max(1, ia.shape[1])
        if bound < 2**62:
            return ExactMatrix(ia @ ib, ea.exponent + eb.exponent)
    return ExactMatrix(ia.astype(object).dot(ib.astype(object)), ea.exponent + eb.exponent)


@dataclass(frozen=True)
class ErrorNorms:
    max_abs: float
    frobenius_rel: float


def error_norms(X: Matrix | ExactMatrix, ref: ExactMatrix) -> ErrorNorms:
    """Max absolute error and relative Frobenius error of ``X`` against an exact reference.

    With an all-zero reference the Frobenius figure is the absolute norm.
    """
    if X.shape != ref.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {ref.shape}")
    if isinstance(X, Matrix):
        if not np.all(np.isfinite(X.values)):
            return ErrorNorms(math.inf, math.inf)
        X = ExactMatrix.from_matrix(X)
    e = min(X.exponent, ref.exponent)
    d = X.aligned(e) - ref.aligned(e)
    scale = Fraction(2) ** e
    max_abs = float(max((abs(int(v)) for v in d.flat), default=0) * scale)
    err2 = sum(int(v) * int(v) for v in d.flat)
    ref2 = sum(int(v) * int(v) for v in ref.aligned(e).flat)
    if ref2 == 0:
        return ErrorNorms(max_abs, math.sqrt(float(err2 * scale * scale)))
    return ErrorNorms(max_abs, math.sqrt(float(Fraction(err2, ref2))))


# -- CSV matrix files --------------------------------------------------------

_HEADER = re.compile(r"#\s*format=(\w+)\s+rows=(\d+)\s+cols=(\d+)\s*$")


def read_matrix(source: str | Path | TextIO) -> Matrix:
    """Read ``# format=<half|single|double> rows=<m> cols=<p>`` + CSV body.

    Decimal strings are rounded once, exactly, into the declared format.
    """
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            return read_matrix(fh)
    header = source.readline()
    m = _HEADER.match(header.strip())
    if not m:
        raise codec.FormatError(f"bad matrix header {header.strip()!r}")
    fmt = LINALG_FORMATS.get(m.group(1))
    if fmt is None:
        raise codec.FormatError(f"unsupported matrix format {m.group(1)!r}")
    rows, cols = int(m.group(2)), int(m.group(3))
    data = [r for r in csv.reader(source) if r and not r[0].lstrip().startswith("#")]
    if len(data) != rows or any(len(r) != cols for r in data):
        raise codec.FormatError(f"expected {rows}x{cols} values")
    vals = np.array([[float(codec.round_to(v, fmt)) for v in r] for r in data], dtype=np.float64)
    return Matrix(vals.reshape(rows, cols), fmt)


def write_matrix(M: Matrix, dest: str | Path | TextIO) -> None:
    if isinstance(dest, (str, Path)):
        with open(dest, "w", encoding="utf-8", newline="") as fh:
            write_matrix(M, fh)
        return
    rows, cols = M.shape
    dest.write(f"# format={M.fmt.name} rows={rows} cols={cols}\n")
    w = csv.writer(dest, lineterminator="\n")
    for row in M.values:
        w.writerow([format(v, ".17g") for v in row])


def matrix_to_csv(M: Matrix) -> str:
    buf = io.StringIO()
    write_matrix(M, buf)
    return buf.getvalue()

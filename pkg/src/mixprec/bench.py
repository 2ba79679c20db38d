"""N x N matrix-multiply timing: emulated half versus host single/double.

All three formats run the same rank-1-update loop over k.  Half goes through
the software rounding of :mod:`mixprec.linalg` (every product and sum is
rounded by the codec); single and double use the host's native arithmetic in
numpy ``float32`` / ``float64`` arrays.
"""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .codec import HALF, SINGLE, DOUBLE, FloatFormat
from .fixed import make_rng

_NATIVE = {"single": np.float32, "double": np.float64}


@dataclass
class BenchConfig:
    sizes: list[int] = field(default_factory=lambda: [30, 100, 200, 400])
    formats: list[str] = field(default_factory=lambda: ["half", "single", "double"])
    repetitions: int = 5
    warmup: int = 1
    seed: int = 0

    def __post_init__(self):
        if not self.sizes or min(self.sizes) < 1:
            raise ValueError("sizes must be >= 1")
        if self.repetitions < 3:
            raise ValueError("repetitions must be >= 3")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        bad = set(self.formats) - {"half", "single", "double"}
        if bad:
            raise ValueError(f"unsupported bench formats: {sorted(bad)}")


@dataclass
class BenchRecord:
    format: str
    N: int
    median_s: float
    min_s: float
    max_s: float
    checksum: float


def emulated_matmul(a: np.ndarray, b: np.ndarray, fmt: FloatFormat = HALF) -> np.ndarray:
    return linalg.gemm_uniform(linalg.Matrix(a, fmt), linalg.Matrix(b, fmt), fmt).values


def native_matmul(a: np.ndarray, b: np.ndarray, dtype) -> np.ndarray:
    a = a.astype(dtype)
    b = b.astype(dtype)
    c = np.zeros((a.shape[0], b.shape[1]), dtype=dtype)
    for k in range(a.shape[1]):
        c += a[:, k:k + 1] * b[k:k + 1, :]
    return c


def _operands(fmt_name: str, n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    fmt = {"half": HALF, "single": SINGLE, "double": DOUBLE}[fmt_name]
    rng = make_rng([seed, n])
    return (linalg.quantize(rng.random((n, n)), fmt), linalg.quantize(rng.random((n, n)), fmt))


def time_one(fmt_name: str, n: int, cfg: BenchConfig) -> BenchRecord:
    a, b = _operands(fmt_name, n, cfg.seed)
    if fmt_name == "half":
        run = lambda: emulated_matmul(a, b)
    else:
        dtype = _NATIVE[fmt_name]
        run = lambda: native_matmul(a, b, dtype)
    for _ in range(cfg.warmup):
        run()
    times, c = [], None
    for _ in range(cfg.repetitions):
        t0 = time.perf_counter()
        c = run()
        times.append(time.perf_counter() - t0)
    checksum = float(np.sum(c, dtype=np.float64))
    return BenchRecord(fmt_name, n, statistics.median(times), min(times), max(times), checksum)


def run_bench(cfg: BenchConfig) -> list[BenchRecord]:
    return [time_one(f, n, cfg) for f in cfg.formats for n in sorted(cfg.sizes)]


def records_csv(records: list[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["format", "N", "median_s", "min_s", "max_s", "checksum"])
    for r in records:
        w.writerow([r.format, r.N, format(r.median_s, ".17g"), format(r.min_s, ".17g"),
                    format(r.max_s, ".17g"), format(r.checksum, ".17g")])
    return buf.getvalue()

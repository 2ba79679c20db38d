import numpy as np
import pytest

from mixprec import bench, linalg
from mixprec.codec import DOUBLE, HALF, SINGLE
from mixprec.fixed import make_rng


def operands(fmt, n, seed=0):
    rng = make_rng(seed)
    return linalg.quantize(rng.random((n, n)), fmt), linalg.quantize(rng.random((n, n)), fmt)


def test_native_single_is_bit_identical_to_emulated_single():
    a, b = operands(SINGLE, 17)
    native = bench.native_matmul(a, b, np.float32).astype(np.float64)
    assert np.array_equal(native, bench.emulated_matmul(a, b, SINGLE))


def test_native_double_matches_uniform_double():
    a, b = operands(DOUBLE, 9)
    assert np.array_equal(bench.native_matmul(a, b, np.float64), bench.emulated_matmul(a, b, DOUBLE))


def test_emulated_half_rounds_every_step():
    a, b = operands(HALF, 12)
    c = bench.emulated_matmul(a, b)
    assert np.array_equal(linalg.quantize(c, HALF), c)


def test_config_validation():
    with pytest.raises(ValueError):
        bench.BenchConfig(repetitions=2)
    with pytest.raises(ValueError):
        bench.BenchConfig(sizes=[0])
    with pytest.raises(ValueError):
        bench.BenchConfig(formats=["bfloat16"])


def test_records_and_checksum_are_deterministic():
    cfg = bench.BenchConfig(sizes=[3, 1], formats=["half", "single"], repetitions=3, warmup=0, seed=5)
    r1, r2 = bench.run_bench(cfg), bench.run_bench(cfg)
    assert [(r.format, r.N) for r in r1] == [("half", 1), ("half", 3), ("single", 1), ("single", 3)]
    assert [r.checksum for r in r1] == [r.checksum for r in r2]
    assert all(r.min_s <= r.median_s <= r.max_s for r in r1)
    text = bench.records_csv(r1)
    assert text.splitlines()[0] == "format,N,median_s,min_s,max_s,checksum"
    assert len(text.splitlines()) == 5

"""The twelve acceptance criteria, one test each, at their stated tolerances.

Each test prints a ``[PASS]`` / ``[FAIL]`` line; the lines are also collected
into an "acceptance criteria" section at the end of the pytest run.
"""

import math
import time
from fractions import Fraction

import numpy as np

from mixprec import bench, codec, linalg, pcm
from mixprec import training as T
from mixprec.codec import DOUBLE, HALF, SINGLE, TOY8, BitPattern
from mixprec.fixed import FixedFormat, make_rng, quantize_array


def test_01_codec_worked_examples(verdict):
    t0 = time.perf_counter()
    cases = [
        (Fraction(12), 0x41400000),
        (Fraction(-2), 0xC0000000),
        (1 + Fraction(1, 2**23), 0x3F800001),
        (Fraction(0), 0x00000000),
        (Fraction(1), 0x3F800000),
    ]
    ok = True
    for value, bits in cases:
        p = BitPattern(bits, 32)
        ok &= codec.decode(p, SINGLE) == value
        ok &= codec.encode(value, SINGLE) == p
        ok &= codec.parse_pattern(codec.format_pattern(p, SINGLE), SINGLE) == p
    dt = time.perf_counter() - t0
    verdict(1, "worked single-precision examples round-trip", ok and dt < 1, f"{dt:.3f}s")


def test_02_binade_counts(verdict):
    t0 = time.perf_counter()
    half = codec.binade_counts_enumerated(HALF)
    toy = codec.binade_counts_enumerated(TOY8)
    ok = all(half[n] == 2**10 for n in range(HALF.emin, HALF.emax + 1))
    ok &= all(toy[n] == 8 for n in range(TOY8.emin, TOY8.emax + 1))
    ok &= all(codec.binade_count(SINGLE, n) == 2**23 for n in (SINGLE.emin, 0, SINGLE.emax))
    dt = time.perf_counter() - t0
    verdict(2, "values per binade: half 1024, toy8 8, single 2^23", ok and dt < 5, f"{dt:.2f}s")


def test_03_smallest_half(verdict):
    v = codec.smallest_positive(HALF)
    verdict(3, "smallest positive half is 2^-24", v == Fraction(1, 2**24), f"{float(v):.6g}")


def test_04_point_one(verdict):
    text = codec.to_decimal_places(codec.round_to("0.1", DOUBLE), 20)
    verdict(4, "0.1 in double to 20 places", text == "0.10000000000000000555", text)


def test_05_stochastic_rounding(verdict):
    t0 = time.perf_counter()
    N = 100_000
    rng = make_rng(20240501)
    fmt = FixedFormat(3, 12)
    eps = float(fmt.epsilon)
    xs = rng.uniform(-7.5, 7.5, 50)
    bound = 3 * eps / (2 * math.sqrt(N))
    worst = 0.0
    for x in xs:
        worst = max(worst, abs(quantize_array(np.full(N, x), fmt, "stochastic", rng).mean() - x) / bound)
    draws = quantize_array(np.full(N, 0.3), FixedFormat(3, 2), "stochastic", rng)
    p_low = float(np.mean(draws == 0.25))
    dt = time.perf_counter() - t0
    ok = worst <= 1 and abs(p_low - 0.8) <= 0.004 and dt < 30
    verdict(5, "stochastic rounding unbiased, P(lower)=0.8", ok,
            f"worst |mean-x| = {worst:.2f} x bound, P(lower) = {p_low:.4f}, {dt:.1f}s")


def test_06_fma_dominance(verdict):
    t0 = time.perf_counter()
    n = 100_000
    rng = make_rng(6)

    def draw():
        return linalg.quantize(rng.uniform(-1, 1, n) * np.exp2(rng.integers(-6, 7, n)), HALF)

    x, y, z = draw(), draw(), draw()
    fused = linalg.fma_array(x, y, z, HALF, HALF)
    twice = linalg.add(linalg.mul(x, y, HALF), z, HALF)
    never_worse = strictly_better = mismatched = 0
    for a, b, c, f, d in zip(x.tolist(), y.tolist(), z.tolist(), fused.tolist(), twice.tolist()):
        exact = Fraction(a) * Fraction(b) + Fraction(c)
        mismatched += Fraction(f) != codec.round_to(exact, HALF)
        ef, ed = abs(Fraction(f) - exact), abs(Fraction(d) - exact)
        never_worse += ef <= ed
        strictly_better += ef < ed
    dt = time.perf_counter() - t0
    ok = never_worse == n and strictly_better >= 0.01 * n and mismatched == 0 and dt < 30
    verdict(6, "fma never worse than double rounding", ok,
            f"never worse {never_worse}/{n}, strictly better {strictly_better / n:.2%}, {dt:.1f}s")


def test_07_mixed_gemm(verdict):
    t0 = time.perf_counter()
    policy = linalg.AccumulationPolicy(HALF, SINGLE, SINGLE)
    wins = 0
    for seed in range(100):
        rng = make_rng(seed)
        A = linalg.Matrix(linalg.quantize(rng.random((64, 64)), HALF), HALF)
        B = linalg.Matrix(linalg.quantize(rng.random((64, 64)), HALF), HALF)
        ref = linalg.gemm_oracle(A, B)
        mixed = linalg.error_norms(linalg.gemm_mixed(A, B, policy), ref).frobenius_rel
        uniform = linalg.error_norms(linalg.gemm_uniform(A, B, HALF), ref).frobenius_rel
        wins += mixed <= uniform
    dt = time.perf_counter() - t0
    verdict(7, "float32-accumulate GEMM beats all-half GEMM", wins >= 95 and dt < 60,
            f"{wins}/100 trials, {dt:.1f}s")


def test_08_training_parity(verdict):
    t0 = time.perf_counter()
    data = T.make_separable(1000, 2, seed=1)
    acc = {}
    for name, pol in (("float32", T.PrecisionPolicy.float32()),
                      ("fixed(3,12) stochastic", T.PrecisionPolicy.fixed(3, 12, "stochastic")),
                      ("float16 mixed", T.PrecisionPolicy.float16_mixed(4))):
        model = T.init_model([2, 16, 2], pol, seed=0)
        acc[name] = T.train(model, data, pol, epochs=50, seed=0, learning_rate=0.1).final_accuracy
    dt = time.perf_counter() - t0
    base = acc["float32"]
    ok = all(abs(a - base) <= 0.02 for a in acc.values()) and dt < 300
    verdict(8, "low-precision training within 0.02 of float32", ok,
            ", ".join(f"{k} {v:.3f}" for k, v in acc.items()) + f", {dt:.0f}s")


def test_09_loss_scaling(verdict):
    t0 = time.perf_counter()
    rng = make_rng(0)
    x = rng.standard_normal((32, 4)) * 1e-6
    y = rng.integers(0, 2, 32)
    flushed = {}
    for k in (0, 4):
        pol = T.PrecisionPolicy.float16_mixed(k)
        m = T.init_model([4, 8, 2], pol, seed=0)
        flushed[k] = T.backward(m, T.forward(m, x, y, pol), pol).flushed
    ws, bs = T.glorot_init([4, 8, 2], seed=0)
    updates = {}
    for k in (0, 4):
        gw, _ = T.reference_gradients(ws, bs, x, y, k)
        updates[k] = T.reference_sgd_step(ws, gw, 0.1, k)
    identical = all(np.array_equal(a, b) for a, b in zip(updates[0], updates[4]))
    dt = time.perf_counter() - t0
    ok = flushed[4] < flushed[0] and identical and dt < 60
    verdict(9, "loss scale 2^4 flushes fewer gradients, float64 updates identical", ok,
            f"flushed k=0: {flushed[0]}, k=4: {flushed[4]}")


def test_10_pcm_statistics(verdict):
    t0 = time.perf_counter()
    rng = make_rng(10)
    model = pcm.PcmDeviceModel(0.02, 0.01)
    res = {K: pcm.scalar_experiment(K, model, rng, trials=1024) for K in (1, 4, 16)}
    means_ok = all(abs(r.mean) <= 3 * r.std / math.sqrt(1024) for r in res.values())
    r4, r16 = res[1].std / res[4].std, res[1].std / res[16].std
    dt = time.perf_counter() - t0
    ok = means_ok and abs(r4 / 2 - 1) <= 0.25 and abs(r16 / 4 - 1) <= 0.25 and dt < 30
    verdict(10, "PCM error mean 0, std ~ K^-0.5", ok, f"ratios {r4:.2f}, {r16:.2f}")


def test_11_hybrid_solver(verdict):
    t0 = time.perf_counter()
    rng = make_rng(11)
    A = pcm.random_spd(100, rng)
    x_true = rng.standard_normal(100)
    b = A @ x_true
    noisy = pcm.PcmDeviceModel(0.02, 0.01)
    refined = pcm.mixed_precision_solve(A, b, 4, noisy, make_rng(1), tol=1e-10)
    coarse = pcm.analog_only_solve(A, b, 4, noisy, make_rng(1))
    x_star = np.linalg.solve(A, b)
    coarse_err = np.linalg.norm(coarse - x_star) / np.linalg.norm(x_star)
    ideal = pcm.mixed_precision_solve(A, b, 4, pcm.PcmDeviceModel.ideal(), make_rng(2), tol=1e-10)
    dt = time.perf_counter() - t0
    ok = (refined.converged and refined.residual_history[-1] <= 1e-10 and coarse_err > 1e-2
          and ideal.converged and ideal.iterations <= 5 and dt < 60)
    verdict(11, "hybrid refinement reaches 1e-10", ok,
            f"noisy: {refined.iterations} outer, {refined.residual_history[-1]:.2e}; "
            f"analog only error {coarse_err:.3f}; zero noise: {ideal.iterations} outer")


def test_12_bench_ordinality(verdict):
    t0 = time.perf_counter()
    cfg = bench.BenchConfig(sizes=[1, 30, 100, 200], formats=["half", "single", "double"],
                            repetitions=5, warmup=1, seed=0)
    recs = bench.run_bench(cfg)
    med = {(r.format, r.N): r.median_s for r in recs}
    ratio = med["half", 200] / med["single", 200]
    monotone = all(
        med[f, a] <= med[f, b] for f in cfg.formats for a, b in zip(cfg.sizes, cfg.sizes[1:])
    )
    dt = time.perf_counter() - t0
    verdict(12, "emulated half slower than native single, times grow with N",
            ratio > 1 and monotone and dt < 120, f"half/single at N=200: {ratio:.1f}x, {dt:.1f}s")

import numpy as np
import pytest

from mixprec import pcm
from mixprec.fixed import make_rng
from mixprec.pcm import PcmDeviceModel

NOISY = PcmDeviceModel(0.02, 0.01)
IDEAL = PcmDeviceModel.ideal()


def test_device_model_validation():
    with pytest.raises(ValueError):
        PcmDeviceModel(-0.1, 0.0)
    with pytest.raises(ValueError):
        PcmDeviceModel(g_min=1.0, g_max=0.5, g_full_scale=0.7)


def test_program_without_noise_is_exact():
    t = make_rng(0).random((4, 5))
    arr = pcm.program(t, 3, IDEAL, make_rng(1))
    assert arr.replicas == 3 and arr.shape == (4, 5)
    assert np.array_equal(arr.normalized(), np.repeat(t[:, :, None], 3, axis=2))
    assert pcm.program(t, 1, NOISY, make_rng(1)).conductances.shape == (4, 5, 1)


def test_program_rejects_out_of_range_targets():
    with pytest.raises(ValueError):
        pcm.program([[1.5]], 1, NOISY, make_rng(0))
    with pytest.raises(ValueError):
        pcm.program([[-0.1]], 1, NOISY, make_rng(0))
    with pytest.raises(ValueError):
        pcm.program([[0.5]], 0, NOISY, make_rng(0))


def test_replica_mean_tracks_target():
    rng = make_rng(2)
    K = 8
    t = rng.uniform(0.1, 1.0, (200, 50))
    g = pcm.program(t, K, NOISY, rng).normalized().mean(axis=2)
    z = (g - t) / (t * NOISY.write_noise_sigma / np.sqrt(K))
    assert np.mean(np.abs(z) <= 3) > 0.99
    assert abs(z.mean()) < 3 / np.sqrt(z.size)


def test_conductances_stay_in_range():
    arr = pcm.program(np.ones((30, 30)), 4, PcmDeviceModel(0.5, 0.0), make_rng(3))
    assert arr.conductances.min() >= arr.model.g_min and arr.conductances.max() <= arr.model.g_max


def test_matvec_basics():
    rng = make_rng(4)
    t = rng.random((6, 5))
    arr = pcm.program(t, 2, NOISY, rng)
    assert np.array_equal(pcm.analog_matvec(arr, np.zeros(5), rng), np.zeros(6))
    y = pcm.analog_matvec(arr, np.ones(5), rng)
    assert y.dtype == np.float32
    with pytest.raises(ValueError):
        pcm.analog_matvec(arr, np.ones(4), rng)
    ideal = pcm.program(t, 2, IDEAL, rng)
    x = rng.random(5)
    assert np.allclose(pcm.analog_matvec(ideal, x, rng), t @ x, rtol=2**-23, atol=0)


def test_matvec_error_shrinks_with_replicas():
    rng = make_rng(5)
    t = rng.random((40, 40))
    x = rng.random(40)
    spread = {}
    for K in (1, 4):
        errs = [pcm.analog_matvec(pcm.program(t, K, NOISY, rng), x, rng) - t @ x for _ in range(200)]
        spread[K] = np.std(errs)
    assert spread[1] / spread[4] == pytest.approx(2, rel=0.25)


def test_scalar_experiment_zero_noise():
    res = pcm.scalar_experiment(4, IDEAL, make_rng(6), trials=64)
    assert np.allclose(res.errors, 0, atol=1e-7)
    assert len(res.errors) == 64


def test_scalar_experiment_statistics():
    rng = make_rng(7)
    res = {K: pcm.scalar_experiment(K, NOISY, rng) for K in (1, 4, 16)}
    for r in res.values():
        assert abs(r.mean) <= 3 * r.std / np.sqrt(len(r.errors))
    assert res[1].std / res[4].std == pytest.approx(2, rel=0.25)
    assert res[1].std / res[16].std == pytest.approx(4, rel=0.25)


def test_scalar_csv_layout():
    res = [pcm.scalar_experiment(1, NOISY, make_rng(8), trials=3)]
    lines = pcm.scalar_csv(res).splitlines()
    assert lines[0] == "K,trial,error" and len(lines) == 4
    assert pcm.scalar_summary_csv(res).splitlines()[0] == "K,trials,mean,std"


# -- solver ------------------------------------------------------------------

def spd_system(seed, n=100):
    rng = make_rng(seed)
    A = pcm.random_spd(n, rng)
    return A, A @ rng.standard_normal(n), rng


def test_random_spd_spectrum():
    A = pcm.random_spd(20, make_rng(9), 1.0, 3.0)
    lam = np.linalg.eigvalsh(A)
    assert np.allclose(A, A.T)
    assert lam[0] == pytest.approx(1.0) and lam[-1] == pytest.approx(3.0)


def test_identity_zero_noise_one_iteration():
    b = np.linspace(-1, 1, 9)
    res = pcm.mixed_precision_solve(np.eye(9), b, 2, IDEAL, make_rng(0))
    assert res.iterations == 1 and res.converged
    assert np.array_equal(res.x, b)
    assert res.residual_evaluations == 1


def test_identity_with_noise_still_converges():
    b = make_rng(1).standard_normal(9)
    res = pcm.mixed_precision_solve(np.eye(9), b, 4, NOISY, make_rng(2))
    assert res.converged and res.iterations > 1


def test_zero_noise_spd_converges_fast():
    A, b, rng = spd_system(10)
    res = pcm.mixed_precision_solve(A, b, 4, IDEAL, rng)
    assert res.converged and res.iterations <= 5
    hist = res.residual_history
    assert all(b_ < a for a, b_ in zip(hist, hist[1:]))


def test_noisy_spd_refinement_versus_analog_only():
    A, b, rng = spd_system(11)
    res = pcm.mixed_precision_solve(A, b, 4, NOISY, rng)
    assert res.converged and res.residual_history[-1] <= 1e-10
    x_star = np.linalg.solve(A, b)
    cond = np.linalg.cond(A)
    assert np.max(np.abs(res.x - x_star)) / np.max(np.abs(x_star)) <= 1e-10 * cond
    coarse = pcm.analog_only_solve(A, b, 4, NOISY, make_rng(11))
    assert np.linalg.norm(coarse - x_star) / np.linalg.norm(x_star) > 1e-2


def test_noise_floor_grows_with_read_noise():
    A, b, _ = spd_system(12, n=50)
    x_star = np.linalg.solve(A, b)
    errs = []
    for sigma in (0.0, 0.005, 0.01, 0.02, 0.04):
        model = PcmDeviceModel(0.0, sigma)
        x = pcm.analog_only_solve(A, b, 4, model, make_rng(3), iterations=60)
        errs.append(np.linalg.norm(x - x_star) / np.linalg.norm(x_star))
    assert all(a < b_ for a, b_ in zip(errs, errs[1:]))


def test_operation_counts():
    A, b, _ = spd_system(13, n=30)
    r1 = pcm.mixed_precision_solve(A, b, 2, NOISY, make_rng(4), inner_iterations=5)
    r2 = pcm.mixed_precision_solve(A, b, 2, NOISY, make_rng(4), inner_iterations=5)
    assert pcm.solve_count_operations(r1) == pcm.solve_count_operations(r2)
    assert r1.analog_matvecs == 5 * r1.iterations
    n = 30
    assert r1.digital_flops == r1.iterations * (n + 2 * n * n + 2 * n)


def test_stagnation_is_flagged():
    A, b, _ = spd_system(14, n=30)
    # an overlong step makes the inner iteration diverge, so the outer residual grows
    res = pcm.mixed_precision_solve(A, b, 1, NOISY, make_rng(5), step=1.5)
    assert res.stagnated and not res.converged
    assert res.best_residual == min(res.residual_history)


def test_ill_conditioned_rejected():
    A = np.diag([1.0, 1e-8])
    with pytest.raises(pcm.ConditioningError):
        pcm.mixed_precision_solve(A, np.ones(2), 1, NOISY, make_rng(0))
    with pytest.raises(pcm.ConditioningError):
        pcm.richardson_step(np.diag([1.0, -1.0]))


def test_residual_csv():
    A, b, rng = spd_system(15, n=20)
    res = pcm.mixed_precision_solve(A, b, 4, NOISY, rng)
    lines = pcm.residual_csv(res).splitlines()
    assert lines[0] == "iteration,relative_residual"
    assert len(lines) == len(res.residual_history) + 1

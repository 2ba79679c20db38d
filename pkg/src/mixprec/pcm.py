"""Simulated phase-change-memory crossbar and a hybrid refinement solver.

Each logical matrix element is stored on ``K`` devices.  Programming leaves a
frozen multiplicative Gaussian error per device; every read adds a fresh
multiplicative Gaussian error.  Signed matrices use a differential pair of
arrays (``G+ - G-``).  The solver keeps residuals and updates in float64 and
delegates the correction solves to noisy analog products only.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .fixed import RandomSource


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class PcmDeviceModel:
    write_noise_sigma: float = 0.02
    read_noise_sigma: float = 0.01
    g_min: float = 0.0
    g_max: float = 1.25
    # conductance that a target of 1.0 is programmed to; the gap up to g_max
    # keeps clamping from biasing the largest targets
    g_full_scale: float = 1.0

    def __post_init__(self):
        if self.write_noise_sigma < 0 or self.read_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        if not self.g_min < self.g_full_scale <= self.g_max:
            raise ValueError("need g_min < g_full_scale <= g_max")

    @classmethod
    def ideal(cls) -> "PcmDeviceModel":
        return cls(0.0, 0.0)


@dataclass
class PcmArray:
    conductances: np.ndarray  # rows x cols x K
    model: PcmDeviceModel

    @property
    def shape(self) -> tuple[int, int]:
        return self.conductances.shape[:2]

    @property
    def replicas(self) -> int:
        return self.conductances.shape[2]

    def normalized(self) -> np.ndarray:
        m = self.model
        return (self.conductances - m.g_min) / (m.g_full_scale - m.g_min)


def program(target, K: int, model: PcmDeviceModel, rng: RandomSource) -> PcmArray:
    """Program each of ``K`` replicas to ``target * (1 + xi)``, xi ~ N(0, write sigma), clamped."""
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if K < 1:
        raise ValueError("K must be >= 1")
    if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
        raise ValueError("programming targets must lie in [0, 1]")
    g = model.g_min + t * (model.g_full_scale - model.g_min)
    g = np.repeat(g[:, :, None], K, axis=2)
    if model.write_noise_sigma:
        g = g * (1.0 + model.write_noise_sigma * rng.standard_normal(g.shape))
    return PcmArray(np.clip(g, model.g_min, model.g_max), model)


def analog_matvec(arr: PcmArray, x, rng: RandomSource) -> np.ndarray:
    """Replica-averaged ``sum_j g_ij (1 + eta) x_j`` with fresh read noise; float32 result."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (arr.shape[1],):
        raise ValueError(f"vector length {x.shape} does not match {arr.shape[1]} columns")
    w = arr.normalized()
    if arr.model.read_noise_sigma:
        w = w * (1.0 + arr.model.read_noise_sigma * rng.standard_normal(w.shape))
    y = np.einsum("ijk,j->i", w, x) / arr.replicas
    return y.astype(np.float32)


# -- scalar multiplication experiment ----------------------------------------

@dataclass
class ScalarExperimentResult:
    K: int
    errors: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.errors.mean())

    @property
    def std(self) -> float:
        return float(self.errors.std(ddof=1))


def scalar_experiment(K: int, model: PcmDeviceModel, rng: RandomSource, trials: int = 1024) -> ScalarExperimentResult:
    """Estimate ``beta * gamma`` on a freshly programmed 1x1 array per trial; record the error."""
    beta = rng.uniform(0, 1, trials)
    gamma = rng.uniform(0, 1, trials)
    errors = np.empty(trials)
    for n in range(trials):
        arr = program([[beta[n]]], K, model, rng)
        theta_hat = float(analog_matvec(arr, [gamma[n]], rng)[0])
        errors[n] = theta_hat - beta[n] * gamma[n]
    return ScalarExperimentResult(K, errors, beta, gamma)


# -- hybrid solver -----------------------------------------------------------

class AnalogOperator:
    """A signed matrix on a differential pair of crossbars, scaled into [0, 1]."""

    def __init__(self, A, K: int, model: PcmDeviceModel, rng: RandomSource):
        A = np.asarray(A, dtype=np.float64)
        self.shape = A.shape
        self.scale = float(np.abs(A).max()) or 1.0
        self.rng = rng
        self.pos = program(np.maximum(A, 0) / self.scale, K, model, rng)
        self.neg = program(np.maximum(-A, 0) / self.scale, K, model, rng)
        self.calls = 0

    def matvec(self, x) -> np.ndarray:
        self.calls += 1
        x = np.asarray(x, dtype=np.float64)
        xs = float(np.abs(x).max())
        if xs == 0:
            return np.zeros(self.shape[0])
        u = x / xs
        y = analog_matvec(self.pos, u, self.rng).astype(np.float64)
        y -= analog_matvec(self.neg, u, self.rng).astype(np.float64)
        return y * (self.scale * xs)


def richardson_step(A) -> float:
    """Step size giving a contraction for matrices with positive-definite symmetric part."""
    A = np.asarray(A, dtype=np.float64)
    if np.array_equal(A, A.T):
        lam = np.linalg.eigvalsh(A)
        if lam[0] <= 0:
            raise ConditioningError("Richardson inner solver needs a positive-definite matrix")
        return 2.0 / (lam[0] + lam[-1])
    hmin = np.linalg.eigvalsh((A + A.T) / 2)[0]
    if hmin <= 0:
        raise ConditioningError("Richardson inner solver needs a positive-definite symmetric part")
    return hmin / np.linalg.norm(A, 2) ** 2


def inner_solve(op: AnalogOperator, r: np.ndarray, step: float, iterations: int) -> np.ndarray:
    """Approximate ``A z = r`` with Richardson sweeps whose products are all analog."""
    z = np.zeros_like(r)
    for _ in range(iterations):
        z = z + step * (r - op.matvec(z))
    return z


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    residual_history: list[float]
    converged: bool
    stagnated: bool
    analog_matvecs: int
    digital_flops: int
    residual_evaluations: int = 0
    best_residual: float = field(default=math.inf)


def mixed_precision_solve(
    A,
    b,
    K: int,
    model: PcmDeviceModel,
    rng: RandomSource,
    tol: float = 1e-10,
    max_outer: int = 50,
    inner_iterations: int = 10,
    step: float | None = None,
    max_condition: float = 1e6,
) -> SolveResult:
    """Iterative refinement: float64 residuals outside, analog Richardson correction inside.

    Stops when ``||r|| / ||b|| <= tol`` or after ``max_outer`` corrections.  A
    residual that fails to decrease marks the run as stagnated and the best
    iterate is returned.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n = A.shape[0]
    if A.ndim != 2 or A.shape != (n, n) or b.shape != (n,):
        raise ValueError("need a square matrix and a matching right-hand side")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond >= max_condition:
        raise ConditioningError(f"condition number {cond:.3g} exceeds {max_condition:g}")
    if step is None:
        step = richardson_step(A)
    op = AnalogOperator(A, K, model, rng)
    bnorm = float(np.linalg.norm(b)) or 1.0
    x = np.zeros(n)
    r = b.copy()
    history = [float(np.linalg.norm(r)) / bnorm]
    best_x, best = x.copy(), history[0]
    flops = 0
    evals = 0
    converged = history[0] <= tol
    stagnated = False
    it = 0
    while not converged and it < max_outer:
        it += 1
        x = x + inner_solve(op, r, step, inner_iterations)
        r = b - A @ x
        evals += 1
        flops += n + 2 * n * n + 2 * n  # update, residual, norm
        rel = float(np.linalg.norm(r)) / bnorm
        history.append(rel)
        if rel < best:
            best_x, best = x.copy(), rel
        if rel <= tol:
            converged = True
        elif rel >= history[-2]:
            stagnated = True
            break
    return SolveResult(best_x, it, history, converged, stagnated, op.calls, flops, evals, best)


def solve_count_operations(result: SolveResult) -> dict[str, int]:
    return {"analog_matvecs": result.analog_matvecs, "digital_flops": result.digital_flops}


def analog_only_solve(A, b, K: int, model: PcmDeviceModel, rng: RandomSource,
                      iterations: int = 10, step: float | None = None) -> np.ndarray:
    """The coarse solution alone: one analog Richardson solve, no digital refinement."""
    A = np.asarray(A, dtype=np.float64)
    op = AnalogOperator(A, K, model, rng)
    return inner_solve(op, np.asarray(b, dtype=np.float64), step or richardson_step(A), iterations)


def random_spd(n: int, rng: RandomSource, eig_min: float = 1.0, eig_max: float = 3.0) -> np.ndarray:
    """Symmetric positive-definite test matrix with eigenvalues spread in [eig_min, eig_max]."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    lam = np.linspace(eig_min, eig_max, n)
    A = (q * lam) @ q.T
    return (A + A.T) / 2


def scalar_csv(results: list[ScalarExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "trial", "error"])
    for res in results:
        for i, e in enumerate(res.errors):
            w.writerow([res.K, i, format(float(e), ".17g")])
    return buf.getvalue()


def scalar_summary_csv(results: list[ScalarExperimentResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["K", "trials", "mean", "std"])
    for res in results:
        w.writerow([res.K, len(res.errors), format(res.mean, ".17g"), format(res.std, ".17g")])
    return buf.getvalue()


def residual_csv(result: SolveResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "relative_residual"])
    for i, r in enumerate(result.residual_history):
        w.writerow([i, format(r, ".17g")])
    return buf.getvalue()

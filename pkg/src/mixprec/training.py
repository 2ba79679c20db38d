"""Small MLP trainer whose arithmetic follows a :class:`PrecisionPolicy`.

Float storage policies run every matrix product through
:func:`mixprec.linalg.gemm_mixed`; fixed-point storage accumulates products
exactly and rounds the result onto the Q(m, n) grid.  Softmax and the loss are
always computed in float32.  A plain float64 implementation
(:func:`reference_forward`, :func:`reference_gradients`) serves as the oracle.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from . import linalg
from .codec import HALF, SINGLE, FloatFormat
from .fixed import FixedFormat, RandomSource, make_rng, quantize_array

Storage = Union[FloatFormat, FixedFormat]


class DivergenceError(RuntimeError):
    pass


class ScaleOverflowError(DivergenceError):
    """Scaled gradients overflowed the storage format: the loss scale is too large."""


def parse_storage(text: str) -> Storage:
    t = text.strip().lower()
    if t in ("float16", "half"):
        return HALF
    if t in ("float32", "single"):
        return SINGLE
    m = re.fullmatch(r"fixed\(\s*(\d+)\s*,\s*(\d+)\s*\)", t)
    if m:
        return FixedFormat(int(m.group(1)), int(m.group(2)))
    raise ValueError(f"unknown storage {text!r}; expected float16, float32 or fixed(m,n)")


def storage_name(s: Storage) -> str:
    if isinstance(s, FixedFormat):
        return str(s)
    return {"half": "float16", "single": "float32"}[s.name]


@dataclass(frozen=True)
class PrecisionPolicy:
    storage: Storage = SINGLE
    rounding: str = "nearest"
    loss_scale_exponent: int = 0
    master_copy: bool = False
    accumulate_widened: bool = True
    clip_threshold: float | None = None

    def __post_init__(self):
        if isinstance(self.storage, str):
            object.__setattr__(self, "storage", parse_storage(self.storage))
        if isinstance(self.storage, FloatFormat) and self.storage not in (HALF, SINGLE):
            raise ValueError("float storage must be float16 or float32")
        if self.rounding not in ("nearest", "stochastic"):
            raise ValueError(f"unknown rounding {self.rounding!r}")
        if self.rounding == "stochastic" and not self.is_fixed:
            raise ValueError("stochastic rounding is only used with fixed-point storage")
        if self.loss_scale_exponent < 0:
            raise ValueError("loss_scale_exponent must be >= 0")
        if self.clip_threshold is not None and not self.clip_threshold > 0:
            raise ValueError("clip_threshold must be positive")

    @property
    def is_fixed(self) -> bool:
        return isinstance(self.storage, FixedFormat)

    @property
    def loss_scale(self) -> float:
        return math.ldexp(1.0, self.loss_scale_exponent)

    @property
    def gemm_policy(self) -> linalg.AccumulationPolicy | None:
        if self.is_fixed:
            return None
        acc = SINGLE if self.accumulate_widened else self.storage
        return linalg.AccumulationPolicy(self.storage, acc, acc)

    @classmethod
    def float32(cls) -> "PrecisionPolicy":
        return cls(SINGLE)

    @classmethod
    def float16_mixed(cls, loss_scale_exponent: int = 4) -> "PrecisionPolicy":
        """float16 storage with a float32 master copy, static loss scale and float32 accumulation."""
        return cls(HALF, "nearest", loss_scale_exponent, master_copy=True, accumulate_widened=True)

    @classmethod
    def fixed(cls, m: int = 3, n: int = 12, rounding: str = "stochastic") -> "PrecisionPolicy":
        return cls(FixedFormat(m, n), rounding)


class Arithmetic:
    """Rounding primitives of one policy, plus counters for flushed values."""

    def __init__(self, policy: PrecisionPolicy, rng: RandomSource | None = None):
        self.policy = policy
        self.rng = rng if rng is not None else make_rng(0)
        self.flushed = 0

    def store(self, x) -> np.ndarray:
        p = self.policy
        if p.is_fixed:
            return quantize_array(x, p.storage, p.rounding, self.rng)
        return linalg.quantize(x, p.storage)

    def store_counting(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        r = self.store(x)
        self.flushed += int(np.count_nonzero((x != 0) & (r == 0)))
        return r

    def matmul(self, a: np.ndarray, b: np.ndarray, count: bool = False) -> np.ndarray:
        p = self.policy
        if p.is_fixed:
            acc = a @ b  # exact: grid products are short and sums stay below 2**53
        else:
            gp = p.gemm_policy
            acc = linalg.gemm_mixed(
                linalg.Matrix(a, p.storage), linalg.Matrix(b, p.storage), gp
            ).values
        return self.store_counting(acc) if count else self.store(acc)

    def add(self, a, b) -> np.ndarray:
        if self.policy.is_fixed:
            return self.store(np.asarray(a) + np.asarray(b))
        return linalg.add(a, b, self.policy.storage)

    def mul(self, a, b) -> np.ndarray:
        if self.policy.is_fixed:
            return self.store(np.asarray(a) * np.asarray(b))
        return linalg.mul(a, b, self.policy.storage)


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"
    master_weights: list[np.ndarray] | None = None
    master_biases: list[np.ndarray] | None = None

    @property
    def n_classes(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        cp = lambda xs: None if xs is None else [x.copy() for x in xs]
        return MlpModel(
            self.layer_sizes, cp(self.weights), cp(self.biases), self.activation,
            cp(self.master_weights), cp(self.master_biases),
        )


def glorot_init(layer_sizes, seed: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    rng = make_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return ws, bs


def init_model(layer_sizes, policy: PrecisionPolicy, seed: int = 0, activation: str = "relu") -> MlpModel:
    """Glorot-uniform float64 draws rounded (nearest) into the storage format."""
    if activation not in ("relu", "tanh"):
        raise ValueError(f"unknown activation {activation!r}")
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or min(sizes) < 1:
        raise ValueError("need at least input and output layer sizes")
    ws, bs = glorot_init(sizes, seed)
    return model_from_float64(sizes, ws, bs, policy, activation)


def model_from_float64(sizes, ws, bs, policy: PrecisionPolicy, activation: str = "relu") -> MlpModel:
    init_policy = PrecisionPolicy(policy.storage) if policy.is_fixed else policy
    ar = Arithmetic(init_policy)
    model = MlpModel(tuple(sizes), [ar.store(w) for w in ws], [ar.store(b) for b in bs], activation)
    if policy.master_copy:
        model.master_weights = [linalg.quantize(w, SINGLE) for w in ws]
        model.master_biases = [linalg.quantize(b, SINGLE) for b in bs]
    return model


# -- forward / backward ------------------------------------------------------

def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def softmax_xent_f32(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Softmax probabilities and mean cross-entropy, both in float32."""
    z = np.asarray(logits, dtype=np.float32)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    logp = z - np.log(e.sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(labels)), labels].mean(dtype=np.float32)
    return probs, float(loss)


@dataclass
class Activations:
    inputs: list[np.ndarray]  # input to each layer (storage values)
    preacts: list[np.ndarray]
    probs: np.ndarray
    labels: np.ndarray
    loss: float


def forward(model: MlpModel, x: np.ndarray, labels: np.ndarray, policy: PrecisionPolicy,
            arith: Arithmetic | None = None) -> Activations:
    """Forward pass in the policy's arithmetic; loss is mean cross-entropy in float32."""
    arith = arith or Arithmetic(policy)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[1] != model.layer_sizes[0]:
        raise ValueError(f"batch has {x.shape[1]} features, model expects {model.layer_sizes[0]}")
    a = arith.store(x)
    inputs, preacts = [], []
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        inputs.append(a)
        z = arith.add(arith.matmul(a, w), b[None, :])
        preacts.append(z)
        if l < last:
            a = arith.store(_act(z, model.activation))
    labels = np.asarray(labels)
    probs, loss = softmax_xent_f32(preacts[-1], labels)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss}")
    return Activations(inputs, preacts, probs, labels, loss)


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    scale_exponent: int
    flushed: int = 0


def backward(model: MlpModel, acts: Activations, policy: PrecisionPolicy,
             arith: Arithmetic | None = None) -> Gradients:
    """Backpropagate the loss multiplied by ``2**k``; gradients carry that factor.

    ``flushed`` counts gradient entries that were nonzero before rounding into
    storage and zero after.
    """
    arith = arith or Arithmetic(policy)
    k = policy.loss_scale_exponent
    n = len(acts.labels)
    onehot = np.zeros_like(acts.probs)
    onehot[np.arange(n), acts.labels] = 1
    d32 = (acts.probs - onehot) / np.float32(n) * np.float32(math.ldexp(1.0, k))
    if not np.all(np.isfinite(d32)):
        raise ScaleOverflowError(f"loss scale 2**{k} overflows float32")
    start = arith.flushed
    dz = arith.store_counting(d32.astype(np.float64))
    gw: list[np.ndarray] = [None] * len(model.weights)
    gb: list[np.ndarray] = [None] * len(model.weights)
    ones = np.ones((1, n))
    for l in range(len(model.weights) - 1, -1, -1):
        gw[l] = arith.matmul(acts.inputs[l].T, dz, count=True)
        gb[l] = arith.matmul(ones, dz, count=True)[0]
        if l > 0:
            da = arith.matmul(dz, model.weights[l].T)
            if model.activation == "relu":
                dz = np.where(acts.preacts[l - 1] > 0, da, 0.0)
            else:
                deriv = arith.store(1.0 - np.tanh(acts.preacts[l - 1]) ** 2)
                dz = arith.mul(da, deriv)
    for g in gw + gb:
        if not np.all(np.isfinite(g)):
            raise ScaleOverflowError(f"gradients overflow storage at loss scale 2**{k}")
    return Gradients(gw, gb, k, arith.flushed - start)


def optimizer_step(model: MlpModel, grads: Gradients, learning_rate: float, policy: PrecisionPolicy,
                   arith: Arithmetic | None = None) -> int:
    """Unscale, clip, then apply one SGD step in place; returns the number of clipped entries."""
    arith = arith or Arithmetic(policy)
    inv = math.ldexp(1.0, -grads.scale_exponent)
    t = policy.clip_threshold
    clipped = 0
    lr32 = float(linalg.quantize(learning_rate, SINGLE))
    params = [(model.weights, model.master_weights, grads.weights),
              (model.biases, model.master_biases, grads.biases)]
    for stored, master, gs in params:
        for i, g in enumerate(gs):
            g = g * inv
            if t is not None:
                clipped += int(np.count_nonzero(np.abs(g) > t))
                g = np.clip(g, -t, t)
            if policy.master_copy:
                g32 = linalg.quantize(g, SINGLE)
                master[i] = linalg.add(master[i], -linalg.mul(lr32, g32, SINGLE), SINGLE)
                stored[i] = arith.store(master[i])
            elif policy.is_fixed:
                stored[i] = arith.store(stored[i] - learning_rate * g)
            else:
                fmt = policy.storage
                step = linalg.mul(linalg.quantize(learning_rate, fmt), linalg.quantize(g, fmt), fmt)
                stored[i] = linalg.add(stored[i], -step, fmt)
    return clipped


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Argmax class of a float32 forward pass over the stored weights."""
    a = np.asarray(x, dtype=np.float32)
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.astype(np.float32) + b.astype(np.float32)
        a = _act(z, model.activation).astype(np.float32) if l < last else z
    return np.argmax(a, axis=1)


def evaluate(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of correct argmax predictions (float32 forward)."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        return 0.0
    return float(np.mean(predict(model, x) == labels))


def eval_loss(model: MlpModel, x: np.ndarray, labels: np.ndarray) -> float:
    a = np.asarray(x, dtype=np.float32)
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.astype(np.float32) + b.astype(np.float32)
        a = _act(z, model.activation).astype(np.float32) if l < last else z
    return softmax_xent_f32(a, np.asarray(labels))[1]


# -- float64 reference -------------------------------------------------------

def reference_forward(ws, bs, x, labels, activation: str = "relu"):
    """Plain float64 forward; returns (inputs, preacts, probs, loss)."""
    a = np.asarray(x, dtype=np.float64)
    inputs, preacts = [], []
    for l, (w, b) in enumerate(zip(ws, bs)):
        inputs.append(a)
        z = a @ w + b
        preacts.append(z)
        if l < len(ws) - 1:
            a = _act(z, activation)
    z = preacts[-1] - preacts[-1].max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    labels = np.asarray(labels)
    loss = float(-(z - np.log(e.sum(axis=1, keepdims=True)))[np.arange(len(labels)), labels].mean())
    return inputs, preacts, probs, loss


def reference_gradients(ws, bs, x, labels, scale_exponent: int = 0, activation: str = "relu"):
    """float64 gradients of ``2**k * loss`` with respect to weights and biases."""
    inputs, preacts, probs, _ = reference_forward(ws, bs, x, labels, activation)
    labels = np.asarray(labels)
    n = len(labels)
    dz = probs.copy()
    dz[np.arange(n), labels] -= 1
    dz = dz / n * math.ldexp(1.0, scale_exponent)
    gw, gb = [None] * len(ws), [None] * len(ws)
    for l in range(len(ws) - 1, -1, -1):
        gw[l] = inputs[l].T @ dz
        gb[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ ws[l].T
            if activation == "relu":
                dz = da * (preacts[l - 1] > 0)
            else:
                dz = da * (1 - np.tanh(preacts[l - 1]) ** 2)
    return gw, gb


def reference_sgd_step(ws, gw, learning_rate: float, scale_exponent: int = 0):
    inv = math.ldexp(1.0, -scale_exponent)
    return [w - learning_rate * (g * inv) for w, g in zip(ws, gw)]


# -- datasets ----------------------------------------------------------------

@dataclass
class Dataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    n_classes: int

    def __post_init__(self):
        for x in (self.x_train, self.x_test):
            if not np.all(np.isfinite(x)):
                raise ValueError("features must be finite")
        for y in (self.y_train, self.y_test):
            if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
                raise ValueError("labels out of range")


def _split(x, y, n_classes, test_fraction, rng) -> Dataset:
    perm = rng.permutation(len(y))
    n_test = int(round(len(y) * test_fraction))
    te, tr = perm[:n_test], perm[n_test:]
    return Dataset(x[tr], y[tr], x[te], y[te], n_classes)


def make_separable(n_samples: int = 1000, n_features: int = 2, margin: float = 0.05,
                   test_fraction: float = 0.25, seed: int = 0) -> Dataset:
    """Two classes split by a random hyperplane through the origin, with an empty margin band."""
    rng = make_rng(seed)
    w = rng.standard_normal(n_features)
    w /= np.linalg.norm(w)
    xs = []
    while sum(len(c) for c in xs) < n_samples:
        c = rng.uniform(-1, 1, size=(2 * n_samples, n_features))
        xs.append(c[np.abs(c @ w) >= margin])
    x = np.concatenate(xs)[:n_samples]
    y = (x @ w > 0).astype(np.int64)
    return _split(x, y, 2, test_fraction, rng)


def make_blobs(n_samples: int = 1000, n_features: int = 2, n_classes: int = 3, spread: float = 0.5,
               test_fraction: float = 0.25, seed: int = 0) -> Dataset:
    rng = make_rng(seed)
    centers = rng.uniform(-2, 2, size=(n_classes, n_features))
    y = rng.integers(0, n_classes, n_samples)
    x = centers[y] + spread * rng.standard_normal((n_samples, n_features))
    return _split(x, y, n_classes, test_fraction, rng)


def make_moons(n_samples: int = 1000, noise: float = 0.1, test_fraction: float = 0.25,
               seed: int = 0) -> Dataset:
    rng = make_rng(seed)
    y = rng.integers(0, 2, n_samples)
    t = rng.uniform(0, math.pi, n_samples)
    x = np.where(
        y[:, None] == 0,
        np.stack([np.cos(t), np.sin(t)], axis=1),
        np.stack([1 - np.cos(t), 0.5 - np.sin(t)], axis=1),
    )
    x = x + noise * rng.standard_normal(x.shape)
    return _split(x, y, 2, test_fraction, rng)


def load_csv_dataset(path: str | Path, test_fraction: float = 0.25, seed: int = 0) -> Dataset:
    """Numeric CSV, last column an integer label; lines starting with ``#`` are skipped."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    x, y = data[:, :-1], data[:, -1].astype(np.int64)
    return _split(x, y, int(y.max()) + 1, test_fraction, make_rng(seed))


# -- training loop -----------------------------------------------------------

@dataclass
class TrainingReport:
    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    test_accuracy: list[float] = field(default_factory=list)
    zero_flushed: list[int] = field(default_factory=list)
    clipped: list[int] = field(default_factory=list)
    diverged: bool = False
    divergence_reason: str | None = None

    @property
    def final_accuracy(self) -> float:
        return self.test_accuracy[-1]

    def add_row(self, epoch, loss, acc, flushed, clipped):
        self.epochs.append(epoch)
        self.loss.append(float(loss))
        self.test_accuracy.append(float(acc))
        self.zero_flushed.append(int(flushed))
        self.clipped.append(int(clipped))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "loss", "test_accuracy", "zero_flushed_count", "clipped_count"])
        for row in zip(self.epochs, self.loss, self.test_accuracy, self.zero_flushed, self.clipped):
            e, l, a, z, c = row
            w.writerow([e, format(l, ".17g"), format(a, ".17g"), z, c])
        return buf.getvalue()


def train(model: MlpModel, data: Dataset, policy: PrecisionPolicy, epochs: int, seed: int = 0,
          batch_size: int = 32, learning_rate: float = 0.1) -> TrainingReport:
    """Minibatch SGD; deterministic given ``seed``.  Mutates ``model``.

    Row 0 of the report is the initial evaluation.  On divergence the partial
    report is returned with ``diverged`` set.
    """
    shuffle_seq, round_seq = np.random.SeedSequence(seed).spawn(2)
    shuffle_rng = np.random.Generator(np.random.PCG64(shuffle_seq))
    arith = Arithmetic(policy, np.random.Generator(np.random.PCG64(round_seq)))
    report = TrainingReport()
    report.add_row(0, eval_loss(model, data.x_train, data.y_train),
                   evaluate(model, data.x_test, data.y_test), 0, 0)
    n = len(data.y_train)
    for epoch in range(1, epochs + 1):
        perm = shuffle_rng.permutation(n)
        losses, flushed, clipped = [], 0, 0
        try:
            for start in range(0, n, batch_size):
                idx = perm[start:start + batch_size]
                acts = forward(model, data.x_train[idx], data.y_train[idx], policy, arith)
                grads = backward(model, acts, policy, arith)
                clipped += optimizer_step(model, grads, learning_rate, policy, arith)
                flushed += grads.flushed
                losses.append(acts.loss)
        except DivergenceError as exc:
            report.diverged = True
            report.divergence_reason = str(exc)
            return report
        report.add_row(epoch, float(np.mean(losses)), evaluate(model, data.x_test, data.y_test),
                       flushed, clipped)
    return report

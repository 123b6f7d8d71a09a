"""Desk-scale training of fully-connected HORQ networks.

Each quantized layer recomputes its binary operands from the real-valued
master weights on every forward pass; gradients reach the masters through
a straight-through estimator. The input-quantization path clips the
estimator at ``|a| <= 1``; weights pass straight through unless
``weight_ste_clip`` is set. Scale factors are treated as constants.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from os import PathLike
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DomainError, ShapeError
from .bitplane import binary_gemm
from .quantize import quantize_input, quantize_weights
from .tensor import ConvGeometry

ACTIVATIONS = ("none", "hardtanh", "relu")
LOSSES = ("hinge", "softmax")
STE_CLIP = 1.0


@dataclass(frozen=True)
class LayerSpec:
    fan_in: int
    fan_out: int
    kind: str = "fc"
    quantized: bool = False
    order: int = 2
    activation: str = "none"
    geometry: ConvGeometry | None = None

    def __post_init__(self):
        if self.kind not in ("fc", "conv"):
            raise ConfigError(f"layer kind must be 'fc' or 'conv', got {self.kind!r}")
        if self.kind == "conv" and self.geometry is None:
            raise ConfigError("conv layers need a geometry")
        if self.fan_in < 1 or self.fan_out < 1:
            raise ConfigError(f"layer sizes must be positive, got {self.fan_in}->{self.fan_out}")
        if self.quantized and self.order < 1:
            raise ConfigError(f"quantized layers need order >= 1, got {self.order}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")


def mlp_specs(sizes: Sequence[int], quantize: Sequence[int] = (), order: int = 2,
              activation: str = "hardtanh") -> list[LayerSpec]:
    """Layer specs for an MLP ``sizes[0] -> ... -> sizes[-1]``.

    ``quantize`` lists 0-based layer indices; the last layer has no activation.
    """
    if len(sizes) < 2:
        raise ConfigError("an MLP needs at least input and output sizes")
    n_layers = len(sizes) - 1
    bad = [i for i in quantize if not 0 <= i < n_layers]
    if bad:
        raise ConfigError(f"quantize indices {bad} out of range for {n_layers} layers")
    return [
        LayerSpec(sizes[i], sizes[i + 1], quantized=i in set(quantize), order=order,
                  activation=activation if i < n_layers - 1 else "none")
        for i in range(n_layers)
    ]


@dataclass(frozen=True)
class TrainState:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    lr: float
    epoch: int = 0
    step: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.lr >= 0 or not math.isfinite(self.lr):
            raise ConfigError(f"learning rate must be finite and >= 0, got {self.lr}")
        for w in self.weights:
            if not np.all(np.isfinite(w)):
                raise DomainError("master weights became non-finite")


def init_state(specs: Sequence[LayerSpec], lr: float, seed: int = 0) -> TrainState:
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for spec in specs:
        _check_trainable(spec)
        weights.append(rng.normal(0.0, 1.0 / math.sqrt(spec.fan_in), (spec.fan_out, spec.fan_in)))
        biases.append(np.zeros(spec.fan_out))
    return TrainState(tuple(weights), tuple(biases), lr=lr, seed=seed)


def _check_trainable(spec: LayerSpec):
    if spec.kind != "fc":
        raise ConfigError("only fully-connected layers can be trained")


@dataclass
class LayerCache:
    inputs: np.ndarray            # (B, fan_in) real activations entering the layer
    pre: np.ndarray               # (B, fan_out) before activation
    w_eff: np.ndarray             # weights used in the product (master or reconstructed)
    x_eff: np.ndarray             # inputs used in the product (real or reconstructed)
    rel_residual: float | None = None


@dataclass
class ForwardCache:
    layers: list[LayerCache] = field(default_factory=list)


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "hardtanh":
        return np.clip(z, -1.0, 1.0)
    if kind == "relu":
        return np.maximum(z, 0.0)
    return z


def _activation_grad(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "hardtanh":
        return (np.abs(z) <= 1.0).astype(np.float64)
    if kind == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward(state: TrainState, specs: Sequence[LayerSpec], batch: np.ndarray):
    """Run the network on ``batch`` (B, fan_in); returns ``(cache, predictions)``."""
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != specs[0].fan_in:
        raise ShapeError(f"batch shape {a.shape} does not fit input size {specs[0].fan_in}")
    cache = ForwardCache()
    for spec, W, b in zip(specs, state.weights, state.biases):
        _check_trainable(spec)
        if spec.quantized:
            Wq = quantize_weights(W)
            Xq = quantize_input(a.T, spec.order)
            z = binary_gemm(Wq, Xq).T.astype(np.float64) + b
            entry = LayerCache(a, z, Wq.reconstruct(), Xq.reconstruct().T,
                               Xq.relative_residual())
        else:
            z = a @ W.T + b
            entry = LayerCache(a, z, W, a)
        cache.layers.append(entry)
        a = _activate(z, spec.activation)
    return cache, a


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    inputs: np.ndarray


def ste_sign_grad(pre_sign: np.ndarray, upstream: np.ndarray, clip: float | None = STE_CLIP) -> np.ndarray:
    """Straight-through gradient of ``sign``: identity, zeroed where ``|x| > clip``."""
    if clip is None:
        return upstream
    return upstream * (np.abs(pre_sign) <= clip)


def backward_ste(state: TrainState, specs: Sequence[LayerSpec], cache: ForwardCache | None,
                 loss_grad: np.ndarray, weight_ste_clip: bool = False) -> Gradients:
    """Backpropagate ``dL/dpredictions`` through the cached forward pass."""
    if cache is None or len(cache.layers) != len(specs):
        raise ConfigError("backward needs the cache of a forward pass over the same layers")
    g = np.asarray(loss_grad, dtype=np.float64)
    dWs, dbs = [None] * len(specs), [None] * len(specs)
    for idx in range(len(specs) - 1, -1, -1):
        spec, entry = specs[idx], cache.layers[idx]
        dz = g * _activation_grad(entry.pre, spec.activation)
        dW = dz.T @ entry.x_eff
        da = dz @ entry.w_eff
        if spec.quantized:
            da = ste_sign_grad(entry.inputs, da)
            if weight_ste_clip:
                dW = ste_sign_grad(state.weights[idx], dW)
        dWs[idx] = dW
        dbs[idx] = dz.sum(axis=0)
        g = da
    return Gradients(tuple(dWs), tuple(dbs), g)


def update(state: TrainState, grads: Gradients) -> TrainState:
    """Plain SGD on the master weights."""
    lr = state.lr
    return replace(
        state,
        weights=tuple(W - lr * dW for W, dW in zip(state.weights, grads.weights)),
        biases=tuple(b - lr * db for b, db in zip(state.biases, grads.biases)),
        step=state.step + 1,
    )


# -- losses -------------------------------------------------------------------

def _check_labels(pred: np.ndarray, target) -> np.ndarray:
    target = np.asarray(target)
    if pred.ndim != 2 or target.shape != (pred.shape[0],):
        raise ShapeError(f"predictions {pred.shape} and labels {target.shape} disagree")
    if target.size and (target.min() < 0 or target.max() >= pred.shape[1]):
        raise DomainError(f"labels must lie in [0, {pred.shape[1]})")
    return target.astype(np.int64)


def hinge_l2svm(pred, target) -> tuple[float, np.ndarray]:
    """Squared one-vs-all hinge loss, averaged over the batch."""
    pred = np.asarray(pred, dtype=np.float64)
    target = _check_labels(pred, target)
    t = -np.ones_like(pred)
    t[np.arange(pred.shape[0]), target] = 1.0
    margin = np.maximum(0.0, 1.0 - t * pred)
    B = pred.shape[0]
    return float((margin ** 2).sum() / B), -2.0 * t * margin / B


def softmax_xent(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = _check_labels(pred, target)
    shifted = pred - pred.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    B = pred.shape[0]
    rows = np.arange(B)
    grad = np.exp(log_p)
    grad[rows, target] -= 1.0
    return float(-log_p[rows, target].sum() / B), grad / B


LOSS_FUNCTIONS: dict[str, Callable] = {"hinge": hinge_l2svm, "softmax": softmax_xent}


# -- datasets -----------------------------------------------------------------

def make_blobs(n: int, seed: int = 0, separation: float = 4.5, dim: int = 2):
    """Two unit-variance Gaussian blobs whose centers are ``separation`` apart."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    center = np.full(dim, separation / (2 * math.sqrt(dim)))
    X = rng.standard_normal((n, dim)) + np.where(y[:, None] == 1, center, -center)
    perm = rng.permutation(n)
    return X[perm], y[perm]


def make_xor(n: int, seed: int = 0, noise: float = 0.35):
    rng = np.random.default_rng(seed)
    corners = rng.integers(0, 2, size=(n, 2))
    X = (2.0 * corners - 1.0) + noise * rng.standard_normal((n, 2))
    return X, (corners[:, 0] ^ corners[:, 1]).astype(np.int64)


def load_csv_dataset(path: str | PathLike):
    """Rows of ``label, feature_1, ..., feature_d``; lines starting with '#' are skipped."""
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] < 2 or data.shape[0] == 0:
        raise ConfigError(f"{path}: need rows of label plus at least one feature")
    labels = data[:, 0]
    if not np.all(labels == np.round(labels)) or labels.min() < 0:
        raise ConfigError(f"{path}: labels must be nonnegative integers")
    return data[:, 1:], labels.astype(np.int64)


def load_dataset(name: str, n_train: int, n_test: int, seed: int):
    """Return ``(X_train, y_train, X_test, y_test)`` for ``blobs``, ``xor`` or ``csv:PATH``."""
    if name in ("blobs", "xor"):
        make = make_blobs if name == "blobs" else make_xor
        X, y = make(n_train + n_test, seed=seed)
    elif name.startswith("csv:"):
        X, y = load_csv_dataset(name[4:])
        perm = np.random.default_rng(seed).permutation(len(y))
        X, y = X[perm], y[perm]
        n_test = min(n_test, len(y) // 2)
        n_train = len(y) - n_test
    else:
        raise ConfigError(f"unknown dataset {name!r}; use blobs, xor or csv:PATH")
    return X[:n_train], y[:n_train], X[n_train:n_train + n_test], y[n_train:n_train + n_test]


class Standardizer:
    """Per-feature centering and scaling fitted on the training split."""

    def __init__(self, X: np.ndarray):
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


# -- training loop --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    arch: tuple[int, ...] = (2, 16, 2)
    quantize: tuple[int, ...] = (0,)
    order: int = 2
    loss: str = "hinge"
    lr: float = 0.05
    epochs: int = 30
    seed: int = 0
    batch_size: int = 50
    activation: str = "hardtanh"
    dataset: str = "blobs"
    n_train: int = 500
    n_test: int = 500
    lr_decay: float = 1.0
    weight_ste_clip: bool = False

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.n_train < 1:
            raise ConfigError("epochs must be >= 0, batch_size and n_train >= 1")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError(f"lr_decay must lie in (0, 1], got {self.lr_decay}")

    def specs(self) -> list[LayerSpec]:
        return mlp_specs(self.arch, self.quantize, self.order, self.activation)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    rel_residual: tuple[float, ...]
    test_loss: float | None = None
    test_acc: float | None = None


@dataclass
class TrainResult:
    trace: list[EpochMetrics]
    state: TrainState
    specs: list[LayerSpec]
    standardize: Standardizer

    @property
    def final(self) -> EpochMetrics:
        return self.trace[-1]


def evaluate(state: TrainState, specs: Sequence[LayerSpec], X, y, loss: str = "hinge"):
    """``(loss, accuracy, per-quantized-layer relative residual)`` on a full split."""
    cache, pred = forward(state, specs, X)
    value, _ = LOSS_FUNCTIONS[loss](pred, y)
    acc = float(np.mean(pred.argmax(axis=1) == y))
    rel = tuple(c.rel_residual for s, c in zip(specs, cache.layers) if s.quantized)
    return value, acc, rel


def train_loop(config: TrainConfig, data=None) -> TrainResult:
    """Minibatch SGD over ``config.epochs`` epochs; deterministic in ``config.seed``.

    ``data`` optionally supplies ``(X_train, y_train, X_test, y_test)``; otherwise
    the configured dataset is generated or loaded. Epoch 0 of the trace is the
    untrained network.
    """
    specs = config.specs()
    if data is None:
        data = load_dataset(config.dataset, config.n_train, config.n_test, config.seed)
    X_tr, y_tr, X_te, y_te = data
    if X_tr.shape[1] != config.arch[0]:
        raise ConfigError(f"dataset has {X_tr.shape[1]} features, arch expects {config.arch[0]}")
    if int(max(y_tr.max(), y_te.max() if len(y_te) else 0)) >= config.arch[-1]:
        raise ConfigError(f"labels exceed the {config.arch[-1]} network outputs")
    std = Standardizer(X_tr)
    X_tr, X_te = std(X_tr), std(X_te) if len(y_te) else X_te

    state = init_state(specs, config.lr, config.seed)
    rng = np.random.default_rng(config.seed + 1)
    loss_fn = LOSS_FUNCTIONS[config.loss]

    def snapshot(st: TrainState) -> EpochMetrics:
        tl, ta, rel = evaluate(st, specs, X_tr, y_tr, config.loss)
        if len(y_te):
            vl, va, _ = evaluate(st, specs, X_te, y_te, config.loss)
        else:
            vl = va = None
        return EpochMetrics(st.epoch, tl, ta, rel, vl, va)

    trace = [snapshot(state)]
    n = len(y_tr)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            cache, pred = forward(state, specs, X_tr[idx])
            _, dpred = loss_fn(pred, y_tr[idx])
            grads = backward_ste(state, specs, cache, dpred, config.weight_ste_clip)
            state = update(state, grads)
        state = replace(state, epoch=epoch, lr=state.lr * config.lr_decay)
        trace.append(snapshot(state))
    return TrainResult(trace, state, specs, std)


METRICS_COLUMNS = ("epoch", "train_loss", "train_acc", "mean_rel_residual_per_quantized_layer")


def write_metrics(path: str | PathLike, trace: Sequence[EpochMetrics]) -> None:
    """CSV with one row per epoch; per-layer residuals are ';'-joined in layer order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for m in trace:
            writer.writerow([m.epoch, f"{m.train_loss:.8g}", f"{m.train_acc:.6f}",
                             ";".join(f"{r:.8g}" for r in m.rel_residual)])

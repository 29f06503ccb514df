"""The trainable shallow classification head.

Architecture: input -> bottleneck (ReLU) -> 0..3 hidden layers (ReLU) ->
sigmoid outputs.  Inverted dropout after every ReLU.  Training minimizes
weighted binary cross-entropy with Adam on mini-batches; all math runs at
64-bit precision so gradient checks and cross-platform determinism are clean.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    InvalidInputError,
    NumericError,
    ThresholdError,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
MULTILABEL_SMOOTHING = 1e-6


@dataclass(frozen=True)
class HeadConfig:
    input_dim: int
    hidden_layers: int = 0
    hidden_width: int = 128
    bottleneck_width: int = 10
    n_outputs: int = 1
    dropout_rate: float = 0.0
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1:
            raise ConfigError(f"input_dim must be positive, got {self.input_dim}")
        if not 0 <= self.hidden_layers <= 3:
            raise ConfigError(f"hidden_layers must be in [0, 3], got {self.hidden_layers}")
        if self.hidden_width < 1 or self.bottleneck_width < 1:
            raise ConfigError("layer widths must be positive")
        if self.n_outputs < 1:
            raise ConfigError(f"n_outputs must be >= 1, got {self.n_outputs}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")

    def layer_dims(self) -> list[int]:
        return (
            [self.input_dim, self.bottleneck_width]
            + [self.hidden_width] * self.hidden_layers
            + [self.n_outputs]
        )


@dataclass(eq=False)
class ClassifierHead:
    config: HeadConfig
    weights: list[np.ndarray] = field(repr=False)
    biases: list[np.ndarray] = field(repr=False)
    threshold: float = 0.5
    adam_m: list[np.ndarray] | None = field(default=None, repr=False)
    adam_v: list[np.ndarray] | None = field(default=None, repr=False)
    adam_t: int = 0

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def check_finite(self) -> None:
        for p in self.parameters():
            if not np.isfinite(p).all():
                raise NumericError("head parameters contain non-finite values")


def init_head(config: HeadConfig) -> ClassifierHead:
    """Seeded initialization: He-uniform for ReLU layers, Glorot-uniform for
    the sigmoid output layer, zero biases, zero Adam state."""
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims()
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        limit = np.sqrt(6.0 / (fan_in + fan_out)) if last else np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return ClassifierHead(
        config=config,
        weights=weights,
        biases=biases,
        adam_m=[np.zeros_like(p) for p in weights + biases],
        adam_v=[np.zeros_like(p) for p in weights + biases],
    )


def _dropout_mask(rng: np.random.Generator, shape, rate: float) -> np.ndarray:
    # inverted dropout: surviving units scaled by 1/(1-p) so eval needs no scaling
    return (rng.random(shape) >= rate) / (1.0 - rate)


def _forward_pass(
    head: ClassifierHead,
    x: np.ndarray,
    train_mode: bool,
    rng: np.random.Generator | None,
):
    """Returns (logits, caches); caches hold what backprop needs per layer."""
    config = head.config
    use_dropout = train_mode and config.dropout_rate > 0.0
    if use_dropout and rng is None:
        raise InvalidInputError("train-mode forward with dropout needs an rng")
    a = x
    caches = []
    for l in range(head.n_layers):
        z = a @ head.weights[l] + head.biases[l]
        if l == head.n_layers - 1:
            caches.append((a, z, None))
            return z, caches
        relu = np.maximum(z, 0.0)
        mask = None
        if use_dropout:
            mask = _dropout_mask(rng, relu.shape, config.dropout_rate)
            relu = relu * mask
        caches.append((a, z, mask))
        a = relu
    raise AssertionError("unreachable")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    head: ClassifierHead,
    x: np.ndarray,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Sigmoid probabilities, shape (batch, n_outputs); accepts a single row too."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != head.config.input_dim:
        raise InvalidInputError(
            f"input has {x.shape[1]} features, head expects {head.config.input_dim}"
        )
    logits, _ = _forward_pass(head, x, train_mode, rng)
    probs = _sigmoid(logits)
    return probs[0] if single else probs


def loss_and_gradients(
    head: ClassifierHead,
    x: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray | None = None,
    train_mode: bool = False,
    rng: np.random.Generator | None = None,
):
    """Weighted BCE loss and gradients for every parameter.

    loss = mean_i w_i * bce_i, with bce_i averaged over the output nodes.
    Computed from logits (softplus form) so extreme probabilities stay finite.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"bad batch shapes: x {x.shape}, y {y.shape}")
    if x.shape[1] != head.config.input_dim or y.shape[1] != head.config.n_outputs:
        raise InvalidInputError(
            f"batch shaped ({x.shape[1]}, {y.shape[1]}), head expects "
            f"({head.config.input_dim}, {head.config.n_outputs})"
        )
    n, c = y.shape
    w = np.ones(n) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if w.shape != (n,):
        raise InvalidInputError(f"sample_weights shape {w.shape} != ({n},)")
    if (w <= 0).any():
        raise InvalidInputError("sample weights must be positive")

    logits, caches = _forward_pass(head, x, train_mode, rng)
    # bce(z, y) = softplus(z) - y*z  (per node, from logits)
    bce = np.logaddexp(0.0, logits) - y * logits
    loss = float((w * bce.mean(axis=1)).sum() / n)
    if not np.isfinite(loss):
        raise NumericError("loss is non-finite")

    probs = _sigmoid(logits)
    d_z = (probs - y) * w[:, None] / (n * c)
    grad_w = [None] * head.n_layers
    grad_b = [None] * head.n_layers
    for l in range(head.n_layers - 1, -1, -1):
        a_in, z, mask = caches[l]
        grad_w[l] = a_in.T @ d_z
        grad_b[l] = d_z.sum(axis=0)
        if l > 0:
            d_a = d_z @ head.weights[l].T
            _, z_prev, mask_prev = caches[l - 1]
            if mask_prev is not None:
                d_a = d_a * mask_prev
            d_z = d_a * (z_prev > 0)
    return loss, (grad_w, grad_b)


def adam_step(head: ClassifierHead, grads) -> None:
    grad_w, grad_b = grads
    flat = list(grad_w) + list(grad_b)
    params = head.parameters()
    head.adam_t += 1
    t = head.adam_t
    lr = head.config.learning_rate
    for p, g, m, v in zip(params, flat, head.adam_m, head.adam_v):
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        m_hat = m / (1 - ADAM_BETA1**t)
        v_hat = v / (1 - ADAM_BETA2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def train(
    config: HeadConfig,
    x: np.ndarray,
    y: np.ndarray,
    sample_weights: np.ndarray | None = None,
    epochs: int | None = None,
) -> ClassifierHead:
    """Train a freshly initialized head; deterministic given config.seed.

    Mini-batches of config.batch_size are visited in seeded shuffled order
    each epoch.  epochs=0 returns the initialized head (threshold 0.5).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[0] == 0:
        raise DataError("cannot train on an empty dataset")
    n_epochs = config.epochs if epochs is None else epochs
    head = init_head(config)
    w = np.ones(x.shape[0]) if sample_weights is None else np.asarray(sample_weights, float)
    rng = np.random.default_rng(config.seed)
    n = x.shape[0]
    for _ in range(n_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            _, grads = loss_and_gradients(
                head, x[idx], y[idx], w[idx], train_mode=True, rng=rng
            )
            adam_step(head, grads)
    head.check_finite()
    return head


def class_weights(
    counts, n_total: int | None = None, smoothing: float | None = None
) -> np.ndarray:
    """Inverse-frequency class weights w_k = n / (K * f_k).

    With ``smoothing`` (multi-label use) the denominator becomes
    K * f_k + smoothing, keeping zero-count classes finite.  Without it the
    binary invariant sum_k f_k * w_k == n holds exactly.
    """
    counts = np.asarray(counts, dtype=np.float64)
    k = len(counts)
    if k == 0:
        raise InvalidInputError("counts must be non-empty")
    n = float(counts.sum()) if n_total is None else float(n_total)
    if smoothing is None:
        if (counts == 0).any():
            raise DataError("a class has zero samples; use smoothing or drop the class")
        return n / (k * counts)
    return n / (k * counts + smoothing)


def sample_weights(label_matrix: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-sample weight: max class weight over the sample's labels.

    Samples with no labels get weight 1.0.
    """
    label_matrix = np.asarray(label_matrix, dtype=bool)
    weights = np.asarray(weights, dtype=np.float64)
    if label_matrix.ndim != 2 or label_matrix.shape[1] != len(weights):
        raise InvalidInputError(
            f"label matrix {label_matrix.shape} does not match {len(weights)} class weights"
        )
    out = np.ones(label_matrix.shape[0])
    any_label = label_matrix.any(axis=1)
    if any_label.any():
        masked = np.where(label_matrix, weights[None, :], -np.inf)
        out[any_label] = masked.max(axis=1)[any_label]
    return out


def _f1(tp: int, fp: int, fn: int) -> float:
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def select_threshold_binary(scores: np.ndarray, labels: np.ndarray) -> float:
    """Smallest threshold among the unique scores maximizing training F1.

    A sample is predicted positive when its score >= threshold.
    """
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1).astype(bool)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels differ in length")
    if not labels.any():
        raise ThresholdError("no positive labels; threshold selection is undefined")
    best_t, best_f1 = None, -1.0
    for t in np.unique(scores):
        preds = scores >= t
        f1 = _f1(
            int((preds & labels).sum()),
            int((preds & ~labels).sum()),
            int((~preds & labels).sum()),
        )
        if f1 > best_f1:
            best_t, best_f1 = float(t), f1
    return best_t


def select_threshold_multilabel(scores: np.ndarray, labels: np.ndarray) -> float:
    """One global threshold from {0.1..0.9} maximizing micro-averaged F1.

    Ties break toward the smaller threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise InvalidInputError("scores and labels differ in shape")
    if not labels.any():
        raise ThresholdError("no positive labels; threshold selection is undefined")
    best_t, best_f1 = None, -1.0
    for t in [round(0.1 * i, 1) for i in range(1, 10)]:
        preds = scores >= t
        f1 = _f1(
            int((preds & labels).sum()),
            int((preds & ~labels).sum()),
            int((~preds & labels).sum()),
        )
        if f1 > best_f1:
            best_t, best_f1 = t, f1
    return best_t


def save_head(path: str | Path, head: ClassifierHead, metadata: dict | None = None) -> None:
    """JSON serialization: config, base64 little-endian f64 blobs, threshold."""

    def blob(a: np.ndarray) -> str:
        return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()

    doc = {
        "config": {
            "input_dim": head.config.input_dim,
            "hidden_layers": head.config.hidden_layers,
            "hidden_width": head.config.hidden_width,
            "bottleneck_width": head.config.bottleneck_width,
            "n_outputs": head.config.n_outputs,
            "dropout_rate": head.config.dropout_rate,
            "learning_rate": head.config.learning_rate,
            "batch_size": head.config.batch_size,
            "epochs": head.config.epochs,
            "seed": head.config.seed,
        },
        "weights": [blob(w) for w in head.weights],
        "biases": [blob(b) for b in head.biases],
        "threshold": head.threshold,
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))


def load_head(path: str | Path) -> ClassifierHead:
    doc = json.loads(Path(path).read_text())
    config = HeadConfig(**doc["config"])
    dims = config.layer_dims()
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        w = np.frombuffer(base64.b64decode(doc["weights"][i]), dtype="<f8")
        weights.append(w.reshape(fan_in, fan_out).copy())
        b = np.frombuffer(base64.b64decode(doc["biases"][i]), dtype="<f8")
        biases.append(b.copy())
    head = ClassifierHead(
        config=config, weights=weights, biases=biases, threshold=float(doc["threshold"])
    )
    head.check_finite()
    return head


def with_threshold(head: ClassifierHead, threshold: float) -> ClassifierHead:
    # saturated sigmoids can push a selected threshold onto 0.0/1.0; nudge inside
    tiny = np.finfo(np.float64).tiny
    head.threshold = float(np.clip(threshold, tiny, 1.0 - 1e-12))
    return head

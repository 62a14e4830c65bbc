"""QCNN model, optimisation loop, evaluation and parameter accounting."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import layers as L
from .errors import ConfigError, DataError, InputError, NumericsError, ShapeError

PROB_FLOOR = 1e-12


@dataclass(frozen=True)
class ModelSpec:
    """Layer stack: [qconv -> qrelu -> (qmaxpool)] per conv, then flatten -> dropout -> dense."""

    n_classes: int = 8
    height: int = 50
    width: int = 75
    in_channels: int = 1
    conv_channels: tuple = (32, 64)
    kernel_size: int = 3
    pool_after: tuple = (True, False)
    pool_window: int = 2
    scale_init: str = "mean"  # "mean" or "glorot"; see init_weights

    def __post_init__(self):
        object.__setattr__(self, "conv_channels", tuple(int(c) for c in self.conv_channels))
        object.__setattr__(self, "pool_after", tuple(bool(p) for p in self.pool_after))
        if self.n_classes < 2:
            raise ConfigError("class count must be at least 2")
        if not self.conv_channels or min(self.conv_channels) < 1:
            raise ConfigError("need at least one conv layer with positive channel count")
        if len(self.pool_after) != len(self.conv_channels):
            raise ConfigError("pool_after needs one flag per conv layer")
        if self.kernel_size < 1 or self.pool_window < 1:
            raise ConfigError("kernel and pool sizes must be positive")
        if self.scale_init not in ("mean", "glorot"):
            raise ConfigError(f"scale_init must be 'mean' or 'glorot', got {self.scale_init!r}")
        self.feature_shapes()  # raises on non-composing stacks

    def feature_shapes(self) -> list[tuple[int, int, int]]:
        """Spatial shape ``(H, W, C)`` after each conv block."""
        h, w = self.height, self.width
        shapes = []
        for c, pool in zip(self.conv_channels, self.pool_after):
            h, w = L.conv_output_shape(h, w, self.kernel_size)
            if h < 1 or w < 1:
                raise ConfigError(f"input {self.height}x{self.width} too small for the conv stack")
            if pool:
                if h < self.pool_window or w < self.pool_window:
                    raise ConfigError("feature map too small for pooling")
                h = (h - self.pool_window) // self.pool_window + 1
                w = (w - self.pool_window) // self.pool_window + 1
            shapes.append((h, w, c))
        return shapes

    @property
    def flat_dim(self) -> int:
        h, w, c = self.feature_shapes()[-1]
        return h * w * c * 3

    def conv_shapes(self) -> list[tuple[int, int, int, int]]:
        ins = (self.in_channels,) + self.conv_channels[:-1]
        k = self.kernel_size
        return [(o, i, k, k) for o, i in zip(self.conv_channels, ins)]

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        for n, shp in enumerate(self.conv_shapes(), start=1):
            shapes[f"conv{n}.scale"] = shp
            shapes[f"conv{n}.angle"] = shp
        shapes["dense.weight"] = (self.n_classes, self.flat_dim)
        shapes["dense.bias"] = (self.n_classes,)
        return shapes

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_channels"] = list(self.conv_channels)
        d["pool_after"] = list(self.pool_after)
        return d


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    dropout_p: float = 0.3
    seed: int = 0
    validation_steps: int = 9

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 1 or self.validation_steps < 1:
            raise ConfigError("batch_size and validation_steps must be positive")
        if not (self.learning_rate > 0 and self.eps > 0):
            raise ConfigError("learning_rate and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")

    def describe(self) -> str:
        return " ".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def glorot_uniform(rng: np.random.Generator, out_dim: int, in_dim: int) -> np.ndarray:
    limit = glorot_limit(in_dim, out_dim)
    return rng.uniform(-limit, limit, (out_dim, in_dim))


def scale_limit(spec: ModelSpec, fan_in: int, fan_out: int) -> float:
    """Upper bound of the uniform (0, limit] kernel-scale distribution.

    ``"glorot"`` uses the Glorot bound over the receptive field. ``"mean"``
    uses 2 / fan_in, so the scales in a receptive field sum to 1 on average.
    Rotation about the gray axis never changes a pixel's gray component, and
    every scale is positive, so under the Glorot bound a wide receptive field
    pushes all outputs past 1 and QReLU clamps the whole map. The ``"mean"``
    bound keeps outputs at the input's average brightness.
    """
    if spec.scale_init == "glorot":
        return glorot_limit(fan_in, fan_out)
    return 2.0 / fan_in


def init_weights(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """Seeded initial parameters.

    Kernel scales are uniform on (0, limit] (see :func:`scale_limit`), angles
    uniform on [-pi, pi]. Dense weights are Glorot-uniform and biases zero.
    """
    rng = np.random.default_rng(seed)
    params = {}
    for n, (o, i, k, _) in enumerate(spec.conv_shapes(), start=1):
        limit = scale_limit(spec, i * k * k, o * k * k)
        params[f"conv{n}.scale"] = limit * (1.0 - rng.random((o, i, k, k)))
        params[f"conv{n}.angle"] = rng.uniform(-math.pi, math.pi, (o, i, k, k))
    params["dense.weight"] = glorot_uniform(rng, spec.n_classes, spec.flat_dim)
    params["dense.bias"] = np.zeros(spec.n_classes)
    return params


class QCNN:
    """Parameter container with batched forward/backward over ``(N, H, W, C, 4)`` inputs."""

    def __init__(self, spec: ModelSpec, params: dict[str, np.ndarray]):
        expected = spec.param_shapes()
        if set(params) != set(expected):
            raise ShapeError(f"parameter names {sorted(params)} do not match spec {sorted(expected)}")
        for name, shape in expected.items():
            if tuple(params[name].shape) != tuple(shape):
                raise ShapeError(f"{name} has shape {params[name].shape}, spec needs {shape}")
        self.spec = spec
        self.params = params

    @classmethod
    def initialise(cls, spec: ModelSpec, seed: int) -> "QCNN":
        return cls(spec, init_weights(spec, seed))

    def conv_layer(self, n: int) -> L.QConvLayer:
        return L.QConvLayer(self.params[f"conv{n}.scale"], self.params[f"conv{n}.angle"])

    def forward(self, x, train: bool = False, rng=None, dropout_p: float = 0.0):
        """Logits for a pure-quaternion batch, ``(N, H, W, C, 4)`` or compact ``(N, H, W, C, 3)``."""
        x = L.to_pure(x)
        caches = []
        for n, pool in enumerate(self.spec.pool_after, start=1):
            x, c_conv = L.qconv2d_forward(x, self.conv_layer(n))
            x, c_relu = L.qrelu(x)
            c_pool = None
            if pool:
                x, c_pool = L.qmaxpool(x, self.spec.pool_window, self.spec.pool_window)
            caches.append((c_conv, c_relu, c_pool))
        vec, c_flat = L.flatten(x)
        vec, c_drop = L.dropout(vec, dropout_p, rng, train=train)
        dense = L.DenseLayer(self.params["dense.weight"], self.params["dense.bias"])
        logits, c_dense = L.dense_forward(vec, dense)
        return logits, (caches, c_flat, c_drop, c_dense)

    def backward(self, grad_logits, cache) -> dict[str, np.ndarray]:
        caches, c_flat, c_drop, c_dense = cache
        grads = {}
        g, grads["dense.weight"], grads["dense.bias"] = L.dense_backward(grad_logits, c_dense)
        g = L.dropout_backward(g, c_drop)
        g = L.flatten_backward(g, c_flat)
        for n in range(len(caches), 0, -1):
            c_conv, c_relu, c_pool = caches[n - 1]
            if c_pool is not None:
                g = L.qmaxpool_backward(g, c_pool)
            g = L.qrelu_backward(g, c_relu)
            g, grads[f"conv{n}.scale"], grads[f"conv{n}.angle"] = L.qconv2d_backward(g, c_conv, input_grad=n > 1)
        return grads

    def predict_proba(self, x, batch_size: int = 32) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        out = [L.softmax(self.forward(x[i : i + batch_size])[0]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.spec.n_classes))

    def predict(self, x, batch_size: int = 32) -> np.ndarray:
        return np.argmax(self.predict_proba(x, batch_size), axis=1)


def cross_entropy(probs, label):
    """Loss ``-log p[label]`` and its gradient with respect to the logits.

    For a batch ``(N, K)`` the loss is the mean and the gradient is divided by N.
    """
    p = np.asarray(probs, dtype=np.float64)
    single = p.ndim == 1
    p2 = p[None] if single else p
    y = np.atleast_1d(np.asarray(label))
    if y.shape != (p2.shape[0],) or not np.issubdtype(y.dtype, np.integer):
        raise InputError("labels must be integer class indices, one per row")
    if np.any(y < 0) or np.any(y >= p2.shape[1]):
        raise InputError(f"label out of range for {p2.shape[1]} classes")
    rows = np.arange(p2.shape[0])
    losses = -np.log(np.maximum(p2[rows, y], PROB_FLOOR))
    grad = p2.copy()
    grad[rows, y] -= 1.0
    if single:
        return float(losses[0]), grad[0]
    return float(losses.mean()), grad / p2.shape[0]


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig):
    """One bias-corrected Adam update; kernel scales are clamped to ``S_MIN`` afterwards."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericsError(f"non-finite gradient in layer {name.split('.')[0]} ({name})")
    t = state.step + 1
    new_params, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = cfg.beta1 * state.m.get(name, 0.0) + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * state.v.get(name, 0.0) + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1**t)
        v_hat = v / (1.0 - cfg.beta2**t)
        p = p - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        if name.endswith(".scale"):
            p = np.maximum(p, L.S_MIN)
        new_params[name], new_m[name], new_v[name] = p, m, v
    return new_params, AdamState(new_m, new_v, t)


@dataclass(frozen=True)
class EpochMetrics:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float

    def line(self) -> str:
        return f"{self.epoch},{self.train_loss:.6f},{self.train_acc:.6f},{self.val_acc:.6f}"


@dataclass
class TrainResult:
    final: QCNN
    best: QCNN
    best_epoch: int
    log: list


def accuracy(model: QCNN, x, y, batch_size: int = 32) -> float:
    if len(y) == 0:
        return float("nan")
    return float(np.mean(model.predict(x, batch_size) == np.asarray(y)))


def train_arrays(x_train, y_train, x_val, y_val, spec: ModelSpec, cfg: TrainConfig, on_epoch=None) -> TrainResult:
    """Mini-batch Adam training on in-memory quaternion batches.

    Deterministic given ``cfg.seed``: initialisation, shuffling and dropout
    masks all come from generators derived from it.
    """
    x_train = np.asarray(x_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.int64)
    x_val = np.asarray(x_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.int64)
    if len(y_train) == 0:
        raise DataError("training split is empty")
    if len(y_val) == 0:
        raise DataError("validation split is empty")

    model = QCNN.initialise(spec, cfg.seed)
    best, best_acc, best_epoch = QCNN(spec, dict(model.params)), -1.0, 0
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    val_rng = np.random.default_rng([cfg.seed, 3])
    state = AdamState()
    log = []
    n = len(y_train)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            logits, cache = model.forward(x_train[idx], train=True, rng=dropout_rng, dropout_p=cfg.dropout_p)
            loss, g = cross_entropy(L.softmax(logits), y_train[idx])
            if not math.isfinite(loss):
                raise NumericsError(f"non-finite loss at epoch {epoch}")
            params, state = adam_step(model.params, model.backward(g, cache), state, cfg)
            model = QCNN(spec, params)
            total += loss * len(idx)
        train_acc = accuracy(model, x_train, y_train)
        val_idx = val_rng.permutation(len(y_val))[: cfg.validation_steps * cfg.batch_size]
        val_acc = accuracy(model, x_val[val_idx], y_val[val_idx])
        m = EpochMetrics(epoch, total / n, train_acc, val_acc)
        log.append(m)
        if on_epoch is not None:
            on_epoch(m)
        if val_acc > best_acc:
            best, best_acc, best_epoch = model, val_acc, epoch
    if cfg.epochs == 0:
        best = model
    return TrainResult(model, best, best_epoch, log)


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    unweighted_accuracy: float
    per_class: list
    confusion: np.ndarray  # rows: true class, columns: predicted

    def to_dict(self, labels=None) -> dict:
        d = {
            "accuracy": self.accuracy,
            "unweighted_accuracy": self.unweighted_accuracy,
            "per_class_accuracy": self.per_class,
            "confusion": self.confusion.tolist(),
        }
        if labels is not None:
            d["labels"] = list(labels)
        return d


def evaluate_predictions(pred, y, n_classes: int) -> EvalReport:
    pred = np.asarray(pred, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise DataError("cannot evaluate an empty split")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (y, pred), 1)
    support = conf.sum(axis=1)
    per_class = [float(conf[c, c] / support[c]) if support[c] else float("nan") for c in range(n_classes)]
    present = [r for r, s in zip(per_class, support) if s]
    return EvalReport(float(np.mean(pred == y)), float(np.mean(present)), per_class, conf)


def evaluate_model(model: QCNN, x, y) -> EvalReport:
    return evaluate_predictions(model.predict(x), y, model.spec.n_classes)


@dataclass(frozen=True)
class ParameterReport:
    layers: list  # (name, count)
    total: int
    conv_total: int
    real_conv_layers: list  # (name, count) for a real conv on the RGB-expanded channels
    real_conv_total: int
    param_bytes: int
    serialized_bytes: int


def count_parameters(spec: ModelSpec) -> ParameterReport:
    """Per-layer parameter counts and the on-disk checkpoint size for ``spec``.

    A quaternion kernel element stores (s, theta): 2 reals. The real-valued
    counterpart of each conv treats every quaternion channel as 3 real input
    channels and keeps the output channel count, giving 3 * in * out * L^2.
    """
    from .checkpoint import payload_overhead

    layers, real = [], []
    for n, (o, i, k, _) in enumerate(spec.conv_shapes(), start=1):
        layers.append((f"conv{n}", 2 * o * i * k * k))
        real.append((f"conv{n}", 3 * i * o * k * k))
    dense = spec.n_classes * (spec.flat_dim + 1)
    layers.append(("dense", dense))
    total = sum(c for _, c in layers)
    return ParameterReport(
        layers=layers,
        total=total,
        conv_total=total - dense,
        real_conv_layers=real,
        real_conv_total=sum(c for _, c in real),
        param_bytes=8 * total,
        serialized_bytes=8 * total + payload_overhead(spec),
    )

"""Action-class recognition from sensor windows, and confusion-matrix evaluation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericError
from .nn import Adam, Conv1d, Dense, Dropout, Flatten, Network, ReLU, softmax, softmax_cross_entropy
from .sensors import (
    ACTION_CLASSES,
    CHANNELS,
    FEATURE_NAMES,
    PipelineConfig,
    StreamConfig,
    apply_filter,
    generate_stream,
    make_windows,
    stream_features,
)


@dataclass
class ClassifierConfig:
    architecture: str = "mlp"
    hidden: tuple = (64, 64)
    conv_channels: tuple = (16, 16)
    kernel: int = 3
    lr: float = 0.001
    batch_size: int = 64
    epochs: int = 50
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        self.conv_channels = tuple(self.conv_channels)
        if self.architecture not in ("mlp", "conv1d"):
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")


@dataclass
class Dataset:
    """``x`` is (n, features) for the feature path or (n, channels, length) for raw windows."""

    x: np.ndarray
    y: np.ndarray
    classes: tuple = ACTION_CLASSES

    def __len__(self):
        return len(self.y)

    def class_counts(self):
        return np.bincount(self.y, minlength=len(self.classes))


def feature_columns():
    return [f"{ch}_{name}" for ch in CHANNELS for name in FEATURE_NAMES]


def class_examples(action_class, windows, noise_level, pipeline, seed, raw=False, rate_hz=50.0):
    # one extra leading window absorbs the filter start-up transient and is discarded
    n_samples = windows * pipeline.stride + pipeline.window_len
    cfg = StreamConfig(action_class=action_class, duration_s=n_samples / rate_hz,
                       rates_hz={c: rate_hz for c in CHANNELS}, noise_level=noise_level, seed=seed)
    stream = generate_stream(cfg)
    if raw:
        per_ch = []
        for ch in CHANNELS:
            filtered = apply_filter(stream.values[ch], pipeline)
            per_ch.append([w.values for w in make_windows(filtered, pipeline.window_len, pipeline.stride)])
        return np.stack([np.stack(ws) for ws in per_ch], axis=1)[1:windows + 1]
    feats = stream_features(stream, pipeline)
    rows = [np.concatenate([feats[ch][k].as_array() for ch in CHANNELS]) for k in range(1, windows + 1)]
    return np.array(rows)


def build_dataset(windows_per_class=100, split=0.7, noise_level=0.5, pipeline=None, seed=0, raw=False):
    """Stratified train/test split of windows drawn from one synthetic stream per class."""
    if windows_per_class < 2:
        raise ConfigError("each class needs at least 2 windows")
    if not 0.0 < split < 1.0:
        raise ConfigError("split must be in (0, 1)")
    pipeline = pipeline or PipelineConfig()
    seeds = np.random.SeedSequence(seed).generate_state(len(ACTION_CLASSES) + 1)
    rng = np.random.default_rng(int(seeds[-1]))
    n_train = int(round(split * windows_per_class))
    tr_x, tr_y, te_x, te_y = [], [], [], []
    for c, name in enumerate(ACTION_CLASSES):
        x = class_examples(name, windows_per_class, noise_level, pipeline, int(seeds[c]), raw=raw)
        perm = rng.permutation(windows_per_class)
        tr_x.append(x[perm[:n_train]])
        te_x.append(x[perm[n_train:]])
        tr_y += [c] * n_train
        te_y += [c] * (windows_per_class - n_train)
    return (
        Dataset(np.concatenate(tr_x), np.array(tr_y, dtype=np.int64)),
        Dataset(np.concatenate(te_x), np.array(te_y, dtype=np.int64)),
    )


class Classifier:
    """A network plus the input standardization fitted on its training set."""

    def __init__(self, net, mean, scale, architecture="mlp", classes=ACTION_CLASSES):
        self.net = net
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)
        self.architecture = architecture
        self.classes = tuple(classes)

    def standardize(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-self.mean.ndim:] != self.mean.shape:
            raise DimensionError(f"input shape {x.shape} does not match model input {self.mean.shape}")
        return (x - self.mean) / self.scale

    def logits(self, x, training=False):
        return self.net.forward(self.standardize(x), training=training)

    def to_dict(self):
        d = self.net.to_dict()
        d["preprocessing"] = {
            "architecture": self.architecture,
            "shape": list(self.mean.shape),
            "mean": self.mean.ravel().tolist(),
            "scale": self.scale.ravel().tolist(),
            "classes": list(self.classes),
        }
        return d

    @classmethod
    def from_dict(cls, d):
        pre = d["preprocessing"]
        shape = tuple(pre["shape"])
        return cls(
            Network.from_dict(d),
            np.array(pre["mean"]).reshape(shape),
            np.array(pre["scale"]).reshape(shape),
            pre["architecture"],
            pre["classes"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def build_network(cfg, input_shape, n_classes, rng):
    layers = []
    if cfg.architecture == "conv1d":
        channels, length = input_shape
        c_in = channels
        for c_out in cfg.conv_channels:
            layers += [Conv1d(c_in, c_out, cfg.kernel, rng), ReLU()]
            c_in = c_out
            length -= cfg.kernel - 1
        layers.append(Flatten())
        width = c_in * length
    else:
        (width,) = input_shape
    for h in cfg.hidden:
        layers += [Dense(width, h, rng), ReLU()]
        if cfg.dropout > 0:
            layers.append(Dropout(cfg.dropout))
        width = h
    # zero output layer: every class starts equally likely
    layers.append(Dense(width, n_classes, weight=np.zeros((n_classes, width))))
    return Network(layers, seed=int(rng.integers(2**31)))


def train_classifier(train, cfg=None):
    """Mini-batch Adam on softmax cross-entropy. Returns ``(model, epoch_losses)``."""
    cfg = cfg or ClassifierConfig()
    if len(train) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    x = np.asarray(train.x, dtype=np.float64)
    axes = (0, 2) if x.ndim == 3 else (0,)
    mean = x.mean(axis=axes, keepdims=True)[0]
    scale = x.std(axis=axes, keepdims=True)[0]
    scale = np.where(scale > 0, scale, 1.0)
    if x.ndim == 3:
        mean = np.broadcast_to(mean, x.shape[1:]).copy()
        scale = np.broadcast_to(scale, x.shape[1:]).copy()
    net = build_network(cfg, x.shape[1:], len(train.classes), rng)
    model = Classifier(net, mean, scale, cfg.architecture, train.classes)
    xs = model.standardize(x)
    opt = Adam(net.params, cfg.lr)
    losses = []
    n = len(train)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            logits = net.forward(xs[idx], training=True)
            loss, grad = softmax_cross_entropy(logits, train.y[idx])
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}", snapshot={"epoch": epoch, "batch_start": start})
            grads, _ = net.backward(grad)
            opt.step(grads)
            total += loss * len(idx)
        losses.append(total / n)
    return model, losses


def predict(model, x):
    """Most probable class (lowest index wins ties) and the class probabilities."""
    logits = model.logits(x)
    probs = softmax(logits)
    k = int(np.argmax(probs))
    return model.classes[k], probs


def predict_batch(model, x):
    return np.argmax(model.logits(x), axis=1)


@dataclass
class ConfusionResult:
    matrix: np.ndarray
    classes: tuple = ACTION_CLASSES
    per_class: np.ndarray = field(init=False)
    overall: float = field(init=False)

    def __post_init__(self):
        rows = self.matrix.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.per_class = np.where(rows > 0, np.diag(self.matrix) / np.maximum(rows, 1), 0.0)
        self.overall = float(np.trace(self.matrix) / self.matrix.sum())


def confusion_from_predictions(y_true, y_pred, n_classes=len(ACTION_CLASSES), classes=ACTION_CLASSES):
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return ConfusionResult(m, tuple(classes))


def confusion_matrix(model, test):
    if len(test) == 0:
        raise ValueError("empty test set")
    return confusion_from_predictions(test.y, predict_batch(model, test.x), len(model.classes), model.classes)


def majority_baseline(train, test):
    """Constant predictor of the most frequent training class."""
    k = int(np.argmax(train.class_counts()))
    return confusion_from_predictions(test.y, np.full(len(test), k), len(test.classes), test.classes)


def write_dataset_csv(path, data):
    cols = feature_columns() if data.x.ndim == 2 and data.x.shape[1] == len(feature_columns()) else [
        f"x{i}" for i in range(int(np.prod(data.x.shape[1:])))
    ]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols + ["label"])
        for row, y in zip(data.x.reshape(len(data), -1), data.y):
            w.writerow([repr(float(v)) for v in row] + [data.classes[y]])


def write_confusion_csv(path, result):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(result.classes))
        for name, row in zip(result.classes, result.matrix):
            w.writerow([name] + [int(v) for v in row])

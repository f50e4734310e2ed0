"""Small feedforward network engine with hand-written backprop.

Layers operate on float64 numpy arrays with a leading batch dimension.
Dense layers take ``(batch, fan_in)``, conv1d layers take
``(batch, channels, length)`` and use valid padding with stride 1.
A network may also be called on a single unbatched example, in which case
the batch axis is added and stripped transparently.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, StateError


def glorot_uniform(rng, shape, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params = []
        self.grads = []
        self._x = None

    def forward(self, x, training, rng):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind}


class Dense(Layer):
    kind = "dense"

    def __init__(self, fan_in, fan_out, rng=None, weight=None, bias=None):
        super().__init__()
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = glorot_uniform(rng, (fan_out, fan_in), fan_in, fan_out)
        if bias is None:
            bias = np.zeros(fan_out)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.shape != (fan_out, fan_in) or self.bias.shape != (fan_out,):
            raise DimensionError(
                f"dense parameters {self.weight.shape}/{self.bias.shape} "
                f"inconsistent with {fan_in}->{fan_out}"
            )
        self.params = [self.weight, self.bias]
        self.grads = [np.zeros_like(self.weight), np.zeros_like(self.bias)]

    @property
    def fan_in(self):
        return self.weight.shape[1]

    @property
    def fan_out(self):
        return self.weight.shape[0]

    def forward(self, x, training, rng):
        if x.ndim != 2 or x.shape[1] != self.fan_in:
            raise DimensionError(f"expects (batch, {self.fan_in}), got {x.shape}")
        self._x = x
        return x @ self.weight.T + self.bias

    def backward(self, grad):
        x = self._x
        self.grads[0][...] = grad.T @ x
        self.grads[1][...] = grad.sum(axis=0)
        return grad @ self.weight


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_channels, out_channels, kernel=3, rng=None, weight=None, bias=None):
        super().__init__()
        if weight is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            weight = glorot_uniform(
                rng, (out_channels, in_channels, kernel), in_channels * kernel, out_channels * kernel
            )
        if bias is None:
            bias = np.zeros(out_channels)
        self.weight = np.asarray(weight, dtype=np.float64)
        self.bias = np.asarray(bias, dtype=np.float64)
        if self.weight.shape != (out_channels, in_channels, kernel) or self.bias.shape != (out_channels,):
            raise DimensionError(f"conv1d parameters {self.weight.shape}/{self.bias.shape} inconsistent")
        self.params = [self.weight, self.bias]
        self.grads = [np.zeros_like(self.weight), np.zeros_like(self.bias)]

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def kernel(self):
        return self.weight.shape[2]

    def forward(self, x, training, rng):
        if x.ndim != 3 or x.shape[1] != self.in_channels or x.shape[2] < self.kernel:
            raise DimensionError(
                f"expects (batch, {self.in_channels}, length>={self.kernel}), got {x.shape}"
            )
        cols = np.lib.stride_tricks.sliding_window_view(x, self.kernel, axis=2)
        self._x = x
        self._cols = cols
        return np.einsum("bclk,ock->bol", cols, self.weight) + self.bias[None, :, None]

    def backward(self, grad):
        self.grads[0][...] = np.einsum("bol,bclk->ock", grad, self._cols)
        self.grads[1][...] = grad.sum(axis=(0, 2))
        dx = np.zeros_like(self._x)
        out_len = grad.shape[2]
        for j in range(self.kernel):
            dx[:, :, j:j + out_len] += np.einsum("bol,oc->bcl", grad, self.weight[:, :, j])
        return dx


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training, rng):
        self._x = x
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return grad * (self._x > 0)


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, training, rng):
        y = np.tanh(x)
        self._y = y
        return y

    def backward(self, grad):
        return grad * (1.0 - self._y ** 2)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training, rng):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout: surviving units are scaled by 1/(1-rate) at train time."""

    kind = "dropout"

    def __init__(self, rate=0.5):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = float(rate)
        self.mask = None
        # set by gradient checks to replay one mask across several forwards
        self.fixed_mask = None

    def forward(self, x, training, rng):
        if not training or self.rate == 0.0:
            self.mask = None
            return x
        if self.fixed_mask is not None:
            self.mask = self.fixed_mask
        else:
            self.mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self.mask

    def backward(self, grad):
        return grad if self.mask is None else grad * self.mask

    def describe(self):
        return {"kind": self.kind, "rate": self.rate}


class Network:
    def __init__(self, layers, seed=0):
        self.layers = list(layers)
        self.rng = np.random.default_rng(seed)
        self._cached = False
        self._squeezed = False

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def n_params(self):
        return sum(p.size for p in self.params)

    def _batch_ndim(self):
        for layer in self.layers:
            if isinstance(layer, Dense):
                return 2
            if isinstance(layer, Conv1d):
                return 3
        return None

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise NumericError("network input contains non-finite values")
        want = self._batch_ndim()
        self._squeezed = want is not None and x.ndim == want - 1
        if self._squeezed:
            x = x[None]
        for i, layer in enumerate(self.layers):
            try:
                x = layer.forward(x, training, self.rng)
            except DimensionError as exc:
                raise DimensionError(f"layer {i} ({layer.kind}): {exc}") from None
        self._cached = True
        return x[0] if self._squeezed else x

    __call__ = forward

    def backward(self, grad):
        """Backpropagate ``grad`` (dLoss/dOutput) through the last forward pass.

        Returns ``(param_grads, input_grad)``; ``param_grads`` is aligned
        with ``self.params``. The cached activations are consumed.
        """
        if not self._cached:
            raise StateError("backward called without a preceding forward pass")
        grad = np.asarray(grad, dtype=np.float64)
        if self._squeezed:
            grad = grad[None]
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        self._cached = False
        grads = [g.copy() for layer in self.layers for g in layer.grads]
        return grads, (grad[0] if self._squeezed else grad)

    def copy(self):
        return copy.deepcopy(self)

    def to_dict(self):
        out = []
        for layer in self.layers:
            d = layer.describe()
            if layer.params:
                d["shape"] = list(layer.weight.shape)
                d["weight"] = layer.weight.ravel().tolist()
                d["bias"] = layer.bias.tolist()
            out.append(d)
        return {"layers": out}

    @classmethod
    def from_dict(cls, doc, seed=0):
        layers = []
        for d in doc["layers"]:
            kind = d["kind"]
            if kind == "dense":
                out_f, in_f = d["shape"]
                w = np.array(d["weight"], dtype=np.float64).reshape(out_f, in_f)
                layers.append(Dense(in_f, out_f, weight=w, bias=np.array(d["bias"], dtype=np.float64)))
            elif kind == "conv1d":
                oc, ic, k = d["shape"]
                w = np.array(d["weight"], dtype=np.float64).reshape(oc, ic, k)
                layers.append(Conv1d(ic, oc, k, weight=w, bias=np.array(d["bias"], dtype=np.float64)))
            elif kind == "relu":
                layers.append(ReLU())
            elif kind == "tanh":
                layers.append(Tanh())
            elif kind == "flatten":
                layers.append(Flatten())
            elif kind == "dropout":
                layers.append(Dropout(d["rate"]))
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
        return cls(layers, seed=seed)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text, seed=0):
        return cls.from_dict(json.loads(text), seed=seed)


def mlp(sizes, seed=0, activation="relu", dropout=0.0):
    """Dense stack ``sizes[0] -> ... -> sizes[-1]`` with activations between layers."""
    rng = np.random.default_rng(seed)
    act = {"relu": ReLU, "tanh": Tanh}[activation]
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Dense(a, b, rng))
        if i < len(sizes) - 2:
            layers.append(act())
            if dropout > 0:
                layers.append(Dropout(dropout))
    return Network(layers, seed=int(rng.integers(2**31)))


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, label):
    """Loss and logit-gradient for one example.

    Batched input (``logits`` 2-D, ``label`` an int array) returns the mean
    loss and the gradient of that mean.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.atleast_1d(np.asarray(label))
    k = logits.shape[-1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise IndexError(f"label {label} out of range for {k} classes")
    z = logits - logits.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_p = z - log_norm
    p = np.exp(log_p)
    if logits.ndim == 1:
        grad = p.copy()
        grad[labels[0]] -= 1.0
        return float(-log_p[labels[0]]), grad
    n = logits.shape[0]
    rows = np.arange(n)
    loss = float(-log_p[rows, labels].mean())
    grad = p.copy()
    grad[rows, labels] -= 1.0
    return loss, grad / n


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw):
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def adam_step(params, grads, state, lr):
    """In-place Adam update with bias correction."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params, grads and Adam state disagree in length")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise DimensionError(f"parameter {i}: shape {p.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {i}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


@dataclass
class Adam:
    params: list
    lr: float
    state: AdamState = field(default=None)

    def __post_init__(self):
        if self.state is None:
            self.state = AdamState.zeros_like(self.params)

    def step(self, grads):
        adam_step(self.params, grads, self.state, self.lr)

    def state_dict(self):
        s = self.state
        return {
            "t": s.t,
            "m": [a.ravel().tolist() for a in s.m],
            "v": [a.ravel().tolist() for a in s.v],
        }

    def load_state_dict(self, d):
        self.state.t = int(d["t"])
        for dst, src in zip(self.state.m, d["m"]):
            dst[...] = np.array(src, dtype=np.float64).reshape(dst.shape)
        for dst, src in zip(self.state.v, d["v"]):
            dst[...] = np.array(src, dtype=np.float64).reshape(dst.shape)


def gradient_check(net, x, n_probes=100, h=1e-5, seed=0, training=False):
    """Compare analytic parameter gradients with central finite differences.

    The scalar loss is ``sum(G * net(x))`` for a fixed random ``G``. Dropout
    masks drawn on the first forward are frozen for the perturbed passes.
    Returns the relative error of each probed parameter entry.
    """
    rng = np.random.default_rng(seed)
    out = net.forward(x, training=training)
    g_out = rng.standard_normal(out.shape)
    grads, _ = net.backward(g_out)
    dropouts = [layer for layer in net.layers if isinstance(layer, Dropout)]
    for layer in dropouts:
        layer.fixed_mask = layer.mask
    params = net.params
    sizes = np.array([p.size for p in params])
    errors = []
    try:
        for _ in range(n_probes):
            k = int(rng.choice(len(params), p=sizes / sizes.sum()))
            flat = params[k].reshape(-1)
            i = int(rng.integers(flat.size))
            old = flat[i]
            flat[i] = old + h
            up = float(np.sum(g_out * net.forward(x, training=training)))
            flat[i] = old - h
            down = float(np.sum(g_out * net.forward(x, training=training)))
            flat[i] = old
            numeric = (up - down) / (2.0 * h)
            analytic = grads[k].reshape(-1)[i]
            errors.append(abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
    finally:
        for layer in dropouts:
            layer.fixed_mask = None
    net._cached = False
    return np.array(errors)

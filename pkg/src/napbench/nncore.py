"""A small float64 neural-network engine with hand-derived backward passes.

Layers cache what they need during ``forward`` and accumulate parameter
gradients into ``grads`` during ``backward``. Shapes follow the
batch-first convention: dense layers take ``(batch, features)``,
sequence layers ``(batch, time, channels)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

BN_EPS = 1e-3
BN_MOMENTUM = 0.99
CE_FLOOR = 1e-12


class ShapeError(ValueError):
    pass


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def __repr__(self):
        return f"{type(self).__name__}({', '.join(f'{k}={v.shape}' for k, v in self.params.items())})"


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.zeros(n_out)
        self.zero_grad()

    def forward(self, x, training=False):
        W = self.params["W"]
        if x.ndim != 2 or x.shape[1] != W.shape[0]:
            raise ShapeError(f"dense expects (batch, {W.shape[0]}), got {x.shape}")
        self._x = x
        return x @ W + self.params["b"]

    def backward(self, dy):
        self.grads["W"] += self._x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["W"].T


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Linear(Layer):
    kind = "linear"

    def forward(self, x, training=False):
        return x

    def backward(self, dy):
        return dy


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False):
        self._p = softmax(x)
        return self._p

    def backward(self, dy):
        p = self._p
        return p * (dy - (dy * p).sum(axis=-1, keepdims=True))


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout; identity at inference or when ``enabled`` is False."""

    kind = "dropout"

    def __init__(self, rate: float, rng: np.random.Generator | None = None):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = rng or np.random.default_rng(0)
        self.enabled = True

    def forward(self, x, training=False):
        if not training or not self.enabled or self.rate == 0:
            self._mask = None
            return x
        self._mask = (self.rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class BatchNorm(Layer):
    """Normalises the last axis; every other axis counts as a batch axis.

    Running statistics are exponential moving averages (momentum 0.99)
    with the same start-up bias correction Adam applies to its moments, so
    inference statistics track the data from the first update on.
    """

    kind = "batchnorm"

    def __init__(self, n_features: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        super().__init__()
        self.eps, self.momentum = eps, momentum
        self.params["gamma"] = np.ones(n_features)
        self.params["beta"] = np.zeros(n_features)
        # zero-initialised EMAs, bias-corrected at inference by 1 - momentum**steps
        self.buffers["running_mean"] = np.zeros(n_features)
        self.buffers["running_var"] = np.zeros(n_features)
        self.buffers["steps"] = np.zeros(1)
        self.zero_grad()

    def inference_stats(self) -> tuple[np.ndarray, np.ndarray]:
        t = self.buffers["steps"][0]
        if t == 0:
            return np.zeros_like(self.buffers["running_mean"]), np.ones_like(self.buffers["running_var"])
        c = 1.0 - self.momentum**t
        return self.buffers["running_mean"] / c, self.buffers["running_var"] / c

    def forward(self, x, training=False):
        shape = x.shape
        xf = x.reshape(-1, shape[-1])
        g, b = self.params["gamma"], self.params["beta"]
        if training:
            if shape[0] < 2:
                raise ShapeError("batch normalisation needs a batch of at least 2 in training mode")
            mu = xf.mean(axis=0)
            var = xf.var(axis=0)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mu
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
            self.buffers["steps"] = self.buffers["steps"] + 1
        else:
            mu, var = self.inference_stats()
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (xf - mu) * inv
        self._cache = (xhat, inv, shape)
        return (xhat * g + b).reshape(shape)

    def backward(self, dy):
        xhat, inv, shape = self._cache
        dyf = dy.reshape(-1, shape[-1])
        n = dyf.shape[0]
        self.grads["gamma"] += (dyf * xhat).sum(axis=0)
        self.grads["beta"] += dyf.sum(axis=0)
        dxhat = dyf * self.params["gamma"]
        dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx.reshape(shape)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LSTM(Layer):
    """Single LSTM layer returning the last hidden state.

    Gate order inside the stacked kernels is input, forget, candidate, output.
    """

    kind = "lstm"

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator | None = None, forget_bias: float = 1.0):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        H = hidden
        self.hidden = H
        self.params["W"] = glorot_uniform(rng, (n_in, 4 * H), n_in, 4 * H)
        self.params["R"] = glorot_uniform(rng, (H, 4 * H), H, 4 * H)
        b = np.zeros(4 * H)
        b[H : 2 * H] = forget_bias
        self.params["b"] = b
        self.zero_grad()

    def forward(self, x, training=False):
        W, R, b = self.params["W"], self.params["R"], self.params["b"]
        if x.ndim != 3 or x.shape[2] != W.shape[0]:
            raise ShapeError(f"lstm expects (batch, time, {W.shape[0]}), got {x.shape}")
        B, M, _ = x.shape
        H = self.hidden
        xw = (x.reshape(B * M, -1) @ W).reshape(B, M, 4 * H) + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs, cs, gates = [h], [c], []
        for t in range(M):
            z = xw[:, t] + h @ R
            i = sigmoid(z[:, :H])
            f = sigmoid(z[:, H : 2 * H])
            g = np.tanh(z[:, 2 * H : 3 * H])
            o = sigmoid(z[:, 3 * H :])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates.append((i, f, g, o))
            hs.append(h)
            cs.append(c)
        self._cache = (x, hs, cs, gates)
        return h

    def backward(self, dy):
        x, hs, cs, gates = self._cache
        W, R = self.params["W"], self.params["R"]
        B, M, _ = x.shape
        H = self.hidden
        dz_all = np.empty((B, M, 4 * H))
        dh = dy
        dc = np.zeros((B, H))
        dR = np.zeros_like(R)
        for t in range(M - 1, -1, -1):
            i, f, g, o = gates[t]
            tc = np.tanh(cs[t + 1])
            dc = dc + dh * o * (1.0 - tc * tc)
            dz = dz_all[:, t]
            dz[:, :H] = dc * g * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * cs[t] * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dc * i * (1.0 - g * g)
            dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
            dR += hs[t].T @ dz
            dh = dz @ R.T
            dc = dc * f
        flat = dz_all.reshape(B * M, -1)
        self.grads["W"] += x.reshape(B * M, -1).T @ flat
        self.grads["R"] += dR
        self.grads["b"] += flat.sum(axis=0)
        return (flat @ W.T).reshape(x.shape)


class Conv1D(Layer):
    """Stride-1 cross-correlation along time with "same" zero padding."""

    kind = "conv1d"

    def __init__(self, n_in: int, filters: int, kernel: int = 3, rng: np.random.Generator | None = None):
        super().__init__()
        if kernel < 1:
            raise ValueError("kernel must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.kernel = kernel
        self.params["W"] = glorot_uniform(rng, (kernel, n_in, filters), kernel * n_in, kernel * filters)
        self.params["b"] = np.zeros(filters)
        self.zero_grad()

    def _pads(self):
        left = (self.kernel - 1) // 2
        return left, self.kernel - 1 - left

    def forward(self, x, training=False):
        W = self.params["W"]
        k, c_in, c_out = W.shape
        if x.ndim != 3 or x.shape[2] != c_in:
            raise ShapeError(f"conv1d expects (batch, time, {c_in}), got {x.shape}")
        B, M, _ = x.shape
        xp = np.pad(x, ((0, 0), self._pads(), (0, 0)))
        # (B, M, C_in, k) -> (B*M, k*C_in) with kernel-major columns
        cols = np.lib.stride_tricks.sliding_window_view(xp, k, axis=1)
        cols = cols.transpose(0, 1, 3, 2).reshape(B * M, k * c_in)
        self._cache = (cols, x.shape)
        return (cols @ W.reshape(k * c_in, c_out)).reshape(B, M, c_out) + self.params["b"]

    def backward(self, dy):
        cols, shape = self._cache
        W = self.params["W"]
        k, c_in, c_out = W.shape
        B, M, _ = shape
        dyf = dy.reshape(B * M, c_out)
        self.grads["W"] += (cols.T @ dyf).reshape(W.shape)
        self.grads["b"] += dyf.sum(axis=0)
        dcols = (dyf @ W.reshape(k * c_in, c_out).T).reshape(B, M, k, c_in)
        left, right = self._pads()
        dxp = np.zeros((B, M + k - 1, c_in))
        for j in range(k):
            dxp[:, j : j + M] += dcols[:, :, j]
        return dxp[:, left : left + M]


class MaxPool1D(Layer):
    """Non-overlapping max pooling along time; identity when fewer than ``pool`` steps remain."""

    kind = "maxpool1d"

    def __init__(self, pool: int = 2):
        super().__init__()
        if pool < 1:
            raise ValueError("pool must be >= 1")
        self.pool = pool

    @staticmethod
    def out_len(m: int, pool: int) -> int:
        return m if m < pool else m // pool

    def forward(self, x, training=False):
        B, M, C = x.shape
        p = self.pool
        if M < p:
            self._cache = None
            return x
        L = M // p
        xr = x[:, : L * p].reshape(B, L, p, C)
        idx = xr.argmax(axis=2)
        self._cache = (idx, x.shape)
        return np.take_along_axis(xr, idx[:, :, None, :], axis=2)[:, :, 0]

    def backward(self, dy):
        if self._cache is None:
            return dy
        idx, shape = self._cache
        B, M, C = shape
        p = self.pool
        L = M // p
        mask = np.arange(p)[None, None, :, None] == idx[:, :, None, :]
        dx = np.zeros(shape)
        dx[:, : L * p] = (mask * dy[:, :, None, :]).reshape(B, L * p, C)
        return dx


def cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    """Mean categorical cross-entropy with a 1e-12 floor inside the log."""
    return float(-(targets * np.log(probs + CE_FLOOR)).sum() / probs.shape[0])


def cross_entropy_grad(probs: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Gradient of the mean loss w.r.t. the pre-softmax logits."""
    return (probs - targets) / probs.shape[0]


class Network:
    """Layer pipeline whose last layer is a ``Softmax``."""

    def __init__(self, layers: Sequence[Layer], rng: np.random.Generator | None = None):
        self.layers = list(layers)
        self.rng = rng

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    __call__ = forward

    def predict(self, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
        if len(x) <= batch_size:
            return self.forward(x, training=False)
        return np.vstack([self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def backward(self, probs: np.ndarray, targets: np.ndarray) -> None:
        """Backpropagate cross-entropy through everything below the softmax."""
        d = cross_entropy_grad(probs, targets)
        for layer in reversed(self.layers[:-1]):
            d = layer.backward(d)

    def loss_and_grads(self, x, y, training=True) -> float:
        self.zero_grad()
        p = self.forward(x, training)
        loss = cross_entropy(p, y)
        self.backward(p, y)
        return loss

    def parameters(self) -> list[tuple[Layer, str]]:
        return [(layer, k) for layer in self.layers for k in layer.params]

    def param_arrays(self) -> list[np.ndarray]:
        return [layer.params[k] for layer, k in self.parameters()]

    def grad_arrays(self) -> list[np.ndarray]:
        return [layer.grads[k] for layer, k in self.parameters()]

    def n_params(self) -> int:
        return sum(p.size for p in self.param_arrays())

    def state(self) -> list[np.ndarray]:
        """Copies of parameters and running statistics, in a fixed order."""
        out = []
        for layer in self.layers:
            out += [v.copy() for v in layer.params.values()]
            out += [v.copy() for v in layer.buffers.values()]
        return out

    def load_state(self, arrays: Sequence[np.ndarray]) -> None:
        it = iter(arrays)
        for layer in self.layers:
            for store in (layer.params, layer.buffers):
                for k in store:
                    a = next(it)
                    if a.shape != store[k].shape:
                        raise ShapeError(f"checkpoint shape {a.shape} != {store[k].shape}")
                    store[k] = np.array(a, dtype=float)

    def set_dropout(self, enabled: bool) -> None:
        for layer in self.layers:
            if isinstance(layer, Dropout):
                layer.enabled = enabled


@dataclass
class OptimizerState:
    kind: str
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def init(self, params: Sequence[np.ndarray]) -> None:
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def _moments(params, grads, state: OptimizerState):
    if not state.m:
        state.init(params)
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("parameter, gradient and moment lists differ in length")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter shape {p.shape}")
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
    return b1, b2, state.step


def adam_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState) -> None:
    """In-place Adam step with bias-corrected moments."""
    b1, b2, t = _moments(params, grads, state)
    c1, c2 = 1 - b1**t, 1 - b2**t
    for p, m, v in zip(params, state.m, state.v):
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def nadam_update(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState) -> None:
    """In-place Nadam step (Nesterov look-ahead on the bias-corrected first moment, no momentum schedule)."""
    b1, b2, t = _moments(params, grads, state)
    c1, c2 = 1 - b1**t, 1 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m_bar = b1 * (m / c1) + (1 - b1) * g / c1
        p -= state.lr * m_bar / (np.sqrt(v / c2) + state.eps)


UPDATES = {"adam": adam_update, "nadam": nadam_update}


def optimizer_step(network: Network, state: OptimizerState) -> None:
    UPDATES[state.kind](network.param_arrays(), network.grad_arrays(), state)


# Denominator floor: a gradient that is exactly zero (a bias feeding batch
# normalisation) is otherwise compared against pure finite-difference noise.
GRAD_CHECK_FLOOR = 1e-5


def rel_error(a: np.ndarray, n: np.ndarray, floor: float = GRAD_CHECK_FLOOR) -> float:
    """``|a - n| / max(|a| + |n|, floor)`` in the Euclidean norm."""
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), floor))


def numeric_gradient(f: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``arr`` (perturbed in place)."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def gradient_check(network: Network, x: np.ndarray, y: np.ndarray, h: float = 1e-5) -> float:
    """Largest relative error between analytic and central-difference gradients.

    The error of one parameter tensor is ``|a - n| / (|a| + |n|)`` in the
    Euclidean norm; the input gradient is not checked here. Dropout is
    switched off and running statistics are restored afterwards.
    """
    saved = network.state()
    network.set_dropout(False)
    try:
        network.loss_and_grads(x, y)
        analytic = [g.copy() for g in network.grad_arrays()]

        def loss():
            return cross_entropy(network.forward(x, training=True), y)

        worst = 0.0
        for p, a in zip(network.param_arrays(), analytic):
            worst = max(worst, rel_error(a, numeric_gradient(loss, p, h)))
        return worst
    finally:
        network.set_dropout(True)
        network.load_state(saved)


def check_layer_gradients(
    layer: Layer, x: np.ndarray, rng: np.random.Generator, h: float = 1e-5, training: bool = True
) -> float:
    """Gradient check of one layer under the loss ``sum(layer(x) * R)`` for a random ``R``.

    Covers the input gradient and every parameter gradient.
    """
    x = np.array(x, dtype=float)
    y = layer.forward(x, training)
    proj = rng.standard_normal(y.shape)
    layer.zero_grad()
    layer.forward(x, training)
    dx = layer.backward(proj)
    analytic = {k: g.copy() for k, g in layer.grads.items()}

    def loss():
        return float((layer.forward(x, training) * proj).sum())

    worst = rel_error(dx, numeric_gradient(loss, x, h))
    for k, p in layer.params.items():
        worst = max(worst, rel_error(analytic[k], numeric_gradient(loss, p, h)))
    return worst


_MAGIC = b"NAPCKPT1"


def save_checkpoint(arrays: Sequence[np.ndarray], path: str | Path) -> None:
    """Flat binary: magic, count, then per array ndim, shape and float64 data (little-endian)."""
    with Path(path).open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<q", len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<q", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}q", *a.shape))
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> list[np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:8] != _MAGIC:
        raise ValueError(f"{path} is not a checkpoint")
    off = 8
    (count,) = struct.unpack_from("<q", buf, off)
    off += 8
    out = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<q", buf, off)
        off += 8
        shape = struct.unpack_from(f"<{ndim}q", buf, off)
        off += 8 * ndim
        n = int(np.prod(shape)) if ndim else 1
        out.append(np.frombuffer(buf, dtype="<f8", count=n, offset=off).reshape(shape).copy())
        off += 8 * n
    return out

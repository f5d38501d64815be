"""A tiny dense classifier with hand-written backpropagation, plus the
synthetic two-class EEG-like dataset it is trained on.

Inputs are ``channels x length`` signals, flattened before the first
layer. Batches carry a leading sample axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceFailure, ShapeMismatch


@dataclass
class Dense:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ShapeMismatch("weights must be (out, in) and bias (out,)")
        if self.activation not in ("relu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


class TinyNet:
    """Stack of dense layers followed by softmax cross-entropy."""

    def __init__(self, layers: list[Dense], input_shape: tuple[int, ...] | None = None):
        if not layers:
            raise ValueError("need at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise ShapeMismatch(
                    f"layer output {a.weights.shape[0]} does not feed input {b.weights.shape[1]}")
        for layer in layers:
            if not (np.all(np.isfinite(layer.weights)) and np.all(np.isfinite(layer.bias))):
                raise ValueError("parameters must be finite")
        self.layers = layers
        n_in = layers[0].weights.shape[1]
        self.input_shape = tuple(input_shape) if input_shape is not None else (n_in,)
        if int(np.prod(self.input_shape)) != n_in:
            raise ShapeMismatch(f"input shape {self.input_shape} does not flatten to {n_in}")

    @classmethod
    def init(cls, input_shape: tuple[int, ...], hidden: tuple[int, ...], n_classes: int,
             rng: np.random.Generator) -> TinyNet:
        sizes = [int(np.prod(input_shape)), *hidden, n_classes]
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
            last = i == len(sizes) - 2
            w = rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in))
            layers.append(Dense(w, np.zeros(n_out), "identity" if last else "relu"))
        return cls(layers, input_shape)

    @property
    def n_classes(self) -> int:
        return self.layers[-1].weights.shape[0]

    def copy(self) -> TinyNet:
        return TinyNet([Dense(l.weights.copy(), l.bias.copy(), l.activation) for l in self.layers],
                       self.input_shape)

    def _flatten(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        k = len(self.input_shape)
        if x.shape == self.input_shape:
            return x.reshape(1, -1), True
        if x.ndim == k + 1 and x.shape[1:] == self.input_shape:
            return x.reshape(x.shape[0], -1), False
        raise ShapeMismatch(f"expected {self.input_shape} or (N, *{self.input_shape}), got {x.shape}")

    def _labels(self, y, n: int) -> np.ndarray:
        y = np.atleast_1d(np.asarray(y))
        if y.shape != (n,) or not np.issubdtype(y.dtype, np.integer):
            raise ShapeMismatch(f"expected {n} integer labels, got {y.shape}")
        if y.min() < 0 or y.max() >= self.n_classes:
            raise ValueError("label out of range")
        return y

    def _forward(self, a: np.ndarray):
        cache = []
        for layer in self.layers:
            z = a @ layer.weights.T + layer.bias
            cache.append((a, z))
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        return a, cache

    def forward(self, x) -> np.ndarray:
        flat, single = self._flatten(x)
        logits, _ = self._forward(flat)
        return logits[0] if single else logits

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.forward(x), axis=-1)

    def accuracy(self, x, y) -> float:
        flat, _ = self._flatten(x)
        y = self._labels(y, flat.shape[0])
        return float(np.mean(np.argmax(self._forward(flat)[0], axis=1) == y))

    @staticmethod
    def _log_softmax(logits):
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))

    def loss(self, x, y) -> float:
        """Mean cross-entropy over the batch."""
        flat, _ = self._flatten(x)
        y = self._labels(y, flat.shape[0])
        logp = self._log_softmax(self._forward(flat)[0])
        return float(-logp[np.arange(len(y)), y].mean())

    def _backward(self, x, y):
        flat, single = self._flatten(x)
        y = self._labels(y, flat.shape[0])
        logits, cache = self._forward(flat)
        n = flat.shape[0]
        dz = np.exp(self._log_softmax(logits))
        dz[np.arange(n), y] -= 1.0
        dz /= n
        grads = []
        for i in range(len(self.layers) - 1, -1, -1):
            a_prev, _ = cache[i]
            layer = self.layers[i]
            grads.append((dz.T @ a_prev, dz.sum(axis=0)))
            da = dz @ layer.weights
            if i > 0 and self.layers[i - 1].activation == "relu":
                da = da * (cache[i - 1][1] > 0)
            dz = da
        grads.reverse()
        return dz, grads, single

    def input_gradient(self, x, y) -> np.ndarray:
        """Gradient of :meth:`loss` with respect to the input signal(s)."""
        dx, _, single = self._backward(x, y)
        shape = self.input_shape if single else (dx.shape[0], *self.input_shape)
        return dx.reshape(shape)

    def param_gradients(self, x, y) -> list[tuple[np.ndarray, np.ndarray]]:
        return self._backward(x, y)[1]


def train(net: TinyNet, x, y, *, epochs: int = 40, lr: float = 0.05, momentum: float = 0.9,
          batch_size: int = 32, rng: np.random.Generator | None = None) -> TinyNet:
    """Mini-batch gradient descent with momentum, in place."""
    rng = rng if rng is not None else np.random.default_rng(0)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    velocity = [(np.zeros_like(l.weights), np.zeros_like(l.bias)) for l in net.layers]
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            grads = net.param_gradients(x[idx], y[idx])
            for k, (layer, (gw, gb)) in enumerate(zip(net.layers, grads)):
                vw, vb = velocity[k]
                vw *= momentum
                vw -= lr * gw
                vb *= momentum
                vb -= lr * gb
                layer.weights += vw
                layer.bias += vb
    return net


@dataclass
class ToyDataset:
    x_train: np.ndarray
    y_train: np.ndarray
    x_test: np.ndarray
    y_test: np.ndarray
    freq: float

    def to_csv(self, split: str = "test") -> str:
        """One row per sample: label, then the flattened channels."""
        x, y = (self.x_test, self.y_test) if split == "test" else (self.x_train, self.y_train)
        flat = x.reshape(len(x), -1)
        head = "label," + ",".join(f"x{i}" for i in range(flat.shape[1]))
        rows = [f"{label}," + ",".join(f"{v:.6f}" for v in row) for label, row in zip(y, flat)]
        return "\n".join([head, *rows]) + "\n"


CLASS_FREQS = (3.0, 5.0)  # Hz; half-window shifts flip their phase


def make_toy_dataset(seed: int, n_samples: int, *, channels: int = 4, length: int = 64,
                     freq: float = 64.0, amplitude: float = 0.5, noise: float = 0.5,
                     test_fraction: float = 0.25) -> ToyDataset:
    """Phase-locked class-dependent sinusoids in Gaussian noise.

    The first ``test_fraction`` of the samples is held out for testing.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length) / freq
    gains = np.linspace(1.0, 0.6, channels)[:, None]
    phases = np.linspace(0.0, np.pi / 2, channels)[:, None]
    y = np.arange(n_samples) % 2
    rng.shuffle(y)
    f = np.asarray(CLASS_FREQS)[y][:, None, None]
    jitter = rng.normal(0.0, 0.2, size=(n_samples, 1, 1))
    amp = rng.uniform(0.8, 1.2, size=(n_samples, 1, 1))
    x = amplitude * amp * gains * np.sin(2 * np.pi * f * t + phases + jitter)
    x += rng.normal(0.0, noise, size=x.shape)
    n_test = max(1, int(round(n_samples * test_fraction)))
    return ToyDataset(x[n_test:], y[n_test:], x[:n_test], y[:n_test], freq)


def train_toy(seed: int, n_samples: int = 400, *, hidden: int = 32, epochs: int = 40,
              min_accuracy: float = 0.90) -> tuple[TinyNet, ToyDataset]:
    if n_samples < 100:
        raise ValueError("need at least 100 samples")
    data = make_toy_dataset(seed, n_samples)
    rng = np.random.default_rng(seed + 1)
    net = TinyNet.init(data.x_train.shape[1:], (hidden,), 2, rng)
    train(net, data.x_train, data.y_train, epochs=epochs, rng=rng)
    acc = net.accuracy(data.x_test, data.y_test)
    if acc < min_accuracy:
        raise ConvergenceFailure(f"held-out accuracy {acc:.3f} below {min_accuracy:.2f}")
    return net, data

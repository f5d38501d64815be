"""Feature-squeezing filters and Gaussian-noise augmentation.

All filters act along the last (time) axis and accept a single signal, a
batch, or a :class:`Signal`. Near the edges the window is truncated to the
samples that exist; nothing is padded.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .attacks import AttackSpec, delay_attack, rewrap, unwrap
from .errors import BadOrder, BadWindow, InvalidParams, ShapeMismatch
from .nn import TinyNet


def _check_window(window, length: int) -> int:
    if isinstance(window, bool) or not isinstance(window, (int, np.integer)):
        raise BadWindow(f"window must be an integer, got {window!r}")
    window = int(window)
    if window < 1 or window % 2 == 0:
        raise BadWindow(f"window must be odd and positive, got {window}")
    if window > length:
        raise BadWindow(f"window {window} exceeds signal length {length}")
    return window


def _bounds(i: int, half: int, length: int) -> tuple[int, int]:
    return max(0, i - half), min(length, i + half + 1)


def _sliding(data: np.ndarray, window: int, stat) -> np.ndarray:
    length = data.shape[-1]
    half = window // 2
    out = np.empty_like(data)
    # interior in one vectorized pass, edges one by one
    if length >= window:
        view = np.lib.stride_tricks.sliding_window_view(data, window, axis=-1)
        out[..., half:length - half] = stat(view, axis=-1)
    for i in list(range(min(half, length))) + list(range(max(half, length - half), length)):
        lo, hi = _bounds(i, half, length)
        out[..., i] = stat(data[..., lo:hi], axis=-1)
    return out


def _bounded_mean(a, axis):
    # rounding can push a mean outside [min, max]; pinning it keeps constants exact
    return np.clip(np.mean(a, axis=axis), np.min(a, axis=axis), np.max(a, axis=axis))


def moving_average(x, window: int):
    data, like = unwrap(x)
    window = _check_window(window, data.shape[-1])
    return rewrap(_sliding(data, window, _bounded_mean), like)


def median_filter(x, window: int):
    data, like = unwrap(x)
    window = _check_window(window, data.shape[-1])
    return rewrap(_sliding(data, window, np.median), like)


@lru_cache(maxsize=512)
def _savgol_weights(left: int, right: int, order: int) -> np.ndarray:
    """Weights giving the fitted value at offset 0 for samples at offsets
    ``-left .. right``; the degree is capped so the fit stays determined."""
    offsets = np.arange(-left, right + 1, dtype=np.float64)
    degree = min(order, len(offsets) - 1)
    scale = max(left, right, 1)
    vander = np.vander(offsets / scale, degree + 1, increasing=True)
    # the fitted value at 0 is the constant coefficient: row 0 of the pseudo-inverse
    pinv, *_ = np.linalg.lstsq(vander, np.eye(len(offsets)), rcond=None)
    weights = pinv[0]
    weights.setflags(write=False)
    return weights


def savgol_filter(x, window: int, order: int):
    """Local least-squares polynomial smoothing."""
    data, like = unwrap(x)
    length = data.shape[-1]
    window = _check_window(window, length)
    if isinstance(order, bool) or int(order) != order or order < 0:
        raise BadOrder(f"order must be a non-negative integer, got {order!r}")
    if order >= window:
        raise BadOrder(f"order {order} must be below window {window}")
    half = window // 2
    out = np.empty_like(data)
    for i in range(length):
        lo, hi = _bounds(i, half, length)
        out[..., i] = data[..., lo:hi] @ _savgol_weights(i - lo, hi - 1 - i, int(order))
    return rewrap(out, like)


def gaussian_augment(x, sigma, seed: int = 0):
    """Add independent N(0, sigma_k^2) noise at every time step k.

    ``sigma`` may be a scalar, a per-step vector matching the length, or an
    array matching the full shape.
    """
    data, like = unwrap(x)
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim == 1 and sigma.shape[0] != data.shape[-1]:
        raise ShapeMismatch(f"sigma has {sigma.shape[0]} steps, signal has {data.shape[-1]}")
    try:
        sigma = np.broadcast_to(sigma, data.shape)
    except ValueError:
        raise ShapeMismatch(f"sigma shape {sigma.shape} does not fit signal {data.shape}") from None
    if np.any(sigma < 0) or not np.all(np.isfinite(sigma)):
        raise InvalidParams("sigma entries must be finite and non-negative")
    noise = np.random.default_rng(seed).standard_normal(data.shape)
    return rewrap(data + sigma * noise, like)


@dataclass(frozen=True)
class AugmentedData:
    x: np.ndarray
    y: np.ndarray
    augmented: np.ndarray  # bool mask over samples


def augment_dataset(x, y, sigma, ratio: float = 0.5, seed: int = 0,
                    mode: str = "replace") -> AugmentedData:
    """Noise a ``ratio`` fraction of the samples.

    ``replace`` noises the chosen samples in place. ``double`` keeps every
    original and appends one copy of each, noising the chosen copies.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if not 0 <= ratio <= 1:
        raise InvalidParams(f"ratio must be in [0, 1], got {ratio}")
    if mode not in ("replace", "double"):
        raise InvalidParams(f"unknown mode {mode!r}")
    n = len(x)
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(n, size=int(round(ratio * n)), replace=False))
    mask = np.zeros(n, dtype=bool)
    mask[chosen] = True
    out = x.copy()
    if len(chosen):
        out[chosen] = gaussian_augment(x[chosen], sigma, int(rng.integers(2**63)))
    if mode == "replace":
        return AugmentedData(out, y.copy(), mask)
    return AugmentedData(np.concatenate([x, out]), np.concatenate([y, y]),
                         np.concatenate([np.zeros(n, dtype=bool), mask]))


DEFENSE_KINDS = ("identity", "mavg", "median", "savgol", "noise", "delay")


@dataclass(frozen=True)
class DefenseSpec:
    kind: str
    window: int = 5
    order: int = 2
    sigma: float = 0.1
    tau: int = 0

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ValueError(f"unknown defense {self.kind!r}")

    def apply(self, x, seed: int = 0):
        if self.kind == "identity":
            return x
        if self.kind == "mavg":
            return moving_average(x, self.window)
        if self.kind == "median":
            return median_filter(x, self.window)
        if self.kind == "savgol":
            return savgol_filter(x, self.window, self.order)
        if self.kind == "noise":
            return gaussian_augment(x, self.sigma, seed)
        return delay_attack(x, self.tau)


@dataclass(frozen=True)
class DefenseResult:
    attacked: float
    defended: float


def evaluate_defense(net: TinyNet, x, y, attack: AttackSpec | None, defense, seed: int = 0) -> DefenseResult:
    """Accuracy on attacked inputs, with and without the defense in front.

    ``attack=None`` evaluates clean inputs. ``defense`` is a
    :class:`DefenseSpec` or any callable mapping a batch to a batch.
    """
    x = np.asarray(x, dtype=np.float64)
    adv = attack.apply(net, x, y, seed) if attack is not None else x
    squeeze = defense.apply if isinstance(defense, DefenseSpec) else defense
    return DefenseResult(net.accuracy(adv, y), net.accuracy(squeeze(adv), y))

"""Signal container and the three adversarial procedures.

Attacks work on a single ``channels x length`` array, on a batch with a
leading sample axis, or on a :class:`Signal`. The return type matches the
input type.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParams, ShapeMismatch, TauOutOfRange
from .nn import TinyNet


@dataclass(frozen=True)
class Signal:
    data: np.ndarray
    freq: float = 1.0

    def __post_init__(self):
        data = np.array(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[1] < 1:
            raise ShapeMismatch(f"signal must be channels x length, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("signal values must be finite")
        if not self.freq > 0:
            raise ValueError("sampling frequency must be positive")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Signal):
            return NotImplemented
        return self.freq == other.freq and np.array_equal(self.data, other.data)

    __hash__ = None


def unwrap(x) -> tuple[np.ndarray, Signal | None]:
    if isinstance(x, Signal):
        return x.data, x
    return np.asarray(x, dtype=np.float64), None


def rewrap(data: np.ndarray, like: Signal | None):
    return replace(like, data=data) if like is not None else data


@dataclass(frozen=True)
class AttackParams:
    epsilon: float
    epsilon1: float
    alpha: float
    n: int

    def __post_init__(self):
        if not (0 <= self.epsilon1 < self.epsilon):
            raise InvalidParams(f"need 0 <= epsilon1 < epsilon, got {self.epsilon1}, {self.epsilon}")
        if not self.alpha > 0:
            raise InvalidParams(f"alpha must be positive, got {self.alpha}")
        if self.n < 1:
            raise InvalidParams(f"n must be at least 1, got {self.n}")


def fgsm(net: TinyNet, x, y, epsilon: float):
    """One signed-gradient step of size ``epsilon``."""
    if epsilon < 0:
        raise InvalidParams("epsilon must be non-negative")
    data, like = unwrap(x)
    grad = net.input_gradient(data, y)
    return rewrap(data + epsilon * np.sign(grad), like)


def pgd(net: TinyNet, x, y, params: AttackParams, seed: int = 0):
    """Random signed start of radius ``epsilon1``, then ``n`` projected steps."""
    if not isinstance(params, AttackParams):
        raise InvalidParams("params must be AttackParams")
    data, like = unwrap(x)
    lo, hi = data - params.epsilon, data + params.epsilon
    rng = np.random.default_rng(seed)
    adv = data + params.epsilon1 * np.sign(rng.standard_normal(data.shape))
    for _ in range(params.n):
        step = params.alpha * np.sign(net.input_gradient(adv, y))
        adv = np.clip(adv + step, lo, hi)
    return rewrap(adv, like)


def delay_attack(x, tau: int):
    """Overwrite the first ``tau`` samples with the channel mean and shift
    the rest right by ``tau``."""
    data, like = unwrap(x)
    length = data.shape[-1]
    if isinstance(tau, bool) or int(tau) != tau or not 0 <= tau <= length:
        raise TauOutOfRange(f"tau must be an integer in [0, {length}], got {tau}")
    tau = int(tau)
    out = np.roll(data, tau, axis=-1)
    if tau:
        out[..., :tau] = data.mean(axis=-1, keepdims=True)
    return rewrap(out, like)


ATTACK_KINDS = ("fgsm", "pgd", "delay")
GRID_PARAM = {"fgsm": "epsilon", "pgd": "epsilon", "delay": "tau"}


@dataclass(frozen=True)
class AttackSpec:
    """An attack plus its fixed settings; one field is swept by a grid.

    For PGD, ``alpha`` defaults to ``2.5 * epsilon / n`` and ``epsilon1``
    to ``epsilon / 2``.
    """

    kind: str
    epsilon: float = 0.1
    tau: int = 0
    n: int = 40
    alpha: float | None = None
    epsilon1: float | None = None
    sweep: str | None = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        sweep = self.sweep or GRID_PARAM[self.kind]
        allowed = {"fgsm": {"epsilon"}, "pgd": {"epsilon", "n"}, "delay": {"tau"}}[self.kind]
        if sweep not in allowed:
            raise ValueError(f"{self.kind} cannot sweep {sweep!r}")
        object.__setattr__(self, "sweep", sweep)

    def at(self, value) -> AttackSpec:
        if self.sweep in ("n", "tau"):
            value = int(value)
        return replace(self, **{self.sweep: value})

    def apply(self, net: TinyNet, x, y, seed: int = 0):
        if self.kind == "fgsm":
            return fgsm(net, x, y, self.epsilon)
        if self.kind == "delay":
            return delay_attack(x, self.tau)
        if self.epsilon == 0:
            data, like = unwrap(x)
            return rewrap(data.copy(), like)
        alpha = self.alpha if self.alpha is not None else 2.5 * self.epsilon / self.n
        eps1 = self.epsilon1 if self.epsilon1 is not None else self.epsilon / 2
        return pgd(net, x, y, AttackParams(self.epsilon, eps1, alpha, self.n), seed)


@dataclass(frozen=True)
class AccuracyTable:
    param: str
    rows: tuple[tuple[float, float], ...]

    def to_csv(self) -> str:
        lines = [f"{self.param},accuracy"]
        lines += [f"{v:.6f},{acc:.6f}" for v, acc in self.rows]
        return "\n".join(lines) + "\n"

    def accuracy(self, value) -> float:
        for v, acc in self.rows:
            if v == value:
                return acc
        raise KeyError(value)


def evaluate_under_attack(net: TinyNet, x, y, spec: AttackSpec, grid, seed: int = 0) -> AccuracyTable:
    """Test-set accuracy at every grid value of ``spec.sweep``."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) == 0:
        raise ValueError("dataset is empty")
    rows = []
    for value in grid:
        adv = spec.at(value).apply(net, x, y, seed)
        rows.append((float(value), net.accuracy(adv, y)))
    return AccuracyTable(spec.sweep, tuple(rows))

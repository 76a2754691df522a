"""Dense layers with hand-written backward passes, and Adam.

Every array is float64. Layers accept any number of leading batch axes;
the feature axis is last. Backward functions accumulate into ``Param.grad``
and return the gradient with respect to the layer input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Param",
    "Linear",
    "LstmCellParams",
    "AdamConfig",
    "Adam",
    "ShapeError",
    "TrainingError",
    "InfeasibleError",
    "uniform_init",
    "linear_forward",
    "linear_backward",
    "lstm_step",
    "lstm_step_backward",
    "sigmoid",
    "softmax",
    "log_softmax",
    "adam_step",
    "clip_global_norm",
    "global_norm",
]


class ShapeError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class InfeasibleError(ValueError):
    pass


class Param:
    """A named parameter array with its gradient and Adam moments."""

    __slots__ = ("name", "values", "grad", "adam_m", "adam_v")

    def __init__(self, name: str, values):
        self.name = name
        self.values = np.array(values, dtype=np.float64)
        self.grad = np.zeros_like(self.values)
        self.adam_m = np.zeros_like(self.values)
        self.adam_v = np.zeros_like(self.values)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.shape})"


def uniform_init(rng, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class Linear:
    W: Param  # (out, in)
    b: Param  # (out,)

    @classmethod
    def init(cls, name: str, n_in: int, n_out: int, rng) -> "Linear":
        return cls(Param(f"{name}.W", uniform_init(rng, (n_out, n_in), n_in)),
                   Param(f"{name}.b", uniform_init(rng, (n_out,), n_in)))

    def params(self) -> list[Param]:
        return [self.W, self.b]


def linear_forward(layer: Linear, x: np.ndarray) -> np.ndarray:
    W = layer.W.values
    if x.shape[-1] != W.shape[1] or layer.b.shape != (W.shape[0],):
        raise ShapeError(f"linear: W {W.shape}, b {layer.b.shape}, input {x.shape}")
    return x @ W.T + layer.b.values


def linear_backward(layer: Linear, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    layer.W.grad += dy2.T @ x2
    layer.b.grad += dy2.sum(axis=0)
    return dy @ layer.W.values


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * z) + 1.0)


@dataclass
class LstmCellParams:
    """Gate blocks stacked as (input, forget, cell, output)."""

    Wx: Param  # (4H, D)
    Wh: Param  # (4H, H)
    b: Param   # (4H,)

    @property
    def hidden(self) -> int:
        return self.Wh.shape[1]

    @property
    def input_dim(self) -> int:
        return self.Wx.shape[1]

    @classmethod
    def init(cls, name: str, input_dim: int, hidden: int, rng,
             forget_bias: float = 1.0) -> "LstmCellParams":
        H = hidden
        b = uniform_init(rng, (4 * H,), H)
        b[H:2 * H] = forget_bias
        return cls(Param(f"{name}.Wx", uniform_init(rng, (4 * H, input_dim), input_dim)),
                   Param(f"{name}.Wh", uniform_init(rng, (4 * H, H), H)),
                   Param(f"{name}.b", b))

    def params(self) -> list[Param]:
        return [self.Wx, self.Wh, self.b]


def lstm_step(p: LstmCellParams, x: np.ndarray, state):
    """One LSTM step. Returns ``((h, c), cache)``; the cache feeds
    :func:`lstm_step_backward`."""
    h_prev, c_prev = state
    H = p.hidden
    if (x.shape[-1] != p.input_dim or h_prev.shape[-1] != H
            or c_prev.shape[-1] != H):
        raise ShapeError(f"lstm: input {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
                         f"vs D={p.input_dim}, H={H}")
    z = x @ p.Wx.values.T + h_prev @ p.Wh.values.T + p.b.values
    i = sigmoid(z[..., :H])
    f = sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = sigmoid(z[..., 3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return (h, c), (x, h_prev, c_prev, i, f, g, o, tc)


def lstm_step_backward(p: LstmCellParams, cache, dh: np.ndarray, dc: np.ndarray):
    """Returns ``(dx, dh_prev, dc_prev)``."""
    x, h_prev, c_prev, i, f, g, o, tc = cache
    do = dh * tc
    dc = dc + dh * o * (1.0 - tc * tc)
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        dc * i * (1.0 - g * g),
        do * o * (1.0 - o),
    ], axis=-1)
    dz2 = dz.reshape(-1, dz.shape[-1])
    p.Wx.grad += dz2.T @ x.reshape(-1, x.shape[-1])
    p.Wh.grad += dz2.T @ h_prev.reshape(-1, h_prev.shape[-1])
    p.b.grad += dz2.sum(axis=0)
    return dz @ p.Wx.values, dz @ p.Wh.values, dc * f


def softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Softmax over the last axis; entries where ``mask`` is True get
    probability exactly 0."""
    logits = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if np.any(mask.all(axis=-1)):
            raise InfeasibleError("no feasible city")
        logits = np.where(mask, -np.inf, logits)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if mask is not None:
        if np.any(np.asarray(mask).all(axis=-1)):
            raise InfeasibleError("no feasible city")
        logits = np.where(mask, -np.inf, logits)
    m = logits.max(axis=-1, keepdims=True)
    return logits - m - np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


@dataclass
class AdamConfig:
    lr0: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    decay_every: int = 5000
    decay_factor: float = 0.96
    clip_norm: float | None = 2.0

    def __post_init__(self):
        if not 0.0 < self.decay_factor <= 1.0:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_every < 1:
            raise ValueError("decay_every must be >= 1")

    def lr(self, step: int) -> float:
        return self.lr0 * self.decay_factor ** (step // self.decay_every)


def adam_step(param: Param, config: AdamConfig, step: int) -> Param:
    """Apply one Adam update for 0-based ``step`` and zero the gradient."""
    g = param.grad
    if not np.all(np.isfinite(g)):
        raise TrainingError(f"non-finite gradient in {param.name}")
    t = step + 1
    b1, b2 = config.beta1, config.beta2
    param.adam_m *= b1
    param.adam_m += (1.0 - b1) * g
    param.adam_v *= b2
    param.adam_v += (1.0 - b2) * g * g
    m_hat = param.adam_m / (1.0 - b1 ** t)
    v_hat = param.adam_v / (1.0 - b2 ** t)
    param.values -= config.lr(step) * m_hat / (np.sqrt(v_hat) + config.epsilon)
    if not np.all(np.isfinite(param.values)):
        raise TrainingError(f"non-finite values in {param.name} after update")
    param.zero_grad()
    return param


def global_norm(params) -> float:
    return math.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in params))


def clip_global_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their joint L2 norm is at most
    ``max_norm``. Returns the norm before clipping."""
    norm = global_norm(params)
    if math.isfinite(norm) and norm > max_norm:
        scale = max_norm / norm
        for p in params:
            p.grad *= scale
    return norm


class Adam:
    """Adam over a fixed list of parameters with a shared step counter."""

    def __init__(self, params, config: AdamConfig | None = None):
        self.params = list(params)
        self.config = config or AdamConfig()
        self.steps = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> float:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in {p.name}")
        norm = global_norm(self.params)
        if self.config.clip_norm is not None:
            clip_global_norm(self.params, self.config.clip_norm)
        for p in self.params:
            adam_step(p, self.config, self.steps)
        self.steps += 1
        return norm

"""Pointer network (actor) and critic, batched over instances.

Coordinates arrive as ``(n, 2)`` for one instance or ``(B, n, 2)`` for a
batch of equally sized instances. The actor embeds each city, runs an LSTM
encoder over the sequence, then decodes ``n`` steps with an LSTM whose
input is the embedding of the previously chosen city (a learned start
vector on the first step). Each step scores cities with additive
attention, ``v . tanh(W_ref e_i + W_q h)``, and masks visited ones.

The critic shares the embed/encode layout but has its own weights. It
refines the final encoder state with a few attention glimpses over the
encoder outputs and maps the result through a two-layer ReLU head to a
predicted tour length.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .kernel import (
    Linear,
    LstmCellParams,
    Param,
    linear_backward,
    linear_forward,
    log_softmax,
    lstm_step,
    lstm_step_backward,
    softmax,
    uniform_init,
)

__all__ = [
    "DecodeMode",
    "PtrNetModel",
    "CriticModel",
    "DecodeResult",
    "Rollout",
    "encode",
    "decode",
    "actor_rollout",
    "actor_backward",
    "critic_run",
    "critic_backward",
    "critic_forward",
]


class DecodeMode(enum.Enum):
    GREEDY = "greedy"
    SAMPLE = "sample"


@dataclass
class PtrNetModel:
    embed: Linear
    encoder: LstmCellParams
    decoder: LstmCellParams
    W_ref: Param
    W_q: Param
    v: Param
    start: Param
    logit_clip: float | None = None

    @classmethod
    def init(cls, rng, embed_dim: int = 128, hidden: int = 128,
             logit_clip: float | None = None) -> "PtrNetModel":
        E, H = embed_dim, hidden
        return cls(
            embed=Linear.init("actor.embed", 2, E, rng),
            encoder=LstmCellParams.init("actor.encoder", E, H, rng),
            decoder=LstmCellParams.init("actor.decoder", E, H, rng),
            W_ref=Param("actor.W_ref", uniform_init(rng, (H, H), H)),
            W_q=Param("actor.W_q", uniform_init(rng, (H, H), H)),
            v=Param("actor.v", uniform_init(rng, (H,), H)),
            start=Param("actor.start", uniform_init(rng, (E,), E)),
            logit_clip=logit_clip,
        )

    @property
    def embed_dim(self) -> int:
        return self.embed.W.shape[0]

    @property
    def hidden(self) -> int:
        return self.encoder.hidden

    def params(self) -> list[Param]:
        """Parameters in checkpoint order."""
        return [*self.embed.params(), *self.encoder.params(), *self.decoder.params(),
                self.W_ref, self.W_q, self.v, self.start]


@dataclass
class CriticModel:
    embed: Linear
    encoder: LstmCellParams
    W_ref: Param
    W_q: Param
    v: Param
    hidden_layer: Linear
    out: Linear
    process_rounds: int = 3

    @classmethod
    def init(cls, rng, embed_dim: int = 128, hidden: int = 128,
             process_rounds: int = 3) -> "CriticModel":
        E, H = embed_dim, hidden
        return cls(
            embed=Linear.init("critic.embed", 2, E, rng),
            encoder=LstmCellParams.init("critic.encoder", E, H, rng),
            W_ref=Param("critic.W_ref", uniform_init(rng, (H, H), H)),
            W_q=Param("critic.W_q", uniform_init(rng, (H, H), H)),
            v=Param("critic.v", uniform_init(rng, (H,), H)),
            hidden_layer=Linear.init("critic.mlp1", H, H, rng),
            out=Linear.init("critic.mlp2", H, 1, rng),
            process_rounds=process_rounds,
        )

    @property
    def embed_dim(self) -> int:
        return self.embed.W.shape[0]

    @property
    def hidden(self) -> int:
        return self.encoder.hidden

    def params(self) -> list[Param]:
        return [*self.embed.params(), *self.encoder.params(), self.W_ref, self.W_q,
                self.v, *self.hidden_layer.params(), *self.out.params()]


def _as_batch(coords) -> tuple[np.ndarray, bool]:
    coords = np.asarray(coords, dtype=np.float64)
    single = coords.ndim == 2
    if single:
        coords = coords[None]
    if coords.ndim != 3 or coords.shape[-1] != 2 or coords.shape[1] < 1:
        raise ValueError(f"coords must be (n, 2) or (B, n, 2) with n >= 1, got {coords.shape}")
    if not np.all(np.isfinite(coords)):
        raise ValueError("coordinates must be finite")
    return coords, single


def _run_encoder(embed: Linear, encoder: LstmCellParams, coords: np.ndarray):
    emb = linear_forward(embed, coords)
    B, n = coords.shape[:2]
    H = encoder.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    states = np.empty((B, n, H))
    caches = []
    for i in range(n):
        (h, c), cache = lstm_step(encoder, emb[:, i], (h, c))
        states[:, i] = h
        caches.append(cache)
    return emb, states, (h, c), caches


def _encoder_backward(encoder: LstmCellParams, caches, d_states, dh, dc):
    d_emb = np.empty(d_states.shape[:2] + (encoder.input_dim,))
    for i in reversed(range(len(caches))):
        dx, dh, dc = lstm_step_backward(encoder, caches[i], dh + d_states[:, i], dc)
        d_emb[:, i] = dx
    return d_emb


def encode(model: PtrNetModel, coords):
    """Encoder hidden states ``(n, H)`` and the final ``(h, c)``; batched
    input gives a leading batch axis on each."""
    batch, single = _as_batch(coords)
    _, states, (h, c), _ = _run_encoder(model.embed, model.encoder, batch)
    if single:
        return states[0], (h[0], c[0])
    return states, (h, c)


@dataclass
class DecodeResult:
    permutation: np.ndarray
    log_prob: float
    mode: DecodeMode


@dataclass
class Rollout:
    """Decoded tours of a batch plus everything backward needs."""

    tours: np.ndarray      # (B, n)
    log_probs: np.ndarray  # (B,)
    coords: np.ndarray
    step_probs: list = field(default_factory=list, repr=False)
    _cache: tuple | None = field(default=None, repr=False)


def _pick(p: np.ndarray, logits: np.ndarray, mode: DecodeMode, rng) -> np.ndarray:
    if mode is DecodeMode.GREEDY:
        return np.argmax(logits, axis=1)  # first maximum wins ties
    cdf = np.cumsum(p, axis=1)
    # target in (0, total]; the first cdf entry reaching it has p > 0
    target = (1.0 - rng.random(p.shape[0])) * cdf[:, -1]
    idx = (cdf < target[:, None]).sum(axis=1)
    return np.minimum(idx, p.shape[1] - 1)


def actor_rollout(model: PtrNetModel, coords, mode: DecodeMode = DecodeMode.GREEDY,
                  rng=None, actions: np.ndarray | None = None) -> Rollout:
    """Decode a full tour for every instance in the batch.

    When ``actions`` (``(B, n)``) is given the decoder is forced along
    those tours and only their log-probabilities are computed.
    """
    coords, _ = _as_batch(coords)
    if mode is DecodeMode.SAMPLE and rng is None and actions is None:
        raise ValueError("SAMPLE decoding needs an rng")
    B, n = coords.shape[:2]
    emb, enc, (h, c), enc_caches = _run_encoder(model.embed, model.encoder, coords)
    ref = enc @ model.W_ref.values.T
    W_q, v = model.W_q.values, model.v.values
    clip = model.logit_clip
    rows = np.arange(B)
    mask = np.zeros((B, n), dtype=bool)
    tours = np.empty((B, n), dtype=np.int64)
    log_probs = np.zeros(B)
    x = np.broadcast_to(model.start.values, (B, model.embed_dim))
    steps = []
    probs = []
    for t in range(n):
        (h, c), lcache = lstm_step(model.decoder, x, (h, c))
        a = np.tanh(ref + (h @ W_q.T)[:, None, :])
        u = a @ v
        scores = clip * np.tanh(u) if clip else u
        logits = np.where(mask, -np.inf, scores)
        p = softmax(logits)
        idx = actions[:, t].astype(np.int64) if actions is not None else _pick(p, logits, mode, rng)
        if np.any(mask[rows, idx]):
            raise ValueError("forced action revisits a city")
        log_probs += log_softmax(logits)[rows, idx]
        steps.append((lcache, h, a, p, idx, u))
        probs.append(p)
        mask[rows, idx] = True
        tours[:, t] = idx
        x = emb[rows, idx]
    return Rollout(tours, log_probs, coords, probs, (emb, enc, enc_caches, steps))


def actor_backward(model: PtrNetModel, rollout: Rollout, d_log_probs: np.ndarray) -> None:
    """Accumulate ``d(sum_b w_b log p_b)/d(theta)`` into the actor grads,
    where ``w = d_log_probs``."""
    emb, enc, enc_caches, steps = rollout._cache
    coords = rollout.coords
    B, n = coords.shape[:2]
    rows = np.arange(B)
    W_q, v = model.W_q.values, model.v.values
    clip = model.logit_clip
    g = np.asarray(d_log_probs, dtype=np.float64).reshape(B)
    d_emb = np.zeros_like(emb)
    d_ref = np.zeros_like(enc)
    dh = np.zeros((B, model.hidden))
    dc = np.zeros((B, model.hidden))
    for t in reversed(range(n)):
        lcache, h, a, p, idx, u = steps[t]
        du = -p * g[:, None]
        du[rows, idx] += g
        if clip:
            tu = np.tanh(u)
            du *= clip * (1.0 - tu * tu)
        model.v.grad += np.einsum("bn,bnh->h", du, a)
        dz = du[:, :, None] * v * (1.0 - a * a)
        d_ref += dz
        dq = dz.sum(axis=1)
        model.W_q.grad += dq.T @ h
        dh = dh + dq @ W_q
        dx, dh, dc = lstm_step_backward(model.decoder, lcache, dh, dc)
        if t == 0:
            model.start.grad += dx.sum(axis=0)
        else:
            d_emb[rows, rollout.tours[:, t - 1]] += dx
    H = model.hidden
    model.W_ref.grad += d_ref.reshape(-1, H).T @ enc.reshape(-1, H)
    d_enc = d_ref @ model.W_ref.values
    d_emb += _encoder_backward(model.encoder, enc_caches, d_enc, dh, dc)
    linear_backward(model.embed, coords, d_emb)


def decode(model: PtrNetModel, coords, mode: DecodeMode = DecodeMode.GREEDY,
           rng=None) -> DecodeResult:
    """Encode ``coords`` (``(n, 2)``) and decode one tour."""
    roll = actor_rollout(model, np.asarray(coords, dtype=np.float64)[None], mode, rng)
    return DecodeResult(roll.tours[0], float(roll.log_probs[0]), mode)


def critic_run(model: CriticModel, coords):
    """Predicted tour lengths ``(B,)`` and a cache for :func:`critic_backward`."""
    coords, _ = _as_batch(coords)
    emb, enc, (h, _), enc_caches = _run_encoder(model.embed, model.encoder, coords)
    ref = enc @ model.W_ref.values.T
    W_q, v = model.W_q.values, model.v.values
    q = h
    rounds = []
    for _ in range(model.process_rounds):
        a = np.tanh(ref + (q @ W_q.T)[:, None, :])
        p = softmax(a @ v)
        rounds.append((q, a, p))
        q = np.einsum("bn,bnh->bh", p, ref)
    z = linear_forward(model.hidden_layer, q)
    r = np.maximum(z, 0.0)
    out = linear_forward(model.out, r)[:, 0]
    return out, (coords, enc, enc_caches, ref, rounds, q, z, r)


def critic_backward(model: CriticModel, cache, d_out: np.ndarray) -> None:
    coords, enc, enc_caches, ref, rounds, q, z, r = cache
    B = coords.shape[0]
    H = model.hidden
    W_q, v = model.W_q.values, model.v.values
    dr = linear_backward(model.out, r, np.asarray(d_out, dtype=np.float64).reshape(B, 1))
    dq = linear_backward(model.hidden_layer, q, dr * (z > 0))
    d_ref = np.zeros_like(ref)
    for q_prev, a, p in reversed(rounds):
        d_ref += p[:, :, None] * dq[:, None, :]
        dp = np.einsum("bnh,bh->bn", ref, dq)
        du = p * (dp - (p * dp).sum(axis=1, keepdims=True))
        model.v.grad += np.einsum("bn,bnh->h", du, a)
        dzz = du[:, :, None] * v * (1.0 - a * a)
        d_ref += dzz
        dqq = dzz.sum(axis=1)
        model.W_q.grad += dqq.T @ q_prev
        dq = dqq @ W_q
    model.W_ref.grad += d_ref.reshape(-1, H).T @ enc.reshape(-1, H)
    d_enc = d_ref @ model.W_ref.values
    d_emb = _encoder_backward(model.encoder, enc_caches, d_enc, dq, np.zeros_like(dq))
    linear_backward(model.embed, coords, d_emb)


def critic_forward(model: CriticModel, coords):
    """Predicted tour length: a float for ``(n, 2)`` input, an array for a
    batch."""
    batch, single = _as_batch(coords)
    out, _ = critic_run(model, batch)
    return float(out[0]) if single else out

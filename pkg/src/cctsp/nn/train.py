"""Actor-critic REINFORCE on random uniform instances, plus checkpoints.

Checkpoint layout (all integers little-endian)::

    b"CCPN1\\n"
    one line of JSON: embed_dim, hidden, process_rounds, step, config,
                      blocks = [[name, shape], ...]
    the raw float64 ('<f8') values of each block, in ``blocks`` order

Block order is ``PtrNetModel.params()`` followed by ``CriticModel.params()``.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..core import RngStream
from .kernel import Adam, AdamConfig, TrainingError
from .pointer import (
    CriticModel,
    DecodeMode,
    PtrNetModel,
    actor_backward,
    actor_rollout,
    critic_backward,
    critic_run,
)

__all__ = [
    "TrainConfig",
    "TrainLog",
    "EvalRecord",
    "StepStats",
    "CheckpointError",
    "PRESETS",
    "batch_tour_lengths",
    "reinforce_gradients",
    "reinforce_step",
    "critic_step",
    "evaluate",
    "init_models",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)

MAGIC = b"CCPN1\n"


@dataclass
class TrainConfig:
    batch_size: int = 64
    n_cities: int = 20
    max_steps: int = 5000
    embed_dim: int = 128
    hidden: int = 128
    process_rounds: int = 3
    adam_actor: AdamConfig = field(default_factory=AdamConfig)
    adam_critic: AdamConfig = field(default_factory=AdamConfig)
    eval_every: int = 100
    eval_set_size: int = 256
    seed: int = 0
    normalize_advantage: bool = False
    logit_clip: float | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.n_cities < 1 or self.max_steps < 0:
            raise ValueError("batch_size and n_cities must be >= 1, max_steps >= 0")
        if self.eval_every < 1 or self.eval_set_size < 1:
            raise ValueError("eval_every and eval_set_size must be >= 1")
        for name in ("adam_actor", "adam_critic"):
            value = getattr(self, name)
            if isinstance(value, dict):
                setattr(self, name, AdamConfig(**value))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        return cls(**data)


PRESETS = {
    "full": dict(batch_size=64, n_cities=20, max_steps=20000, embed_dim=128, hidden=128),
    "desk": dict(batch_size=64, n_cities=20, max_steps=5000, embed_dim=128, hidden=128),
    "reduced": dict(batch_size=64, n_cities=20, max_steps=2000, embed_dim=64, hidden=64),
}


@dataclass(frozen=True)
class EvalRecord:
    step: int
    sample_mean: float
    greedy_mean: float
    critic_loss: float


@dataclass
class TrainLog:
    records: list[EvalRecord] = field(default_factory=list)

    def append(self, record: EvalRecord) -> None:
        if self.records and record.step <= self.records[-1].step:
            raise ValueError("log steps must increase")
        self.records.append(record)

    def to_csv(self) -> str:
        rows = ["step,sample_mean,greedy_mean,critic_loss"]
        rows += [f"{r.step},{r.sample_mean!r},{r.greedy_mean!r},{r.critic_loss!r}"
                 for r in self.records]
        return "\n".join(rows) + "\n"


@dataclass
class StepStats:
    mean_length: float
    mean_baseline: float
    critic_loss: float
    actor_grad_norm: float
    critic_grad_norm: float


def batch_tour_lengths(coords: np.ndarray, tours: np.ndarray) -> np.ndarray:
    """Closed lengths of ``tours[b]`` over ``coords[b]``."""
    pts = np.take_along_axis(coords, tours[..., None], axis=1)
    diff = np.roll(pts, -1, axis=1) - pts
    return np.hypot(diff[..., 0], diff[..., 1]).sum(axis=1)


def _param_norms(params) -> str:
    return ", ".join(f"{p.name}={np.linalg.norm(p.values):.4g}" for p in params)


def reinforce_gradients(actor: PtrNetModel, critic: CriticModel, batch: np.ndarray,
                        rng, *, normalize_advantage: bool = False,
                        baseline: np.ndarray | None = None,
                        actions: np.ndarray | None = None):
    """Sample tours and accumulate both losses' gradients into the
    (already zeroed) parameter grads.

    Actor loss ``mean((L - b) * log p(tour))`` with ``b`` held constant;
    critic loss ``mean((b - L)**2)``. ``baseline`` replaces the critic's
    prediction inside the advantage only; ``actions`` forces the tours.
    Returns ``(tours, lengths, predictions, critic_loss)``.
    """
    B = batch.shape[0]
    roll = actor_rollout(actor, batch, DecodeMode.SAMPLE, rng, actions=actions)
    lengths = batch_tour_lengths(batch, roll.tours)
    pred, ccache = critic_run(critic, batch)
    critic_loss = float(np.mean((pred - lengths) ** 2))
    if not np.isfinite(critic_loss) or not np.all(np.isfinite(roll.log_probs)):
        raise TrainingError("non-finite loss; parameter norms: "
                            + _param_norms(actor.params() + critic.params()))
    b = pred if baseline is None else np.asarray(baseline, dtype=np.float64)
    adv = lengths - b
    if normalize_advantage and B > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    actor_backward(actor, roll, adv / B)
    critic_backward(critic, ccache, 2.0 * (pred - lengths) / B)
    return roll.tours, lengths, pred, critic_loss


def reinforce_step(actor: PtrNetModel, critic: CriticModel, batch: np.ndarray, rng,
                   actor_opt: Adam, critic_opt: Adam, *,
                   normalize_advantage: bool = False,
                   baseline: np.ndarray | None = None) -> StepStats:
    """One actor-critic update on ``batch`` (``(B, n, 2)``)."""
    actor_opt.zero_grad()
    critic_opt.zero_grad()
    _, lengths, pred, critic_loss = reinforce_gradients(
        actor, critic, batch, rng, normalize_advantage=normalize_advantage,
        baseline=baseline)
    a_norm = actor_opt.step()
    c_norm = critic_opt.step()
    return StepStats(float(lengths.mean()), float(pred.mean()), critic_loss, a_norm, c_norm)


def critic_step(critic: CriticModel, batch: np.ndarray, lengths: np.ndarray,
                critic_opt: Adam) -> float:
    """Regress the critic onto fixed ``lengths``; returns the loss before
    the update."""
    pred, cache = critic_run(critic, batch)
    loss = float(np.mean((pred - lengths) ** 2))
    critic_opt.zero_grad()
    critic_backward(critic, cache, 2.0 * (pred - lengths) / batch.shape[0])
    critic_opt.step()
    return loss


def evaluate(actor: PtrNetModel, critic: CriticModel, eval_set: np.ndarray, rng,
             chunk: int = 64) -> tuple[float, float, float]:
    """``(sample_mean, greedy_mean, critic_loss)`` over ``eval_set``."""
    sampled, greedy, sq = [], [], []
    for start in range(0, eval_set.shape[0], chunk):
        part = eval_set[start:start + chunk]
        s = batch_tour_lengths(part, actor_rollout(actor, part, DecodeMode.SAMPLE, rng).tours)
        g = batch_tour_lengths(part, actor_rollout(actor, part, DecodeMode.GREEDY).tours)
        pred, _ = critic_run(critic, part)
        sampled.append(s)
        greedy.append(g)
        sq.append((pred - s) ** 2)
    return (float(np.concatenate(sampled).mean()), float(np.concatenate(greedy).mean()),
            float(np.concatenate(sq).mean()))


def init_models(config: TrainConfig) -> tuple[PtrNetModel, CriticModel]:
    rng = RngStream(config.seed).child("init")
    actor = PtrNetModel.init(rng, config.embed_dim, config.hidden, config.logit_clip)
    critic = CriticModel.init(rng, config.embed_dim, config.hidden, config.process_rounds)
    return actor, critic


def train(config: TrainConfig,
          callback: Callable[[int, StepStats], None] | None = None):
    """Run ``config.max_steps`` updates; returns ``(actor, critic, log)``.

    The held-out set is evaluated before the first step, every
    ``eval_every`` steps and after the last step.
    """
    actor, critic = init_models(config)
    root = RngStream(config.seed)
    n = config.n_cities
    eval_set = root.child("eval-set").random((config.eval_set_size, n, 2))
    batch_rng = root.child("batches")
    sample_rng = root.child("policy")
    actor_opt = Adam(actor.params(), config.adam_actor)
    critic_opt = Adam(critic.params(), config.adam_critic)
    train_log = TrainLog()

    def do_eval(step):
        rec = EvalRecord(step, *evaluate(actor, critic, eval_set,
                                         root.child("eval-sample", step)))
        train_log.append(rec)
        log.info("step %d: sample %.4f greedy %.4f critic %.4f", rec.step,
                 rec.sample_mean, rec.greedy_mean, rec.critic_loss)

    if config.max_steps > 0:
        do_eval(0)
    for step in range(1, config.max_steps + 1):
        batch = batch_rng.random((config.batch_size, n, 2))
        stats = reinforce_step(actor, critic, batch, sample_rng, actor_opt, critic_opt,
                               normalize_advantage=config.normalize_advantage)
        if callback is not None:
            callback(step, stats)
        if step % config.eval_every == 0 or step == config.max_steps:
            do_eval(step)
    return actor, critic, train_log


class CheckpointError(ValueError):
    pass


def save_checkpoint(actor: PtrNetModel, critic: CriticModel, config: TrainConfig,
                    path: str | Path, step: int | None = None) -> None:
    path = Path(path)
    params = actor.params() + critic.params()
    header = {
        "embed_dim": actor.embed_dim,
        "hidden": actor.hidden,
        "process_rounds": critic.process_rounds,
        "logit_clip": actor.logit_clip,
        "step": config.max_steps if step is None else step,
        "config": config.to_dict(),
        "blocks": [[p.name, list(p.shape)] for p in params],
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        for p in params:
            fh.write(np.ascontiguousarray(p.values, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path: str | Path, actor: PtrNetModel | None = None,
                    critic: CriticModel | None = None):
    """Read a checkpoint into fresh models, or into ``actor``/``critic``
    when given (their shapes must match the file)."""
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"unsupported checkpoint version (magic {data[:5]!r})")
    nl = data.find(b"\n", len(MAGIC))
    if nl < 0:
        raise CheckpointError("truncated checkpoint header")
    try:
        header = json.loads(data[len(MAGIC):nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    config = TrainConfig.from_dict(header["config"])
    if actor is None or critic is None:
        rng = np.random.default_rng(0)
        E, H = header["embed_dim"], header["hidden"]
        actor = actor or PtrNetModel.init(rng, E, H, header.get("logit_clip"))
        critic = critic or CriticModel.init(rng, E, H, header["process_rounds"])
    params = actor.params() + critic.params()
    blocks = header["blocks"]
    if len(blocks) != len(params):
        raise CheckpointError(f"expected {len(params)} blocks, file has {len(blocks)}")
    offset = nl + 1
    for (name, shape), p in zip(blocks, params):
        if name != p.name:
            raise CheckpointError(f"block order mismatch: file {name}, model {p.name}")
        if tuple(shape) != p.shape:
            raise CheckpointError(f"dimension mismatch in block {name}: "
                                  f"file {tuple(shape)}, model {p.shape}")
        size = int(np.prod(shape, dtype=np.int64)) * 8
        if offset + size > len(data):
            raise CheckpointError(f"truncated checkpoint in block {name}")
        p.values = np.frombuffer(data, dtype="<f8", count=size // 8,
                                 offset=offset).astype(np.float64).reshape(shape)
        p.grad = np.zeros_like(p.values)
        p.adam_m = np.zeros_like(p.values)
        p.adam_v = np.zeros_like(p.values)
        offset += size
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after last block")
    critic.process_rounds = header["process_rounds"]
    return actor, critic, config

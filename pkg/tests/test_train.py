import numpy as np
import pytest

from cctsp.core import RngStream, tour_length
from cctsp.nn import CriticModel, PtrNetModel
from cctsp.nn.kernel import Adam, AdamConfig
from cctsp.nn.pointer import DecodeMode, actor_rollout, critic_run
from cctsp.nn.train import (
    MAGIC,
    PRESETS,
    CheckpointError,
    TrainConfig,
    batch_tour_lengths,
    critic_step,
    init_models,
    load_checkpoint,
    reinforce_gradients,
    reinforce_step,
    save_checkpoint,
    train,
)

from .conftest import numeric_grad, rel_error


def _tiny(seed=0, H=8):
    rng = RngStream(seed)
    return PtrNetModel.init(rng, H, H), CriticModel.init(rng, H, H)


def test_batch_lengths_match_scalar_routine():
    xy = RngStream(1).random((3, 7, 2))
    tours = np.stack([RngStream(i).permutation(7) for i in range(3)])
    expect = [tour_length(xy[b], tours[b]) for b in range(3)]
    np.testing.assert_allclose(batch_tour_lengths(xy, tours), expect, rtol=1e-12)


def test_critic_loss_hand_example():
    pred, lengths = np.array([3.0, 4.0]), np.array([5.0, 2.0])
    assert np.mean((pred - lengths) ** 2) == 4.0


def test_reported_critic_loss_is_mse():
    actor, critic = _tiny()
    batch = RngStream(2).random((5, 6, 2))
    _, lengths, pred, loss = reinforce_gradients(actor, critic, batch, RngStream(3))
    assert loss == pytest.approx(np.mean((pred - lengths) ** 2), rel=1e-12)


def test_zero_advantage_leaves_actor_unchanged():
    actor, critic = _tiny(1)
    batch = RngStream(4).random((4, 6, 2))
    # same stream twice: the first call only reveals the sampled lengths
    _, lengths, _, _ = reinforce_gradients(actor, critic, batch, RngStream(5))
    before = [p.values.copy() for p in actor.params()]
    a_opt, c_opt = Adam(actor.params()), Adam(critic.params())
    reinforce_step(actor, critic, batch, RngStream(5), a_opt, c_opt, baseline=lengths)
    for p, old in zip(actor.params(), before):
        np.testing.assert_array_equal(p.values, old)


def test_critic_regression_converges():
    # at lr 1e-3 Adam overshoots once the loss nears its floor; 3e-4 stays monotone
    _, critic = _tiny(2, H=32)
    batch = RngStream(6).random((64, 20, 2))
    lengths = batch_tour_lengths(batch, np.tile(np.arange(20), (64, 1)))
    opt = Adam(critic.params(), AdamConfig(lr0=3e-4))
    losses = [critic_step(critic, batch, lengths, opt) for _ in range(200)]
    pred, _ = critic_run(critic, batch)
    final = float(np.mean((pred - lengths) ** 2))
    assert final <= 0.1 * losses[0]
    steps = np.diff(losses + [final])
    assert np.mean(steps <= 0) >= 0.95


@pytest.mark.parametrize("sign", [1.0, -1.0])
def test_update_direction_follows_advantage(sign):
    actor, critic = _tiny(3)
    batch = RngStream(7).random((1, 6, 2))
    roll = actor_rollout(actor, batch, DecodeMode.SAMPLE, RngStream(8))
    length = batch_tour_lengths(batch, roll.tours)
    opt = Adam(actor.params(), AdamConfig(lr0=1e-3))
    opt.zero_grad()
    reinforce_gradients(actor, critic, batch, RngStream(8), baseline=length - sign)
    opt.step()
    after = actor_rollout(actor, batch, actions=roll.tours).log_probs[0]
    # positive advantage penalises the tour, negative rewards it
    assert np.sign(roll.log_probs[0] - after) == sign


def test_full_step_gradient_matches_finite_differences():
    actor, critic = _tiny(4)
    batch = RngStream(9).random((2, 4, 2))
    for p in actor.params() + critic.params():
        p.grad[:] = 0
    tours, lengths, pred, _ = reinforce_gradients(actor, critic, batch, RngStream(10))
    # baseline is a constant in the actor objective
    b = pred.copy()

    def actor_loss():
        lp = actor_rollout(actor, batch, actions=tours).log_probs
        return float(np.mean((lengths - b) * lp))

    def critic_loss():
        out, _ = critic_run(critic, batch)
        return float(np.mean((out - lengths) ** 2))

    for p in actor.params():
        assert rel_error(numeric_grad(actor_loss, p), p.grad) < 1e-3, p.name
    for p in critic.params():
        assert rel_error(numeric_grad(critic_loss, p), p.grad) < 1e-3, p.name


def test_forced_actions_reproduce_sampled_gradients():
    actor, critic = _tiny(5)
    batch = RngStream(11).random((3, 5, 2))
    tours, *_ = reinforce_gradients(actor, critic, batch, RngStream(12))
    first = [p.grad.copy() for p in actor.params()]
    for p in actor.params() + critic.params():
        p.grad[:] = 0
    reinforce_gradients(actor, critic, batch, None, actions=tours)
    for p, g in zip(actor.params(), first):
        np.testing.assert_allclose(p.grad, g, rtol=0, atol=1e-14)


def _quick(**kw):
    base = dict(batch_size=4, n_cities=5, max_steps=6, embed_dim=8, hidden=8,
                eval_every=3, eval_set_size=8, seed=17)
    return TrainConfig(**{**base, **kw})


def test_zero_steps_returns_initial_models():
    actor, critic, log = train(_quick(max_steps=0))
    ref_actor, ref_critic = init_models(_quick(max_steps=0))
    assert log.records == []
    assert log.to_csv() == "step,sample_mean,greedy_mean,critic_loss\n"
    for p, q in zip(actor.params() + critic.params(), ref_actor.params() + ref_critic.params()):
        np.testing.assert_array_equal(p.values, q.values)


def test_training_is_deterministic():
    calls = []
    _, _, a = train(_quick(), callback=lambda step, stats: calls.append(step))
    _, _, b = train(_quick())
    assert a.to_csv() == b.to_csv()
    assert [r.step for r in a.records] == [0, 3, 6]
    assert calls == list(range(1, 7))
    assert a.to_csv() != train(_quick(seed=18))[2].to_csv()


def test_presets():
    assert PRESETS["full"]["max_steps"] == 20000
    assert PRESETS["desk"]["max_steps"] == 5000
    assert PRESETS["reduced"]["hidden"] == 64
    cfg = TrainConfig(**PRESETS["full"])
    assert (cfg.batch_size, cfg.n_cities, cfg.hidden, cfg.embed_dim) == (64, 20, 128, 128)
    assert cfg.adam_actor.lr0 == cfg.adam_critic.lr0 == 1e-3


def test_config_round_trips_through_dict():
    cfg = _quick(normalize_advantage=True, logit_clip=10.0)
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_checkpoint_round_trip(tmp_path):
    actor, critic, _ = train(_quick(max_steps=2))
    path = tmp_path / "m.ckpt"
    save_checkpoint(actor, critic, _quick(max_steps=2), path)
    assert path.read_bytes().startswith(MAGIC)
    a2, c2, cfg = load_checkpoint(path)
    assert cfg == _quick(max_steps=2)
    for p, q in zip(actor.params() + critic.params(), a2.params() + c2.params()):
        assert p.name == q.name
        np.testing.assert_array_equal(p.values, q.values)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX\n{}\n")
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_checkpoint_truncated(tmp_path):
    actor, critic = _tiny()
    path = tmp_path / "m.ckpt"
    save_checkpoint(actor, critic, _quick(), path)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_checkpoint_dimension_mismatch_names_block(tmp_path):
    actor, critic = _tiny(H=8)
    path = tmp_path / "m.ckpt"
    save_checkpoint(actor, critic, _quick(), path)
    wide_actor, wide_critic = _tiny(H=16)
    with pytest.raises(CheckpointError, match="actor.embed.W"):
        load_checkpoint(path, wide_actor, wide_critic)

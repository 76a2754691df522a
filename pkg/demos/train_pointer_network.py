"""
Training the pointer network
============================

Actor-critic REINFORCE on random 20-city instances. This short run uses a
small network so it finishes in a minute or two; ``cctsp train --preset
desk`` is the full-size version.
"""

from cctsp.core import RngStream, tour_length
from cctsp.nn import TrainConfig, save_checkpoint, train
from cctsp.nn.pointer import decode

config = TrainConfig(batch_size=64, n_cities=20, max_steps=600, embed_dim=64, hidden=64,
                     eval_every=100, eval_set_size=128, seed=3)


def report(step, stats):
    if step % 100 == 0:
        print(f"step {step:4d}  batch mean {stats.mean_length:.3f}  "
              f"critic loss {stats.critic_loss:.3f}")


actor, critic, log = train(config, callback=report)

###############################################################################
# Held-out greedy tours shrink from about 10 (random order) as training goes.
print(log.to_csv())

###############################################################################
# Decoding one instance greedily.
xy = RngStream(9).random((20, 2))
result = decode(actor, xy)
print("tour", result.permutation.tolist())
print(f"length {tour_length(xy, result.permutation):.3f}, log p {result.log_prob:.3f}")

save_checkpoint(actor, critic, config, "demo.ckpt")
print("saved demo.ckpt")

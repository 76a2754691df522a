from __future__ import annotations

import time

import numpy as np

from ..core import RngStream, TspInstance, population_lengths
from .base import BestTracker, EvoConfig, TrialReport
from .operators import apply_swaps, random_population, swap_sequence

__all__ = ["pso_run", "next_velocity"]

_EMPTY = np.empty((0, 2), dtype=np.int64)


def next_velocity(rng, velocity, position, pbest, gbest, w, c1, c2) -> np.ndarray:
    """Keep each old swap with probability ``w``, then append the swaps of
    ``pbest - position`` (each with probability ``c1``) and of
    ``gbest - position`` (each with probability ``c2``)."""
    to_p = swap_sequence(pbest, position)
    to_g = swap_sequence(gbest, position)
    keep_v = rng.random(len(velocity)) < w
    keep_p = rng.random(len(to_p)) < c1
    keep_g = rng.random(len(to_g)) < c2
    return np.concatenate([velocity[keep_v], to_p[keep_p], to_g[keep_g]])


def pso_run(instance: TspInstance, config: EvoConfig,
            rng: RngStream | None = None) -> TrialReport:
    """Swap-sequence PSO: a particle is a tour, a velocity is a list of
    position swaps. Velocities start empty."""
    t0 = time.perf_counter()
    rng = rng if rng is not None else RngStream(config.seed)
    coords = instance.coords
    P, n = config.population_size, instance.n
    w, c1, c2 = config.pso.w, config.pso.c1, config.pso.c2
    x = random_population(rng, P, n)
    velocity = [_EMPTY] * P
    fit = population_lengths(coords, x)
    pbest, pbest_fit = x.copy(), fit.copy()
    g = int(np.argmin(fit))
    best = BestTracker()
    best.update(x, fit)
    best.record()
    for _ in range(config.max_iterations):
        gbest = pbest[g].copy()
        for i in range(P):
            velocity[i] = next_velocity(rng, velocity[i], x[i], pbest[i], gbest, w, c1, c2)
            x[i] = apply_swaps(x[i], velocity[i])
        fit = population_lengths(coords, x)
        better = fit < pbest_fit
        pbest[better] = x[better]
        pbest_fit[better] = fit[better]
        g = int(np.argmin(pbest_fit))
        best.update(x, fit)
        best.record()
    wall = (time.perf_counter() - t0) * 1e3
    return best.report("pso", rng.seed, float(fit.mean()), wall)

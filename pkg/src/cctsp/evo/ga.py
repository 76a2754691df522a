from __future__ import annotations

import time

import numpy as np

from ..core import RngStream, Tour, TspInstance, population_lengths, validate_permutation
from .base import BestTracker, EvoConfig, TrialReport
from .operators import order_crossover, random_population

__all__ = ["ga_run"]


def ga_run(instance: TspInstance, config: EvoConfig, elite=None,
           rng: RngStream | None = None) -> TrialReport:
    """Generational permutation GA.

    Tournament selection, order crossover, single-swap mutation and
    1-elitism. ``elite`` (an ``EliteTour``, ``Tour`` or index array), if
    given, replaces individual 0 of the random initial population.
    """
    t0 = time.perf_counter()
    rng = rng if rng is not None else RngStream(config.seed)
    coords = instance.coords
    n, P = instance.n, config.population_size
    pop = random_population(rng, P, n)
    if elite is not None:
        order = getattr(elite, "tour", elite)
        order = order.order if isinstance(order, Tour) else order
        pop[0] = validate_permutation(order, n)
    fit = population_lengths(coords, pop)
    best = BestTracker()
    best.update(pop, fit)
    best.record()
    m = P - 1
    for _ in range(config.max_iterations):
        contenders = rng.integers(0, P, size=(m, 2, config.tournament_size))
        winners = np.take_along_axis(
            contenders, np.argmin(fit[contenders], axis=2)[..., None], axis=2)[..., 0]
        crossover = rng.random(m) < config.crossover_rate
        cuts = np.sort(rng.integers(0, n, size=(m, 2)), axis=1)
        mutate = rng.random(m) < config.ga_mutation_rate
        swaps = rng.integers(0, n, size=(m, 2))
        children = np.empty((m, n), dtype=pop.dtype)
        for c in range(m):
            p1, p2 = pop[winners[c, 0]], pop[winners[c, 1]]
            if crossover[c]:
                children[c] = order_crossover(p1, p2, cuts[c, 0], cuts[c, 1])
            else:
                children[c] = p1
        rows = np.flatnonzero(mutate)
        i, j = swaps[rows, 0], swaps[rows, 1]
        children[rows, i], children[rows, j] = children[rows, j], children[rows, i]
        keep = int(np.argmin(fit))
        pop = np.concatenate([pop[keep:keep + 1], children])
        fit = np.concatenate([fit[keep:keep + 1], population_lengths(coords, children)])
        best.update(pop, fit)
        best.record()
    wall = (time.perf_counter() - t0) * 1e3
    return best.report("ga", rng.seed, float(fit.mean()), wall)

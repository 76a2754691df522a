"""Clonal-selection immune algorithm.

Per iteration: score antibodies by affinity (inverse length) blended with
low concentration, draw half the population in proportion to that score,
clone the draws in proportion to their rank, swap-mutate the clones, keep
the shortest tours of parents plus clones, and fill the last few slots
with random immigrants.
"""
from __future__ import annotations

import time

import numpy as np

from ..core import RngStream, TspInstance, population_lengths
from .base import BestTracker, EvoConfig, TrialReport
from .operators import apply_swaps, edge_similarity, random_population

__all__ = ["ia_run", "concentration", "selection_scores", "clone_counts"]


def concentration(population: np.ndarray, threshold: float) -> np.ndarray:
    """Share of the other antibodies whose edge similarity exceeds
    ``threshold``."""
    P = population.shape[0]
    close = edge_similarity(population) > threshold
    np.fill_diagonal(close, False)
    return close.sum(axis=1) / max(P - 1, 1)


def selection_scores(fitness: np.ndarray, conc: np.ndarray, alpha: float) -> np.ndarray:
    affinity = 1.0 / fitness
    return alpha * affinity / affinity.max() + (1.0 - alpha) * (1.0 - conc)


def clone_counts(n_selected: int, total: int) -> np.ndarray:
    """Clones per rank, proportional to ``n_selected - rank``, summing to
    ``total``; leftovers from flooring go to the best ranks."""
    weights = np.arange(n_selected, 0, -1, dtype=np.float64)
    counts = np.floor(weights / weights.sum() * total).astype(np.int64)
    counts[:total - counts.sum()] += 1
    return counts


def ia_run(instance: TspInstance, config: EvoConfig,
           rng: RngStream | None = None) -> TrialReport:
    t0 = time.perf_counter()
    rng = rng if rng is not None else RngStream(config.seed)
    coords = instance.coords
    P, n = config.population_size, instance.n
    params = config.ia
    n_select = max(1, P // 2)
    n_immigrants = min(P - 1, max(1, int(round(params.immigrant_fraction * P))))
    counts = clone_counts(n_select, P)
    pop = random_population(rng, P, n)
    fit = population_lengths(coords, pop)
    best = BestTracker()
    best.update(pop, fit)
    best.record()
    for _ in range(config.max_iterations):
        score = selection_scores(fit, concentration(pop, params.affinity_threshold),
                                 params.concentration_weight)
        prob = score / score.sum() if score.sum() > 0 else None
        chosen = rng.choice(P, size=n_select, replace=False, p=prob)
        chosen = chosen[np.argsort(-score[chosen], kind="stable")]
        clones = np.repeat(pop[chosen], counts, axis=0)
        n_swaps = np.maximum(1, rng.binomial(n, params.mutation, size=len(clones)))
        for c in range(len(clones)):
            clones[c] = apply_swaps(clones[c], rng.integers(0, n, size=(n_swaps[c], 2)))
        pool = np.concatenate([pop, clones])
        pool_fit = np.concatenate([fit, population_lengths(coords, clones)])
        survivors = np.argsort(pool_fit, kind="stable")[:P - n_immigrants]
        immigrants = random_population(rng, n_immigrants, n)
        pop = np.concatenate([pool[survivors], immigrants])
        fit = np.concatenate([pool_fit[survivors], population_lengths(coords, immigrants)])
        best.update(pop, fit)
        best.record()
    wall = (time.perf_counter() - t0) * 1e3
    return best.report("ia", rng.seed, float(fit.mean()), wall)

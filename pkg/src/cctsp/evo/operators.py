"""Permutation operators shared by the GA, PSO and IA."""
from __future__ import annotations

import numba
import numpy as np
from scipy import sparse

__all__ = [
    "random_population",
    "order_crossover",
    "swap_mutation",
    "swap_sequence",
    "apply_swaps",
    "edge_similarity",
]


def random_population(rng, size: int, n: int) -> np.ndarray:
    return np.argsort(rng.random((size, n)), axis=1, kind="stable")


def order_crossover(parent1: np.ndarray, parent2: np.ndarray, a: int, b: int) -> np.ndarray:
    """OX: copy ``parent1[a:b+1]`` in place and fill the other slots, left
    to right, with the remaining cities in ``parent2`` order."""
    n = parent1.size
    child = np.empty_like(parent1)
    seg = parent1[a:b + 1]
    child[a:b + 1] = seg
    keep = np.ones(n, dtype=bool)
    keep[seg] = False
    rest = parent2[keep[parent2]]
    child[:a] = rest[:a]
    child[b + 1:] = rest[a:]
    return child


def swap_mutation(perm: np.ndarray, i: int, j: int) -> np.ndarray:
    perm[i], perm[j] = perm[j], perm[i]
    return perm


@numba.njit(cache=True)
def _swap_sequence(target, current):
    n = current.size
    cur = current.copy()
    pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        pos[cur[i]] = i
    out = np.empty((n, 2), dtype=np.int64)
    m = 0
    for i in range(n):
        want = target[i]
        if cur[i] != want:
            j = pos[want]
            out[m, 0] = i
            out[m, 1] = j
            m += 1
            other = cur[i]
            cur[i] = want
            cur[j] = other
            pos[want] = i
            pos[other] = j
    return out[:m]


def swap_sequence(target: np.ndarray, current: np.ndarray) -> np.ndarray:
    """Swaps ``(i, j)`` of positions that turn ``current`` into ``target``;
    the discrete ``target - current`` of swap-sequence PSO."""
    return _swap_sequence(np.ascontiguousarray(target, dtype=np.int64),
                          np.ascontiguousarray(current, dtype=np.int64))


@numba.njit(cache=True)
def _apply_swaps(perm, swaps):
    out = perm.copy()
    for k in range(swaps.shape[0]):
        i = swaps[k, 0]
        j = swaps[k, 1]
        t = out[i]
        out[i] = out[j]
        out[j] = t
    return out


def apply_swaps(perm: np.ndarray, swaps: np.ndarray) -> np.ndarray:
    swaps = np.ascontiguousarray(swaps, dtype=np.int64).reshape(-1, 2)
    return _apply_swaps(np.ascontiguousarray(perm, dtype=np.int64), swaps)


def edge_similarity(population: np.ndarray) -> np.ndarray:
    """Fraction of undirected edges shared by each pair of tours."""
    P, n = population.shape
    a = population
    b = np.roll(population, -1, axis=1)
    keys = (np.minimum(a, b) * n + np.maximum(a, b)).ravel()
    rows = np.repeat(np.arange(P), n)
    X = sparse.csr_matrix((np.ones(keys.size), (rows, keys)), shape=(P, n * n))
    X.sum_duplicates()
    X.data[:] = 1.0  # n == 2 lists its one edge twice
    shared = (X @ X.T).toarray()
    return shared / (n if n > 2 else 1)

"""Classical tour constructors used as sub-solvers and as oracles.

All functions take an ``(n, 2)`` coordinate array and return a permutation
of ``0..n-1`` that starts at city 0.
"""
from __future__ import annotations

import itertools

import numpy as np

from .core import distance_matrix

__all__ = [
    "HELD_KARP_MAX",
    "held_karp",
    "brute_force",
    "nearest_neighbor",
    "two_opt",
    "canonical",
]

HELD_KARP_MAX = 13


def held_karp(coords) -> np.ndarray:
    """Exact optimum by dynamic programming over subsets, ``n <= 13``.

    ``best[S, j]`` is the shortest path from city 0 through the set ``S``
    of the other cities, ending at ``j``. Sets of equal size are relaxed
    together with numpy. The result is in :func:`canonical` orientation,
    since a cycle and its reverse tie up to rounding.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n > HELD_KARP_MAX:
        raise ValueError(f"held_karp supports n <= {HELD_KARP_MAX}, got {n}")
    if n <= 3:
        return np.arange(n)
    d = distance_matrix(coords)
    m = n - 1  # city j >= 1 is bit j-1
    full = 1 << m
    best = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int64)
    for j in range(m):
        best[1 << j, j] = d[0, j + 1]
    masks = np.arange(full)
    popcount = np.array([bin(s).count("1") for s in range(full)])
    dd = d[1:, 1:]
    for size in range(2, m + 1):
        layer = masks[popcount == size]
        for j in range(m):
            bit = 1 << j
            sel = layer[(layer & bit) != 0]
            prev = sel ^ bit
            cand = best[prev] + dd[:, j]
            k = np.argmin(cand, axis=1)
            best[sel, j] = cand[np.arange(sel.size), k]
            parent[sel, j] = k
    closing = best[full - 1] + d[1:, 0]
    j = int(np.argmin(closing))
    path = []
    s = full - 1
    while j >= 0:
        path.append(j + 1)
        s, j = s ^ (1 << j), int(parent[s, j])
    return canonical([0] + path[::-1])


def brute_force(coords) -> np.ndarray:
    """Shortest tour by enumerating every permutation with city 0 first.
    Meant for n <= 10."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    if n <= 3:
        return np.arange(n)
    d = distance_matrix(coords)
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.int64)
    full = np.concatenate([np.zeros((perms.shape[0], 1), dtype=np.int64), perms], axis=1)
    lengths = d[full, np.roll(full, -1, axis=1)].sum(axis=1)
    return full[int(np.argmin(lengths))]


def canonical(order) -> np.ndarray:
    """Rotate to start at 0 and orient so that the second city is smaller
    than the last; equal closed tours then compare equal."""
    order = np.asarray(order, dtype=np.int64)
    order = np.roll(order, -int(np.flatnonzero(order == 0)[0]))
    if order.size > 2 and order[1] > order[-1]:
        order = np.concatenate([order[:1], order[:0:-1]])
    return order


def nearest_neighbor(coords, start: int = 0) -> np.ndarray:
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    cur = start
    for t in range(n):
        order[t] = cur
        visited[cur] = True
        if t == n - 1:
            break
        diff = coords - coords[cur]
        dist = np.hypot(diff[:, 0], diff[:, 1])
        dist[visited] = np.inf
        cur = int(np.argmin(dist))
    return order


def two_opt(coords, order=None, tol: float = 1e-12) -> np.ndarray:
    """Best-improvement 2-opt until no exchange shortens the tour by more
    than ``tol``."""
    coords = np.asarray(coords, dtype=np.float64)
    n = coords.shape[0]
    order = np.arange(n) if order is None else np.array(order, dtype=np.int64)
    if n < 4:
        return order
    d = distance_matrix(coords)
    i_idx, j_idx = np.triu_indices(n, k=2)
    keep = ~((i_idx == 0) & (j_idx == n - 1))  # these two edges share a city
    i_idx, j_idx = i_idx[keep], j_idx[keep]
    while True:
        a, b = order[i_idx], order[i_idx + 1]
        c, e = order[j_idx], order[(j_idx + 1) % n]
        gain = d[a, b] + d[c, e] - d[a, c] - d[b, e]
        k = int(np.argmax(gain))
        if gain[k] <= tol:
            return order
        i, j = i_idx[k], j_idx[k]
        order[i + 1:j + 1] = order[i + 1:j + 1][::-1].copy()

"""Greedy nearest-neighbour grouping of cities into fixed-size clusters."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TspInstance

__all__ = ["Decomposition", "variant_knn", "check_partition"]


@dataclass
class Decomposition:
    """Clusters in creation order. Each cluster is an int array of city
    indices; cluster ``j`` was seeded by its first element."""

    clusters: list[np.ndarray]
    k: int
    distance_evaluations: int = 0

    def __len__(self) -> int:
        return len(self.clusters)

    @property
    def n(self) -> int:
        return sum(c.size for c in self.clusters)

    def sizes(self) -> tuple[int, ...]:
        return tuple(int(c.size) for c in self.clusters)

    def labels(self) -> np.ndarray:
        """Cluster id of each city."""
        out = np.empty(self.n, dtype=np.int64)
        for j, c in enumerate(self.clusters):
            out[c] = j
        return out

    def to_csv(self) -> str:
        rows = ["cluster_id,city_index"]
        for j, c in enumerate(self.clusters):
            rows.extend(f"{j},{int(i)}" for i in c)
        return "\n".join(rows) + "\n"


def check_partition(clusters, n: int) -> None:
    seen = np.zeros(n, dtype=np.int64)
    for c in clusters:
        np.add.at(seen, np.asarray(c, dtype=np.int64), 1)
    if not np.all(seen == 1):
        bad = int(np.flatnonzero(seen != 1)[0])
        raise AssertionError(f"city {bad} covered {seen[bad]} times")


def variant_knn(instance: TspInstance, k: int) -> Decomposition:
    """Partition cities into clusters of ``k``.

    Cities are visited in index order. An unassigned city opens a cluster
    and pulls in its ``k - 1`` nearest unassigned cities (exact Euclidean
    distance, ties to the lower index). There is no refinement pass, so
    the last cluster holds the ``N mod k`` leftovers when that is nonzero.
    """
    n = instance.n
    if not 2 <= k <= n:
        raise ValueError(f"k must satisfy 2 <= k <= N={n}, got {k}")
    coords = instance.coords
    unassigned = np.ones(n, dtype=bool)
    clusters = []
    evaluations = 0
    for seed in range(n):
        if not unassigned[seed]:
            continue
        unassigned[seed] = False
        cand = np.flatnonzero(unassigned)
        if cand.size:
            diff = coords[cand] - coords[seed]
            d = np.hypot(diff[:, 0], diff[:, 1])
            evaluations += cand.size
            # cand is ascending, so a stable sort breaks ties by index
            take = cand[np.argsort(d, kind="stable")[:k - 1]]
        else:
            take = cand
        unassigned[take] = False
        clusters.append(np.concatenate(([seed], take)).astype(np.int64))
    check_partition(clusters, n)
    return Decomposition(clusters, k, evaluations)

"""Stage one: solve each cluster on its own, then splice the sub-tours.

Each cluster is rescaled into the unit square before it reaches a
sub-solver, because the pointer network only ever saw unit-square data.
The splice keeps every sub-tour's visiting order, drops its closing edge
and concatenates clusters in creation order.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .core import RngStream, Tour, TspInstance, tour_length, validate_permutation, write_tour
from .decompose import Decomposition, check_partition, variant_knn
from .nn.pointer import DecodeMode, PtrNetModel, actor_rollout
from .nn.train import batch_tour_lengths
from .solvers import HELD_KARP_MAX, held_karp, nearest_neighbor, two_opt

__all__ = [
    "SubSolver",
    "PtrNetSolver",
    "HeldKarpSolver",
    "NearestNeighborSolver",
    "TwoOptSolver",
    "SubSolverError",
    "Transform",
    "EliteTour",
    "normalize_subcomponent",
    "solve_subcomponents",
    "combine",
    "build_elite",
    "make_subsolver",
]


class SubSolver(Protocol):
    name: str

    def solve(self, coords: np.ndarray, rng) -> np.ndarray: ...


class SubSolverError(RuntimeError):
    def __init__(self, cluster: int, cause: Exception):
        super().__init__(f"sub-solver failed on cluster {cluster}: {cause}")
        self.cluster = cluster


@dataclass(frozen=True)
class Transform:
    offset: np.ndarray
    scale: float

    def apply(self, coords: np.ndarray) -> np.ndarray:
        if self.scale == 0.0:
            return np.full_like(coords, 0.5)
        return (coords - self.offset) / self.scale

    def invert(self, normalized: np.ndarray) -> np.ndarray:
        if self.scale == 0.0:
            return np.broadcast_to(self.offset, normalized.shape).copy()
        return normalized * self.scale + self.offset


def normalize_subcomponent(coords) -> tuple[np.ndarray, Transform]:
    """Shift to the bounding-box corner and divide both axes by the longer
    side. Coincident points all map to (0.5, 0.5)."""
    coords = np.asarray(coords, dtype=np.float64)
    lo = coords.min(axis=0)
    scale = float((coords.max(axis=0) - lo).max())
    t = Transform(lo, scale)
    return t.apply(coords), t


@dataclass
class PtrNetSolver:
    """Decode with a trained actor. ``SAMPLE`` mode keeps the shortest of
    ``samples`` sampled tours."""

    model: PtrNetModel
    mode: DecodeMode = DecodeMode.GREEDY
    samples: int = 16
    checkpoint: str = ""
    name: str = "ptrnet"

    def solve(self, coords, rng=None) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.float64)
        if self.mode is DecodeMode.GREEDY:
            return actor_rollout(self.model, coords[None]).tours[0]
        batch = np.broadcast_to(coords, (self.samples,) + coords.shape)
        tours = actor_rollout(self.model, batch, DecodeMode.SAMPLE, rng).tours
        return tours[int(np.argmin(batch_tour_lengths(batch, tours)))]


class HeldKarpSolver:
    name = "held-karp"

    def solve(self, coords, rng=None) -> np.ndarray:
        return held_karp(coords)


class NearestNeighborSolver:
    name = "nearest-neighbor"

    def solve(self, coords, rng=None) -> np.ndarray:
        return nearest_neighbor(coords)


class TwoOptSolver:
    name = "two-opt"

    def solve(self, coords, rng=None) -> np.ndarray:
        return two_opt(coords, nearest_neighbor(coords))


def make_subsolver(name: str, model: PtrNetModel | None = None, **kwargs) -> SubSolver:
    if name == "ptrnet":
        if model is None:
            raise ValueError("the ptrnet sub-solver needs a trained model")
        return PtrNetSolver(model, **kwargs)
    solvers = {"held-karp": HeldKarpSolver, "nearest-neighbor": NearestNeighborSolver,
               "nn": NearestNeighborSolver, "two-opt": TwoOptSolver}
    try:
        return solvers[name]()
    except KeyError:
        raise ValueError(f"unknown sub-solver {name!r}") from None


def solve_subcomponents(instance: TspInstance, decomposition: Decomposition,
                        solver: SubSolver, rng: RngStream | None = None,
                        polish: bool = False) -> list[np.ndarray]:
    """Global-index sub-tour for every cluster, in creation order.

    Cluster ``j`` gets ``rng.child("cluster", j)``, so results do not depend
    on the order clusters are processed in.
    """
    check_partition(decomposition.clusters, instance.n)
    if isinstance(solver, HeldKarpSolver) and decomposition.k > HELD_KARP_MAX:
        raise ValueError(f"held-karp needs k <= {HELD_KARP_MAX}")
    subs = []
    for j, cluster in enumerate(decomposition.clusters):
        if cluster.size <= 2:
            subs.append(np.sort(cluster))
            continue
        pts, _ = normalize_subcomponent(instance.coords[cluster])
        child = rng.child("cluster", j) if rng is not None else None
        try:
            local = validate_permutation(solver.solve(pts, child), cluster.size)
        except Exception as exc:
            raise SubSolverError(j, exc) from exc
        if polish:
            local = two_opt(pts, local)
        subs.append(cluster[local])
    return subs


@dataclass
class EliteTour:
    tour: Tour
    per_cluster_lengths: list[float]
    provenance: str

    def to_tsplib(self, name: str) -> str:
        return write_tour(name, self.tour.order, self.tour.length_cache)

    def to_csv(self) -> str:
        return "position,city_index\n" + "".join(
            f"{i},{int(c)}\n" for i, c in enumerate(self.tour.order))


def combine(sub_permutations, decomposition: Decomposition,
            instance: TspInstance | None = None, provenance: str = "") -> EliteTour:
    """Concatenate the open sub-tours in cluster creation order."""
    n = decomposition.n
    if len(sub_permutations) != len(decomposition.clusters):
        raise ValueError(f"{len(sub_permutations)} sub-tours for "
                         f"{len(decomposition.clusters)} clusters")
    for j, (sub, cluster) in enumerate(zip(sub_permutations, decomposition.clusters)):
        if sorted(map(int, sub)) != sorted(map(int, cluster)):
            raise ValueError(f"sub-tour {j} does not cover its cluster")
    order = validate_permutation(np.concatenate(sub_permutations), n)
    tour = Tour(order)
    lengths = []
    if instance is not None:
        tour.length(instance)
        for sub in sub_permutations:
            pts = instance.coords[sub]
            lengths.append(tour_length(pts, np.arange(len(sub))) if len(sub) > 1 else 0.0)
    return EliteTour(tour, lengths, provenance)


def build_elite(instance: TspInstance, k: int, solver: SubSolver,
                rng: RngStream | None = None, polish: bool = False) -> EliteTour:
    """Decompose, solve every cluster and splice."""
    decomposition = variant_knn(instance, min(k, instance.n))
    subs = solve_subcomponents(instance, decomposition, solver, rng, polish)
    provenance = solver.name
    if getattr(solver, "checkpoint", ""):
        provenance += f":{solver.checkpoint}"
    return combine(subs, decomposition, instance, provenance)

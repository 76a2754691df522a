from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import Tour

__all__ = ["PsoParams", "IaParams", "EvoConfig", "TrialReport", "BestTracker"]


@dataclass
class PsoParams:
    w: float = 0.8
    c1: float = 0.1
    c2: float = 0.1


@dataclass
class IaParams:
    mutation: float = 0.01
    affinity_threshold: float = 0.7
    concentration_weight: float = 0.95
    immigrant_fraction: float = 0.05


@dataclass
class EvoConfig:
    population_size: int = 100
    max_iterations: int = 500
    ga_mutation_rate: float = 0.01
    crossover_rate: float = 0.9
    tournament_size: int = 3
    pso: PsoParams = field(default_factory=PsoParams)
    ia: IaParams = field(default_factory=IaParams)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.pso, dict):
            self.pso = PsoParams(**self.pso)
        if isinstance(self.ia, dict):
            self.ia = IaParams(**self.ia)
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.max_iterations < 0 or self.tournament_size < 1:
            raise ValueError("max_iterations must be >= 0 and tournament_size >= 1")
        rates = {"ga_mutation_rate": self.ga_mutation_rate,
                 "crossover_rate": self.crossover_rate,
                 "pso.w": self.pso.w, "pso.c1": self.pso.c1, "pso.c2": self.pso.c2,
                 "ia.mutation": self.ia.mutation,
                 "ia.affinity_threshold": self.ia.affinity_threshold,
                 "ia.concentration_weight": self.ia.concentration_weight,
                 "ia.immigrant_fraction": self.ia.immigrant_fraction}
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass
class TrialReport:
    """One optimisation run. ``best_curve[i]`` is the best length seen up
    to and including iteration ``i``; entry 0 is the initial population."""

    algorithm: str
    seed: int
    best_curve: np.ndarray
    best_tour: Tour
    final_mean_population: float
    wall_ms: float = 0.0
    stage_one_ms: float | None = None
    elite_length: float | None = None

    @property
    def final_best(self) -> float:
        return float(self.best_curve[-1])

    @property
    def initial_best(self) -> float:
        return float(self.best_curve[0])

    def to_csv(self, wall_clock: bool = True) -> str:
        """Convergence curve and summary. With ``wall_clock=False`` the
        ``wall_ms`` column is dropped so the text is reproducible."""
        rows = ["iteration,best_length"]
        rows += [f"{i},{v!r}" for i, v in enumerate(self.best_curve.tolist())]
        if wall_clock:
            rows.append("seed,final_best,final_mean_population,wall_ms")
            rows.append(f"{self.seed},{self.final_best!r},"
                        f"{self.final_mean_population!r},{self.wall_ms:.3f}")
        else:
            rows.append("seed,final_best,final_mean_population")
            rows.append(f"{self.seed},{self.final_best!r},{self.final_mean_population!r}")
        return "\n".join(rows) + "\n"


class BestTracker:
    """Keeps the best tour ever evaluated and the per-iteration curve."""

    def __init__(self):
        self.length = np.inf
        self.order: np.ndarray | None = None
        self.curve: list[float] = []

    def update(self, population: np.ndarray, fitness: np.ndarray) -> None:
        i = int(np.argmin(fitness))
        if fitness[i] < self.length:
            self.length = float(fitness[i])
            self.order = population[i].copy()

    def record(self) -> None:
        self.curve.append(self.length)

    def report(self, algorithm: str, seed: int, final_mean: float,
               wall_ms: float) -> TrialReport:
        tour = Tour(self.order, self.length)
        return TrialReport(algorithm, seed, np.asarray(self.curve), tour,
                           float(final_mean), wall_ms)

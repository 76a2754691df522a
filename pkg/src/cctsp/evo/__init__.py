"""Stage-two optimisers and the two-stage solver built on them."""
from __future__ import annotations

import time

from ..core import RngStream, TspInstance
from .base import BestTracker, EvoConfig, IaParams, PsoParams, TrialReport
from .ga import ga_run
from .ia import ia_run
from .pso import pso_run

__all__ = [
    "ALGORITHMS",
    "EvoConfig",
    "PsoParams",
    "IaParams",
    "TrialReport",
    "BestTracker",
    "ga_run",
    "pso_run",
    "ia_run",
    "ccpnrl_ga_run",
    "run_algorithm",
]

ALGORITHMS = ("ccpnrl-ga", "ga", "pso", "ia")


def ccpnrl_ga_run(instance: TspInstance, config: EvoConfig, solver, k: int = 20,
                  rng: RngStream | None = None, polish: bool = False) -> TrialReport:
    """Build the spliced elite tour, then run the GA with it injected.

    The GA draws from ``rng.child("ga")``, the same stream :func:`run_algorithm`
    gives plain GA, so the two share every random individual but one.
    """
    from ..pipeline import build_elite

    rng = rng if rng is not None else RngStream(config.seed)
    t0 = time.perf_counter()
    elite = build_elite(instance, k, solver, rng.child("stage-one"), polish)
    stage_one = (time.perf_counter() - t0) * 1e3
    report = ga_run(instance, config, elite, rng.child("ga"))
    report.algorithm = "ccpnrl-ga"
    report.seed = rng.seed
    report.stage_one_ms = stage_one
    report.wall_ms += stage_one
    report.elite_length = elite.tour.length_cache
    return report


def run_algorithm(name: str, instance: TspInstance, config: EvoConfig, rng: RngStream,
                  solver=None, k: int = 20, polish: bool = False) -> TrialReport:
    if name == "ccpnrl-ga":
        if solver is None:
            raise ValueError("ccpnrl-ga needs a sub-solver")
        return ccpnrl_ga_run(instance, config, solver, k, rng, polish)
    runners = {"ga": ga_run, "pso": pso_run, "ia": ia_run}
    if name not in runners:
        raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
    report = runners[name](instance, config, rng=rng.child(name))
    report.seed = rng.seed
    return report

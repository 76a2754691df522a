"""Two-stage large-scale TSP solver.

Stage one groups cities into clusters of ``k`` nearest neighbours, solves
each cluster with a pointer network trained by actor-critic REINFORCE and
splices the sub-tours into one tour. Stage two injects that tour as an
elite into a genetic algorithm. GA, PSO and IA baselines are included.
"""
from .core import (
    City,
    DistanceMode,
    RngStream,
    Tour,
    TourError,
    TspInstance,
    TsplibError,
    generate_uniform_instance,
    parse_tsplib,
    read_tsplib,
    tour_length,
    write_tsplib,
)
from .decompose import Decomposition, variant_knn
from .evo import EvoConfig, TrialReport, ccpnrl_ga_run, ga_run, ia_run, pso_run, run_algorithm
from .pipeline import EliteTour, build_elite, combine, normalize_subcomponent, solve_subcomponents

__version__ = "0.1.0"

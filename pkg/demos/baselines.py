"""
GA, swap-sequence PSO and clonal-selection IA
=============================================

The three population methods on a seven-city toy, where Held-Karp gives
the exact answer to compare with.
"""

import numpy as np

from cctsp import RngStream, generate_uniform_instance, tour_length
from cctsp.evo import EvoConfig, run_algorithm
from cctsp.solvers import held_karp

inst = generate_uniform_instance(7, RngStream(700))
optimum = tour_length(inst, held_karp(inst.coords))
config = EvoConfig(population_size=100, max_iterations=200)

print(f"optimum {optimum:.4f}")
for alg in ("ga", "pso", "ia"):
    finals = [run_algorithm(alg, inst, config, RngStream(s)).final_best for s in range(10)]
    hits = sum(abs(f - optimum) < 1e-9 for f in finals)
    print(f"{alg:>4}: mean {np.mean(finals):.4f}, optimal in {hits}/10 runs")

###############################################################################
# A trial report serialises as a convergence curve plus one summary row.
rep = run_algorithm("pso", inst, EvoConfig(population_size=10, max_iterations=5), RngStream(0))
print(rep.to_csv())

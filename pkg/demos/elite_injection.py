"""
Seeding a GA with a spliced tour
================================

Plain GA against the same GA whose individual 0 is the stage-one elite.
Pass a checkpoint path to use the trained network as the sub-solver;
without one, 2-opt stands in.
"""

import sys

from cctsp import RngStream, generate_uniform_instance
from cctsp.bench import make_solver
from cctsp.evo import EvoConfig, run_algorithm

checkpoint = sys.argv[1] if len(sys.argv) > 1 else None
solver = make_solver("ptrnet" if checkpoint else "two-opt", checkpoint)

inst = generate_uniform_instance(1000, RngStream(11))
config = EvoConfig(population_size=50, max_iterations=100)

reports = {alg: run_algorithm(alg, inst, config, RngStream(5), solver, k=20)
           for alg in ("ga", "ccpnrl-ga")}

###############################################################################
# The elite starts far below anything a random population contains, and
# 1-elitism keeps it.
for alg, rep in reports.items():
    print(f"{alg:>10}: iteration 0 {rep.initial_best:9.2f}  final {rep.final_best:9.2f}  "
          f"{rep.wall_ms / 1e3:5.1f} s")
print(f"elite {reports['ccpnrl-ga'].elite_length:.2f} "
      f"(stage one {reports['ccpnrl-ga'].stage_one_ms:.0f} ms, solver {solver.name})")

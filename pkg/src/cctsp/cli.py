"""``cctsp train | solve | bench | check``.

The output directory defaults to ``$CCTSP_OUTPUT_DIR`` when that is set.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .bench import BenchConfig, atomic_write, check_dir, load_instance, make_solver, run_bench
from .core import RngStream, write_tour
from .evo import ALGORITHMS, EvoConfig, IaParams, PsoParams, run_algorithm
from .nn.kernel import AdamConfig

ENV_OUT = "CCTSP_OUTPUT_DIR"


def _out_dir(value: str | None, default: str) -> Path:
    return Path(os.environ.get(ENV_OUT) or value or default)


def _evo_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pop", type=int, default=100, help="population size")
    p.add_argument("--iters", type=int, default=500, help="GA/PSO/IA iterations")
    p.add_argument("--mutation", type=float, default=0.01, help="GA mutation rate")
    p.add_argument("--pso-w", type=float, default=0.8)
    p.add_argument("--pso-c1", type=float, default=0.1)
    p.add_argument("--pso-c2", type=float, default=0.1)
    p.add_argument("--ia-mutation", type=float, default=0.01)
    p.add_argument("--ia-threshold", type=float, default=0.7)
    p.add_argument("--ia-alpha", type=float, default=0.95)
    p.add_argument("--k", type=int, default=20, help="cluster size")
    p.add_argument("--subsolver", default="ptrnet",
                   choices=["ptrnet", "held-karp", "nearest-neighbor", "two-opt"])
    p.add_argument("--checkpoint", help="trained model for the ptrnet sub-solver")
    p.add_argument("--decode", default="greedy", choices=["greedy", "sample"])
    p.add_argument("--polish", action="store_true", help="2-opt each sub-tour")
    p.add_argument("--sidecar", help="file of 'name optimum' lines")


def _evo_config(args) -> EvoConfig:
    return EvoConfig(args.pop, args.iters, args.mutation,
                     pso=PsoParams(args.pso_w, args.pso_c1, args.pso_c2),
                     ia=IaParams(args.ia_mutation, args.ia_threshold, args.ia_alpha))


def train_config(args):
    """The :class:`TrainConfig` that ``train`` flags describe."""
    from .nn.train import PRESETS, TrainConfig

    values = dict(PRESETS[args.preset])
    overrides = {"max_steps": args.steps, "batch_size": args.batch_size,
                 "hidden": args.hidden, "embed_dim": args.embed,
                 "n_cities": args.n_cities}
    values.update({k: v for k, v in overrides.items() if v is not None})
    adam = AdamConfig(lr0=args.lr, decay_every=args.decay_every,
                      decay_factor=args.decay_factor,
                      clip_norm=None if args.clip <= 0 else args.clip)
    return TrainConfig(**values, adam_actor=adam, adam_critic=adam,
                       eval_every=args.eval_every, eval_set_size=args.eval_size,
                       seed=args.seed, normalize_advantage=args.normalize_advantage)


def cmd_train(args) -> int:
    from .nn.train import save_checkpoint, train

    config = train_config(args)
    actor, critic, train_log = train(config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(actor, critic, config, out)
    log_path = Path(args.log) if args.log else out.parent / "train_log.csv"
    atomic_write(log_path, train_log.to_csv())
    if train_log.records:
        print(f"final greedy mean {train_log.records[-1].greedy_mean:.4f}")
    print(f"wrote {out} and {log_path}")
    return 0


def cmd_solve(args) -> int:
    instance = load_instance(args.inst, args.sidecar)
    solver = None
    if args.alg == "ccpnrl-ga":
        solver = make_solver(args.subsolver, args.checkpoint, args.decode)
    report = run_algorithm(args.alg, instance, _evo_config(args), RngStream(args.seed),
                           solver, args.k, args.polish)
    out = _out_dir(args.out_dir, ".")
    stem = f"{instance.name}.{args.alg}"
    atomic_write(out / f"{stem}.tour",
                 write_tour(instance.name, report.best_tour.order, report.final_best))
    atomic_write(out / f"{stem}.csv", report.to_csv())
    if report.elite_length is not None:
        print(f"elite length {report.elite_length:.6f} "
              f"(stage one {report.stage_one_ms:.0f} ms)")
    print(f"initial best {report.initial_best:.6f}")
    print(f"final length {report.final_best:.6f}")
    if instance.known_optimum:
        print(f"ratio to optimum {report.final_best / instance.known_optimum:.4f}")
    return 0


def cmd_bench(args) -> int:
    if args.preset == "full":
        args.pop, args.iters, args.trials, args.k = 100, 500, 30, 20
    cfg = BenchConfig(
        instances=args.inst, algorithms=args.algs, trials=args.trials,
        evo=_evo_config(args), k=args.k, subsolver=args.subsolver,
        checkpoint=args.checkpoint, decode=args.decode,
        out_dir=str(_out_dir(args.out_dir, "bench_out")), master_seed=args.seed,
        workers=args.workers, sidecar=args.sidecar, polish=args.polish)
    cells, ok = run_bench(cfg)
    for c in cells:
        print(f"{c.instance:>16} {c.algorithm:>10} mean {c.mean:12.4f} "
              f"optimal {c.optimal:12.4f} std {c.std:10.4f}"
              + (f" FAILED {c.failures}" if c.failures else ""))
    return 0 if ok else 1


def cmd_check(args) -> int:
    problems = check_dir(args.dir)
    for p in problems:
        print(p)
    print("consistent" if not problems else f"{len(problems)} discrepancies")
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cctsp")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the pointer network")
    p.add_argument("--preset", default="desk", choices=["full", "desk", "reduced"])
    p.add_argument("--steps", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--embed", type=int)
    p.add_argument("--n-cities", type=int)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--decay-every", type=int, default=5000)
    p.add_argument("--decay-factor", type=float, default=0.96)
    p.add_argument("--clip", type=float, default=2.0, help="global grad norm, <=0 disables")
    p.add_argument("--eval-every", type=int, default=100)
    p.add_argument("--eval-size", type=int, default=256)
    p.add_argument("--normalize-advantage", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="training log CSV (default: train_log.csv next to --out)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("solve", help="solve one instance")
    p.add_argument("--inst", required=True, help="TSPLIB file or uniform:N:SEED")
    p.add_argument("--alg", default="ccpnrl-ga", choices=ALGORITHMS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir")
    _evo_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="instances x algorithms x trials")
    p.add_argument("--inst", nargs="+", required=True)
    p.add_argument("--algs", nargs="+", default=list(ALGORITHMS), choices=ALGORITHMS)
    p.add_argument("--trials", type=int, default=30)
    p.add_argument("--preset", choices=["full"])
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir")
    _evo_args(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("check", help="recompute a bench summary from its trial files")
    p.add_argument("dir")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"cctsp: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

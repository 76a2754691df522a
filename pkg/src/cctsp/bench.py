"""Instances x algorithms x trials, with CSV output.

Output layout under ``out_dir``::

    summary.csv                         one row per (instance, algorithm)
    manifest.json                       flags, seeds, versions
    curves/<instance>/<alg>/trial_NN.csv  TrialReport.to_csv(wall_clock=False)
    timings.csv                         instance,algorithm,trial,seed,wall_ms,stage_one_ms

Trial seeds are ``blake2b("{master}|{instance}|{algorithm}|{trial}")`` read
as a little-endian 64-bit integer, so the master seed fixes every run.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import platform
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .core import RngStream, TspInstance, generate_uniform_instance, read_tsplib
from .evo import ALGORITHMS, EvoConfig, TrialReport, run_algorithm
from .nn.pointer import DecodeMode

__all__ = [
    "BenchConfig",
    "CellSummary",
    "trial_seed",
    "load_instance",
    "make_solver",
    "run_bench",
    "summarize_dir",
    "check_dir",
    "atomic_write",
]

log = logging.getLogger(__name__)


def trial_seed(master: int, instance: str, algorithm: str, trial: int) -> int:
    text = f"{master}|{instance}|{algorithm}|{trial}".encode()
    return int.from_bytes(hashlib.blake2b(text, digest_size=8).digest(), "little")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def load_instance(spec: str, sidecar: str | None = None) -> TspInstance:
    """``uniform:N:SEED`` generates an instance; anything else is a path."""
    if spec.startswith("uniform:"):
        _, n, seed = spec.split(":")
        return generate_uniform_instance(int(n), RngStream(int(seed)),
                                         name=f"uniform{n}_s{seed}")
    return read_tsplib(spec, sidecar)


@lru_cache(maxsize=4)
def _load_model(checkpoint: str):
    from .nn.train import load_checkpoint

    actor, _, _ = load_checkpoint(checkpoint)
    return actor


def make_solver(name: str, checkpoint: str | None = None, decode: str = "greedy",
                samples: int = 16):
    from .pipeline import PtrNetSolver, make_subsolver

    if name == "ptrnet":
        if not checkpoint:
            raise ValueError("the ptrnet sub-solver needs --checkpoint")
        return PtrNetSolver(_load_model(str(checkpoint)), DecodeMode(decode), samples,
                            checkpoint=Path(checkpoint).name)
    return make_subsolver(name)


@dataclass
class BenchConfig:
    instances: list[str]
    algorithms: list[str] = field(default_factory=lambda: list(ALGORITHMS))
    trials: int = 30
    evo: EvoConfig = field(default_factory=EvoConfig)
    k: int = 20
    subsolver: str = "ptrnet"
    checkpoint: str | None = None
    decode: str = "greedy"
    out_dir: str = "bench_out"
    master_seed: int = 0
    workers: int = 1
    sidecar: str | None = None
    polish: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}")
        for spec in self.instances:
            if not spec.startswith("uniform:") and not Path(spec).exists():
                raise FileNotFoundError(spec)
        if ("ccpnrl-ga" in self.algorithms and self.subsolver == "ptrnet"
                and not (self.checkpoint and Path(self.checkpoint).exists())):
            raise FileNotFoundError(f"checkpoint {self.checkpoint!r} not found")


@dataclass
class CellSummary:
    instance: str
    algorithm: str
    trials: int
    mean: float
    optimal: float
    std: float
    mean_wall_ms: float
    mean_initial: float
    known_optimum: float | None = None
    failures: int = 0

    FIELDS = ("instance", "algorithm", "trials", "mean", "optimal", "std",
              "mean_wall_ms", "mean_initial", "known_optimum", "failures")

    @classmethod
    def from_reports(cls, instance: TspInstance, algorithm: str,
                     finals: list[float], initials: list[float], walls: list[float],
                     failures: int = 0) -> "CellSummary":
        return cls(instance.name if isinstance(instance, TspInstance) else instance,
                   algorithm, len(finals),
                   float(np.mean(finals)) if finals else float("nan"),
                   float(np.min(finals)) if finals else float("nan"),
                   float(statistics.pstdev(finals)) if finals else float("nan"),
                   float(np.mean(walls)) if walls else float("nan"),
                   float(np.mean(initials)) if initials else float("nan"),
                   getattr(instance, "known_optimum", None), failures)

    def row(self) -> list:
        return [getattr(self, f) if getattr(self, f) is not None else ""
                for f in self.FIELDS]


def _run_trial(task):
    spec, sidecar, alg, trial, cfg = task
    instance = load_instance(spec, sidecar)
    seed = trial_seed(cfg.master_seed, instance.name, alg, trial)
    solver = None
    if alg == "ccpnrl-ga":
        solver = make_solver(cfg.subsolver, cfg.checkpoint, cfg.decode)
    report = run_algorithm(alg, instance, cfg.evo, RngStream(seed), solver, cfg.k,
                           cfg.polish)
    return report


def _summary_csv(cells: list[CellSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CellSummary.FIELDS)
    for c in cells:
        w.writerow([repr(v) if isinstance(v, float) else v for v in c.row()])
    return buf.getvalue()


def run_bench(cfg: BenchConfig) -> tuple[list[CellSummary], bool]:
    """Run every cell; returns the summaries and whether all trials
    succeeded. A failing trial is logged and counted, the rest go on."""
    out = Path(cfg.out_dir)
    instances = [load_instance(s, cfg.sidecar) for s in cfg.instances]
    tasks = [(spec, cfg.sidecar, alg, t, cfg)
             for spec in cfg.instances for alg in cfg.algorithms for t in range(cfg.trials)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            futures = [pool.submit(_run_trial, t) for t in tasks]
            results = []
            for f in futures:
                try:
                    results.append(f.result())
                except Exception as exc:  # recorded per cell below
                    results.append(exc)
    else:
        results = []
        for t in tasks:
            try:
                results.append(_run_trial(t))
            except Exception as exc:
                results.append(exc)

    by_spec = dict(zip(cfg.instances, instances))
    cells = []
    timing = ["instance,algorithm,trial,seed,wall_ms,stage_one_ms"]
    ok = True
    grouped: dict[tuple[str, str], list] = {}
    for (spec, _, alg, trial, _), res in zip(tasks, results):
        grouped.setdefault((spec, alg), []).append((trial, res))
    for (spec, alg), runs in grouped.items():
        inst = by_spec[spec]
        finals, initials, walls, failures = [], [], [], 0
        for trial, res in runs:
            if isinstance(res, Exception):
                failures += 1
                ok = False
                log.error("%s/%s trial %d failed: %s", inst.name, alg, trial, res)
                continue
            res: TrialReport
            atomic_write(out / "curves" / inst.name / alg / f"trial_{trial:02d}.csv",
                         res.to_csv(wall_clock=False))
            finals.append(res.final_best)
            initials.append(res.initial_best)
            walls.append(res.wall_ms)
            stage = "" if res.stage_one_ms is None else f"{res.stage_one_ms:.3f}"
            timing.append(f"{inst.name},{alg},{trial},{res.seed},{res.wall_ms:.3f},{stage}")
        cells.append(CellSummary.from_reports(inst, alg, finals, initials, walls, failures))
    atomic_write(out / "summary.csv", _summary_csv(cells))
    atomic_write(out / "timings.csv", "\n".join(timing) + "\n")
    manifest = {
        "config": asdict(cfg),
        "trial_seed": "blake2b('{master}|{instance}|{algorithm}|{trial}', 8 bytes, little-endian)",
        "seeds": {f"{i.name}|{a}|{t}": trial_seed(cfg.master_seed, i.name, a, t)
                  for i in instances for a in cfg.algorithms for t in range(cfg.trials)},
        "versions": {"python": platform.python_version(), "numpy": np.__version__},
        "complete": ok,
    }
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=2, default=str))
    return cells, ok


def _read_trial(path: Path) -> tuple[float, float]:
    """``(initial_best, final_best)`` from one curve file."""
    lines = path.read_text(encoding="utf-8").splitlines()
    initial = float(lines[1].split(",")[1])
    final = float(lines[-1].split(",")[1])
    return initial, final


def summarize_dir(out_dir: str | Path) -> dict[tuple[str, str], dict]:
    """Recompute per-cell statistics from the trial files alone."""
    stats = {}
    for cell in sorted(Path(out_dir, "curves").glob("*/*")):
        vals = [_read_trial(p) for p in sorted(cell.glob("trial_*.csv"))]
        finals = [f for _, f in vals]
        stats[(cell.parent.name, cell.name)] = {
            "trials": len(finals), "mean": float(np.mean(finals)),
            "optimal": float(np.min(finals)), "std": float(statistics.pstdev(finals)),
            "mean_initial": float(np.mean([i for i, _ in vals])),
        }
    return stats


def check_dir(out_dir: str | Path, rel_tol: float = 1e-12) -> list[str]:
    """Compare summary.csv with statistics recomputed from trial files.
    Returns a list of discrepancies (empty when consistent)."""
    recomputed = summarize_dir(out_dir)
    problems = []
    with open(Path(out_dir, "summary.csv"), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            key = (row["instance"], row["algorithm"])
            if key not in recomputed:
                problems.append(f"{key}: no trial files")
                continue
            ref = recomputed[key]
            if int(row["trials"]) != ref["trials"]:
                problems.append(f"{key}: trials {row['trials']} vs {ref['trials']} files")
            for name in ("mean", "optimal", "std", "mean_initial"):
                a, b = float(row[name]), ref[name]
                if abs(a - b) > rel_tol * max(1.0, abs(b)):
                    problems.append(f"{key}: {name} {a} vs recomputed {b}")
    return problems

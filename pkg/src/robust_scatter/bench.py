"""Benchmark harness: seeded replications, iteration counts and wall times.

A benchmark sweeps the product of data settings x families x algorithms.
Within a replication every algorithm and family consumes the identical
dataset (paired comparison), simulated from a seed derived from
(master seed, setting index, replication), so reports are reproducible
except for the wall-time fields regardless of worker scheduling.
Replications run in parallel processes; ROBUST_SCATTER_THREADS caps the
worker count and 1 forces serial execution.
"""

from __future__ import annotations

import csv
import json
import os
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .objective import WeightedSample
from .rho import RhoFamily
from .simulate import SimSpec, simulate
from .solver import (
    Algorithm,
    SolverConfig,
    estimate_location_scatter,
    estimate_scatter,
)
from .symmetrized import PairMode, estimate_symmetrized

__all__ = [
    "BenchConfig",
    "BenchReport",
    "CellResult",
    "read_report",
    "run_benchmark",
    "worker_count",
    "write_report",
    "write_report_csv",
]

THREADS_ENV = "ROBUST_SCATTER_THREADS"

_TASKS = ("scatter", "location", "symmetrized")


@dataclass(frozen=True)
class BenchConfig:
    """One benchmark sweep.

    ``sims`` are the data settings (their own seed fields contribute to
    the derived per-replication seeds), ``nus`` the family parameters, and
    ``algorithms`` the solvers to compare on each shared dataset.
    """

    sims: tuple[SimSpec, ...]
    nus: tuple[float, ...]
    algorithms: tuple[Algorithm, ...]
    task: str = "scatter"
    replications: int = 100
    seed: int = 0
    delta: float = 1e-7
    max_iter: int | None = None
    mode: PairMode = PairMode.AUTO
    prewhiten: bool = True
    deterministic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "sims", tuple(self.sims))
        object.__setattr__(self, "nus", tuple(float(v) for v in self.nus))
        object.__setattr__(
            self, "algorithms", tuple(Algorithm(a) for a in self.algorithms)
        )
        object.__setattr__(self, "mode", PairMode(self.mode))
        if self.task not in _TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if self.task == "location" and any(nu < 1 for nu in self.nus):
            raise ValueError("location task requires nu >= 1")
        if self.task == "symmetrized" and any(
            a is not Algorithm.PN for a in self.algorithms
        ):
            raise ValueError("the symmetrized estimator always runs pn")


@dataclass(frozen=True)
class CellResult:
    """Aggregates for one (data setting x family x algorithm) cell.

    Iteration statistics cover converged replications only; failures show
    up in ``non_converged``.  Per-replication values are kept so paired
    properties (e.g. pn beating fp on every dataset) stay checkable from
    the report alone.
    """

    task: str
    model: str
    n: int
    q: int
    nu: float
    algorithm: str
    replications: int
    converged: int
    non_converged: int
    mean_iterations: float | None
    iqr_iterations: float | None
    mean_time_ms: float | None
    iqr_time_ms: float | None
    iterations_by_rep: tuple = ()
    times_ms_by_rep: tuple = ()
    converged_by_rep: tuple = ()


@dataclass(frozen=True)
class BenchReport:
    schema_version: int
    config: dict
    environment: dict
    cells: tuple[CellResult, ...]


def worker_count(deterministic: bool = False) -> int:
    """Worker cap: ROBUST_SCATTER_THREADS, else the CPU count; 1 if deterministic."""
    if deterministic:
        return 1
    raw = os.environ.get(THREADS_ENV)
    if raw is not None:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def _dataset_seed(master: int, sim: SimSpec, sim_index: int, rep: int) -> int:
    ss = np.random.SeedSequence((master, sim.seed, sim_index, rep))
    return int(ss.generate_state(1, np.uint64)[0])


def _run_replication(config: BenchConfig, sim_index: int, rep: int) -> list[dict]:
    """All (nu x algorithm) runs of one replication on one shared dataset."""
    sim = config.sims[sim_index]
    data_seed = _dataset_seed(config.seed, sim, sim_index, rep)
    X = simulate(replace(sim, seed=data_seed))
    records = []
    for nu in config.nus:
        family = RhoFamily(nu, sim.q)
        for algo in config.algorithms:
            solver_cfg = SolverConfig(
                delta=config.delta,
                max_iter=config.max_iter,
                algorithm=algo,
                deterministic_reduction=config.deterministic,
            )
            iterations = None
            converged = False
            t0 = time.perf_counter()
            try:
                if config.task == "scatter":
                    fit = estimate_scatter(
                        WeightedSample.uniform(X), family, solver_cfg
                    )
                elif config.task == "location":
                    fit = estimate_location_scatter(
                        WeightedSample.uniform(X), family, solver_cfg
                    )
                else:
                    fit = estimate_symmetrized(
                        X,
                        family,
                        solver_cfg,
                        mode=config.mode,
                        prewhiten=config.prewhiten,
                        rng=np.random.SeedSequence(
                            (config.seed, sim.seed, sim_index, rep, 1)
                        ).generate_state(1, np.uint64)[0],
                    )
                iterations = fit.iterations
                converged = fit.converged
            except (ValueError, OverflowError, np.linalg.LinAlgError):
                pass
            elapsed_ms = (time.perf_counter() - t0) * 1e3
            records.append(
                {
                    "sim_index": sim_index,
                    "rep": rep,
                    "nu": nu,
                    "algorithm": Algorithm(algo).value,
                    "iterations": iterations,
                    "time_ms": elapsed_ms,
                    "converged": converged,
                }
            )
    return records


def _replication_worker(args) -> list[dict]:
    return _run_replication(*args)


def _environment(workers: int) -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "platform": platform.platform(),
        "machine": platform.machine(),
        "cpu_count": os.cpu_count(),
        "workers": workers,
        "threads_env": os.environ.get(THREADS_ENV),
    }


def _config_echo(config: BenchConfig) -> dict:
    echo = asdict(config)
    echo["sims"] = [asdict(s) for s in config.sims]
    echo["algorithms"] = [a.value for a in config.algorithms]
    echo["mode"] = config.mode.value
    # canonicalize to JSON types so reports compare equal after round trips
    return json.loads(json.dumps(echo))


def _iqr(values: np.ndarray) -> float:
    return float(np.percentile(values, 75) - np.percentile(values, 25))


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Run the sweep and aggregate per-cell statistics."""
    tasks = [
        (config, si, rep)
        for si in range(len(config.sims))
        for rep in range(config.replications)
    ]
    workers = worker_count(config.deterministic)
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(_replication_worker, tasks, chunksize=1))
    else:
        batches = [_run_replication(*t) for t in tasks]
    records = [rec for batch in batches for rec in batch]

    cells = []
    for si, sim in enumerate(config.sims):
        for nu in config.nus:
            for algo in config.algorithms:
                sub = sorted(
                    (
                        r
                        for r in records
                        if r["sim_index"] == si
                        and r["nu"] == nu
                        and r["algorithm"] == Algorithm(algo).value
                    ),
                    key=lambda r: r["rep"],
                )
                iters = [r["iterations"] if r["converged"] else None for r in sub]
                times = [r["time_ms"] for r in sub]
                conv = [r["converged"] for r in sub]
                ok = np.array([i for i in iters if i is not None], dtype=float)
                ok_t = np.array(
                    [t for t, c in zip(times, conv) if c], dtype=float
                )
                cells.append(
                    CellResult(
                        task=config.task,
                        model=sim.model,
                        n=sim.n,
                        q=sim.q,
                        nu=nu,
                        algorithm=Algorithm(algo).value,
                        replications=len(sub),
                        converged=int(sum(conv)),
                        non_converged=int(len(sub) - sum(conv)),
                        mean_iterations=float(ok.mean()) if ok.size else None,
                        iqr_iterations=_iqr(ok) if ok.size else None,
                        mean_time_ms=float(ok_t.mean()) if ok_t.size else None,
                        iqr_time_ms=_iqr(ok_t) if ok_t.size else None,
                        iterations_by_rep=tuple(iters),
                        times_ms_by_rep=tuple(times),
                        converged_by_rep=tuple(conv),
                    )
                )
    return BenchReport(
        schema_version=1,
        config=_config_echo(config),
        environment=_environment(workers),
        cells=tuple(cells),
    )


def write_report(report: BenchReport, path: str) -> None:
    payload = {
        "schema_version": report.schema_version,
        "config": report.config,
        "environment": report.environment,
        "cells": [asdict(c) for c in report.cells],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def read_report(path: str) -> BenchReport:
    with open(path) as fh:
        payload = json.load(fh)
    cells = []
    for c in payload["cells"]:
        c = dict(c)
        for key in ("iterations_by_rep", "times_ms_by_rep", "converged_by_rep"):
            c[key] = tuple(c[key])
        cells.append(CellResult(**c))
    return BenchReport(
        schema_version=payload["schema_version"],
        config=payload["config"],
        environment=payload["environment"],
        cells=tuple(cells),
    )


_CSV_FIELDS = [
    "task", "model", "n", "q", "nu", "algorithm", "replications",
    "converged", "non_converged", "mean_iterations", "iqr_iterations",
    "mean_time_ms", "iqr_time_ms",
]


def write_report_csv(report: BenchReport, path: str) -> None:
    """Flat per-cell summary without the per-replication vectors."""
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
        writer.writeheader()
        for cell in report.cells:
            row = asdict(cell)
            writer.writerow({k: row[k] for k in _CSV_FIELDS})

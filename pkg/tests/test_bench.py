import dataclasses

import numpy as np
import pytest

from robust_scatter import (
    Algorithm,
    BenchConfig,
    SimSpec,
    read_report,
    run_benchmark,
    write_report,
    write_report_csv,
)
from robust_scatter.bench import worker_count


def small_config(**overrides):
    base = dict(
        sims=(SimSpec(40, 2), SimSpec(30, 3, model="cauchy")),
        nus=(1.0,),
        algorithms=(Algorithm.FP, Algorithm.PN),
        task="scatter",
        replications=3,
        seed=11,
        deterministic=True,
    )
    base.update(overrides)
    return BenchConfig(**base)


def strip_times(report):
    cells = []
    for cell in report.cells:
        cells.append(
            dataclasses.replace(
                cell, mean_time_ms=None, iqr_time_ms=None, times_ms_by_rep=()
            )
        )
    return tuple(cells)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="task"):
            small_config(task="warp")
        with pytest.raises(ValueError, match="replications"):
            small_config(replications=0)
        with pytest.raises(ValueError, match="nu >= 1"):
            small_config(task="location", nus=(0.5,))
        with pytest.raises(ValueError, match="symmetrized"):
            small_config(task="symmetrized",
                         algorithms=(Algorithm.FP,))

    def test_coercion(self):
        cfg = small_config(algorithms=("fp", "pn"), mode="seq")
        assert cfg.algorithms == (Algorithm.FP, Algorithm.PN)


class TestRun:
    def test_structure_and_convergence(self):
        report = run_benchmark(small_config())
        assert len(report.cells) == 4
        for cell in report.cells:
            assert cell.replications == 3
            assert cell.converged == 3
            assert cell.non_converged == 0
            assert cell.mean_iterations > 0
            assert len(cell.iterations_by_rep) == 3

    def test_reproducible_except_wall_time(self):
        a = run_benchmark(small_config())
        b = run_benchmark(small_config())
        assert strip_times(a) == strip_times(b)
        assert a.config == b.config

    def test_paired_datasets_across_algorithm_sets(self):
        wide = run_benchmark(small_config())
        narrow = run_benchmark(small_config(algorithms=(Algorithm.FP,)))
        wide_fp = [c for c in wide.cells if c.algorithm == "fp"]
        narrow_fp = list(narrow.cells)
        for w, n in zip(wide_fp, narrow_fp):
            assert w.iterations_by_rep == n.iterations_by_rep

    def test_non_convergence_recorded_not_raised(self):
        report = run_benchmark(small_config(max_iter=1,
                                            algorithms=(Algorithm.FP,)))
        for cell in report.cells:
            assert cell.non_converged == 3
            assert cell.mean_iterations is None
            assert cell.iterations_by_rep == (None, None, None)

    def test_location_task(self):
        cfg = small_config(
            sims=(SimSpec(50, 2),), nus=(2.0,),
            algorithms=(Algorithm.FP3, Algorithm.PN), task="location",
        )
        report = run_benchmark(cfg)
        assert {c.algorithm for c in report.cells} == {"fp3", "pn"}
        for cell in report.cells:
            assert cell.converged == 3

    def test_symmetrized_task(self):
        cfg = small_config(
            sims=(SimSpec(30, 2),), algorithms=(Algorithm.PN,),
            task="symmetrized",
        )
        report = run_benchmark(cfg)
        (cell,) = report.cells
        assert cell.converged == 3

    def test_parallel_matches_serial(self, monkeypatch):
        serial = run_benchmark(small_config())
        monkeypatch.setenv("ROBUST_SCATTER_THREADS", "2")
        parallel = run_benchmark(small_config(deterministic=False))
        assert strip_times(serial) == strip_times(parallel)


class TestReportIO:
    def test_round_trip(self, tmp_path):
        report = run_benchmark(small_config())
        path = tmp_path / "report.json"
        write_report(report, str(path))
        assert read_report(str(path)) == report

    def test_csv_rows(self, tmp_path):
        report = run_benchmark(small_config())
        path = tmp_path / "report.csv"
        write_report_csv(report, str(path))
        lines = path.read_text().splitlines()
        assert len(lines) == 1 + len(report.cells)


class TestWorkerCount:
    def test_deterministic_forces_serial(self):
        assert worker_count(True) == 1

    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("ROBUST_SCATTER_THREADS", "3")
        assert worker_count() == 3
        monkeypatch.setenv("ROBUST_SCATTER_THREADS", "bogus")
        assert worker_count() >= 1
        monkeypatch.delenv("ROBUST_SCATTER_THREADS")
        assert worker_count() >= 1

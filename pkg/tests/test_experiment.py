import json
import logging

import numpy as np
import pytest

from crossworld import ExperimentConfig, coverage_width_loss, gen_synthetic, write_csv
from crossworld.config import GridSettings, OutputSettings
from crossworld.datagen import COPULAS, MARGINALS
from crossworld.evaluation import results_frame, summarize
from crossworld.experiment import (
    iter_experiment_async,
    iter_jobs,
    run_experiment,
    run_experiment_async,
    run_replication,
    write_run,
)
from crossworld.learners import LearnerParams


def _config(**changes) -> ExperimentConfig:
    config = ExperimentConfig.from_dict(
        {
            "experiment": {"replications": 1, "seed": 5, "n_test": 200},
            "grid": {"rho": [0.5], "n": [500]},
            "learner": {"trees": 30, "min_leaf": 5},
            "bootstrap": {"B": 50, "trees": 10},
            "methods": ["cw", "naive"],
        }
    )
    return config.replace(**changes)


def test_jobs_follow_the_grid_order() -> None:
    config = _config(
        replications=2, grid=GridSettings(rho=(0.0, 1.0), n=(100, 200))
    )
    jobs = list(iter_jobs(config))
    assert [job.index for job in jobs] == list(range(8))
    assert [(j.cell.rho_true, j.cell.n, j.cell.rep) for j in jobs[:4]] == [
        (0.0, 100, 0),
        (0.0, 100, 1),
        (0.0, 200, 0),
        (0.0, 200, 1),
    ]
    assert len({job.cell.seed for job in jobs}) == 8
    assert [j.cell.seed for j in iter_jobs(config)] == [j.cell.seed for j in jobs]
    assert jobs[5].cell.noise.rho.value == 1.0


def test_single_replication() -> None:
    config = _config()
    results = run_experiment(config)
    assert len(results) == 1
    result = results[0]
    assert result.n_test == 200
    assert [m.method for m in result.methods] == ["cw", "naive"]
    cw, naive = result.methods
    assert cw.ok and naive.ok
    assert cw.rho_used == 0.5 and naive.rho_used == -1.0
    assert 0.0 <= cw.coverage <= 1.0
    # CW at a non-negative rho is never wider than the naive interval
    assert cw.avg_width <= naive.avg_width
    assert cw.cw_loss is not None
    assert cw.runtime_ms is None


def test_runtime_is_recorded_on_request() -> None:
    config = _config(output=OutputSettings(record_runtime=True))
    result = run_experiment(config)[0]
    assert all(m.runtime_ms is not None and m.runtime_ms >= 0 for m in result.methods)


def test_failed_cell_is_recorded() -> None:
    config = _config(grid=GridSettings(rho=(0.0,), n=(6,)))
    result = run_replication(config, next(iter_jobs(config)).cell)
    assert result.error is not None
    assert all(m.status.startswith("failed: ") for m in result.methods)
    assert [m.rho_used for m in result.methods] == [0.0, -1.0]


def test_library_errors_fail_only_their_method(monkeypatch, caplog) -> None:
    def overflow(band1, band0):
        raise FloatingPointError("overflow in band widths")

    monkeypatch.setattr("crossworld.pipeline.naive_ite_intervals", overflow)
    config = _config()
    with caplog.at_level(logging.WARNING, logger="crossworld.experiment"):
        result = run_replication(config, next(iter_jobs(config)).cell)
    cw, naive = result.methods
    assert cw.ok and cw.coverage is not None
    assert naive.status == "failed: FloatingPointError"
    assert naive.coverage is None and naive.cw_loss is None
    (record,) = [r for r in caplog.records if "naive failed" in r.getMessage()]
    assert record.exc_info is not None


def test_learner_errors_fail_the_whole_cell(monkeypatch) -> None:
    def broken_learner(*args, **kwargs):
        raise RuntimeError("learner crashed")

    monkeypatch.setattr("crossworld.pipeline.fit_arm_models", broken_learner)
    config = _config(replications=2)
    results = run_experiment(config, threads=2)
    assert len(results) == 2
    for result in results:
        assert result.error == "learner crashed"
        assert [m.status for m in result.methods] == ["failed: RuntimeError"] * 2


def test_results_are_reproducible(tmp_path) -> None:
    paths = []
    for name in ("a", "b"):
        out = OutputSettings(results=str(tmp_path / name / "results.csv"))
        report = write_run(_config(replications=2, output=out), threads=2)
        assert report.rows == 4 and report.failed == 0
        paths.append(report)
    first, second = (
        open(r.results_path, encoding="utf-8").read() for r in paths
    )
    assert first == second

    manifest = json.loads(open(paths[0].manifest_path, encoding="utf-8").read())
    assert manifest["rows"] == 4
    assert manifest["config"]["methods"]["naive"]["rho_used"] == "fixed(-1)"
    assert ExperimentConfig.from_dict(manifest["config"]).replications == 2
    assert open(paths[0].summary_path, encoding="utf-8").readline().startswith("method,")


def test_csv_source(tmp_path) -> None:
    data = gen_synthetic(700, 2, 0.0, seed=1)
    path = tmp_path / "data.csv"
    write_csv(data, path)
    config = _config(
        source=str(path),
        grid=GridSettings(rho=(0.0,)),
        learner=LearnerParams(trees=30, min_leaf=5),
    )
    result = run_experiment(config)[0]
    assert (result.cell.d, result.cell.n) == (2, 700)
    assert result.n_test == 200
    assert all(m.ok and m.coverage is not None for m in result.methods)


@pytest.mark.asyncio
async def test_async_results_arrive_in_grid_order() -> None:
    config = _config(replications=3)
    reps = [result.cell.rep async for result in iter_experiment_async(config, threads=3)]
    assert reps == [0, 1, 2]

    results = await run_experiment_async(config, threads=2)
    widths = [r.methods[0].avg_width for r in results]
    again = await run_experiment_async(config, threads=1)
    np.testing.assert_array_equal(widths, [r.methods[0].avg_width for r in again])


@pytest.mark.slow
def test_cw_covers_at_the_true_rho() -> None:
    config = ExperimentConfig.from_dict(
        {
            "experiment": {"replications": 20, "seed": 1, "n_test": 1000},
            "grid": {"rho": [0.0, 0.5], "n": [2000]},
            "learner": {"trees": 200},
            "methods": ["cw", "naive"],
        }
    )
    results = run_experiment(config, threads=4)
    for rho in (0.0, 0.5):
        cov = [r.method("cw").coverage for r in results if r.cell.rho_true == rho]
        assert np.mean(cov) >= 0.85


RHO_GRID = (-1.0, -0.5, 0.0, 0.5, 1.0)
RANKED = ("cw+ci", "cw", "naive", "sqrt-naive", "cmc")


@pytest.fixture(scope="module")
def rho_grid_run():
    config = ExperimentConfig.from_dict(
        {
            "experiment": {"replications": 20, "seed": 2, "n_test": 1000},
            "grid": {"rho": list(RHO_GRID), "d": [1], "n": [2000]},
            "methods": {
                "cw+ci": {},
                "cw": {},
                "cw-mis": {"method": "cw", "rho_used": "misspecified(0.25)"},
                "naive": {},
                "sqrt-naive": {},
                "cmc": {},
            },
        }
    )
    results = run_experiment(config, threads=4)
    assert all(m.ok for r in results for m in r.methods)
    summary = summarize(results_frame(results), config.alpha)
    return results, summary.set_index(["method", "rho_true"])


@pytest.mark.slow
def test_rho_grid_coverage_and_width(rho_grid_run) -> None:
    _, summary = rho_grid_run
    for rho in RHO_GRID:
        assert 0.85 <= summary.loc[("cw+ci", rho), "coverage"] <= 0.96
        if rho >= 0.5:
            assert summary.loc[("naive", rho), "coverage"] >= 0.93
    assert (
        summary.loc[("cw+ci", 1.0), "avg_width"]
        <= 0.5 * summary.loc[("naive", 1.0), "avg_width"]
    )
    excess = [
        summary.loc[("cw+ci", rho), "avg_width"] / summary.loc[("cw", rho), "avg_width"]
        for rho in RHO_GRID
    ]
    assert np.mean(excess) <= 1.15
    # c = 0 at rho = -1
    assert excess[0] == pytest.approx(1.0)


@pytest.mark.slow
def test_shifted_rho_gives_supersets(rho_grid_run) -> None:
    results, _ = rho_grid_run
    for result in results:
        exact, shifted = result.method("cw"), result.method("cw-mis")
        assert (shifted.intervals.lo <= exact.intervals.lo).all()
        assert (shifted.intervals.hi >= exact.intervals.hi).all()
        assert shifted.coverage >= exact.coverage


@pytest.mark.slow
def test_cw_ci_has_the_lowest_loss_at_the_extremes(rho_grid_run) -> None:
    _, summary = rho_grid_run
    for rho in (-1.0, 1.0):
        rows = summary.xs(rho, level="rho_true").loc[list(RANKED)]
        wmin, wmax = rows["avg_width"].min(), rows["avg_width"].max()
        losses = {
            name: coverage_width_loss(row.avg_width, wmin, wmax, row.coverage, 0.1)
            for name, row in rows.iterrows()
        }
        best = min(loss for name, loss in losses.items() if name != "cw+ci")
        assert losses["cw+ci"] <= best + 1e-12


@pytest.mark.slow
def test_cw_coverage_holds_across_noise_laws() -> None:
    config = ExperimentConfig.from_dict(
        {
            "experiment": {"replications": 10, "seed": 3, "n_test": 1000},
            "grid": {
                "rho": [0.5],
                "d": [1],
                "n": [2000],
                "noise": [f"{m}/{c}" for m in MARGINALS for c in COPULAS],
            },
            "methods": ["cw"],
        }
    )
    summary = summarize(results_frame(run_experiment(config, threads=4)), config.alpha)
    assert len(summary) == 9
    assert summary["coverage"].between(0.85, 0.95).all()

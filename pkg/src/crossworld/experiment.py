"""Replication engine: generate, split, fit, build every method's intervals
on a held-out test set, score.
"""

import asyncio
import json
import logging
import os
import time
import typing as t
from dataclasses import dataclass

import numpy as np

from .cate import CateEstimate
from .config import ExperimentConfig
from .datagen import (
    Dataset,
    gen_semi_synthetic,
    gen_synthetic,
    load_csv,
    make_design,
    split_dataset,
)
from .evaluation import (
    ExperimentCell,
    ExperimentResult,
    MethodResult,
    ResultWriter,
    assign_cw_losses,
    results_frame,
    summarize,
)
from .exceptions import CrossworldError, InputError
from .pipeline import IntervalPipeline
from .seeding import Stream, as_generator, derive, to_int

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Job:
    index: int
    cell: ExperimentCell


def iter_jobs(
    config: ExperimentConfig, data: Dataset | None = None
) -> t.Iterator[Job]:
    """Grid cells times replications in a fixed order.  Seeds follow
    ``master -> cell -> replication``; a CSV source fixes ``d`` and ``n``.
    """
    if config.is_synthetic:
        dims, sizes = config.grid.d, config.grid.n
        noises = config.grid.noise
    else:
        if data is None:
            raise InputError("a CSV source needs its dataset")
        dims, sizes = (data.d,), (data.n,)
        noises = ("gaussian/gaussian",)

    index = 0
    cell_index = 0
    for rho in config.grid.rho:
        for d in dims:
            for n in sizes:
                for label in noises:
                    noise = config.grid.noise_spec(label, rho)
                    for rep in range(config.replications):
                        seed = to_int(derive(config.seed, cell_index, rep))
                        yield Job(index, ExperimentCell(rho, d, n, noise, rep, seed))
                        index += 1
                    cell_index += 1


def _synthetic_data(
    config: ExperimentConfig, cell: ExperimentCell
) -> tuple[Dataset, Dataset]:
    design = make_design(cell.d, derive(cell.seed, Stream.DESIGN))

    def draw(n: int, stream: Stream) -> Dataset:
        return gen_synthetic(
            n,
            cell.d,
            cell.rho_true,
            cell.noise,
            seed=derive(cell.seed, stream),
            design=design,
        )

    return draw(cell.n, Stream.TRAIN), draw(config.n_test, Stream.TEST)


def _csv_data(
    config: ExperimentConfig, cell: ExperimentCell, data: Dataset
) -> tuple[Dataset, Dataset]:
    if config.semi_synthetic:
        data = gen_semi_synthetic(
            data.X, data.T, cell.rho_true, seed=derive(cell.seed, Stream.TRAIN)
        )
    n_test = min(config.n_test, data.n // 2)
    order = as_generator(derive(cell.seed, Stream.TEST)).permutation(data.n)
    return data.subset(np.sort(order[n_test:])), data.subset(np.sort(order[:n_test]))


def run_replication(
    config: ExperimentConfig, cell: ExperimentCell, data: Dataset | None = None
) -> ExperimentResult:
    """Score every configured method on one replication.

    Failures never propagate: a method that raises is recorded with a
    ``failed`` status, and so is every method when the shared fitting fails.
    """
    logger.info("start %s", cell.describe())
    try:
        if config.is_synthetic:
            train, test = _synthetic_data(config, cell)
        else:
            assert data is not None
            train, test = _csv_data(config, cell, data)
        split = split_dataset(
            train, config.split_ratio, derive(cell.seed, Stream.SPLIT)
        )
        pipeline = IntervalPipeline(
            train,
            split,
            config.alpha,
            params=config.learner,
            bootstrap=config.bootstrap,
            cmc=config.cmc,
            methods=[m.method for m in config.methods],
            seed=cell.seed,
        )
    except Exception as e:
        logger.warning(
            "%s failed: %s",
            cell.describe(),
            e,
            exc_info=not isinstance(e, CrossworldError),
        )
        return ExperimentResult(
            cell,
            [
                MethodResult.failed(m.name, m.rho_used.resolve(cell.rho_true).value, e)
                for m in config.methods
            ],
            error=str(e),
        )

    ite = test.ite if test.has_counterfactuals else None
    cate: CateEstimate | None = None
    results = []
    for spec in config.methods:
        rho_used = spec.rho_used.resolve(cell.rho_true)
        started = time.perf_counter()
        try:
            if spec.method == "cw+ci" and cate is None:
                cate = pipeline.cate_ci(test.X)
            intervals = pipeline.predict(
                spec.method, test.X, rho_used, c=spec.c, c_rule=spec.c_rule, cate=cate
            )
        except Exception as e:
            logger.warning(
                "%s: %s failed: %s",
                cell.describe(),
                spec.name,
                e,
                exc_info=not isinstance(e, CrossworldError),
            )
            results.append(MethodResult.failed(spec.name, rho_used.value, e))
            continue
        elapsed = (time.perf_counter() - started) * 1000.0
        results.append(
            MethodResult.score(
                spec.name,
                rho_used.value,
                intervals,
                ite,
                runtime_ms=round(elapsed, 3) if config.output.record_runtime else None,
            )
        )
    if ite is None:
        logger.warning(
            "%s: test rows have no counterfactuals; coverage unavailable",
            cell.describe(),
        )
    result = ExperimentResult(cell, results, n_test=test.n)
    assign_cw_losses(result, config.alpha)
    logger.info("finish %s", cell.describe())
    return result


def _load_source(config: ExperimentConfig) -> Dataset | None:
    return None if config.is_synthetic else load_csv(config.source)


async def iter_experiment_async(
    config: ExperimentConfig, threads: int | None = None
) -> t.AsyncIterator[ExperimentResult]:
    """Run replications on up to ``threads`` worker threads, yielding results
    in grid order regardless of which finishes first.
    """
    data = _load_source(config)
    jobs = list(iter_jobs(config, data))
    limit = asyncio.Semaphore(threads or config.threads or 1)

    async def run(job: Job) -> ExperimentResult:
        async with limit:
            return await asyncio.to_thread(run_replication, config, job.cell, data)

    tasks = [asyncio.ensure_future(run(job)) for job in jobs]
    try:
        for task in tasks:
            yield await task
    finally:
        for task in tasks:
            task.cancel()


async def run_experiment_async(
    config: ExperimentConfig,
    threads: int | None = None,
    writer: ResultWriter | None = None,
) -> list[ExperimentResult]:
    results = []
    async for result in iter_experiment_async(config, threads):
        if writer is not None:
            writer.write(result)
        results.append(result)
    return results


def run_experiment(
    config: ExperimentConfig,
    threads: int | None = None,
    writer: ResultWriter | None = None,
) -> list[ExperimentResult]:
    """Synchronous wrapper around :func:`run_experiment_async`."""
    return asyncio.run(run_experiment_async(config, threads, writer))


@dataclass(frozen=True)
class RunReport:
    results_path: str
    summary_path: str
    manifest_path: str
    rows: int
    failed: int
    wall_time_s: float
    summary: t.Any


async def write_run_async(
    config: ExperimentConfig, threads: int | None = None
) -> RunReport:
    """Run ``config`` and write its results CSV, summary CSV and manifest."""
    from . import __version__

    output = config.output
    started = time.perf_counter()
    with ResultWriter(output.results) as writer:
        results = await run_experiment_async(config, threads, writer)
    wall = time.perf_counter() - started

    frame = results_frame(results)
    summary = summarize(frame, config.alpha)
    for path in (output.summary_path, output.manifest_path):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
    summary.to_csv(
        output.summary_path, index=False, float_format="%.10g", lineterminator="\n"
    )
    failed = int((frame["status"] != "ok").sum())
    manifest = {
        "crossworld_version": __version__,
        "config": config.to_dict(),
        "results": output.results,
        "summary": output.summary_path,
        "rows": len(frame),
        "failed": failed,
        "wall_time_s": round(wall, 3),
    }
    with open(output.manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return RunReport(
        output.results,
        output.summary_path,
        output.manifest_path,
        len(frame),
        failed,
        wall,
        summary,
    )


def write_run(config: ExperimentConfig, threads: int | None = None) -> RunReport:
    """Synchronous wrapper around :func:`write_run_async`."""
    return asyncio.run(write_run_async(config, threads))

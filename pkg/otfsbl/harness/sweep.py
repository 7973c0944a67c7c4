import asyncio
import csv
from asyncio import TaskGroup
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from logging import getLogger
from pathlib import Path
from typing import Sequence

import numpy as np

from otfsbl.config import ExperimentConfig, Scheme
from otfsbl.harness.trial import TrialResult, run_trial

logger = getLogger("harness")

CSV_HEADER = ("snr_db", "scheme", "metric", "value", "n_trials", "master_seed")
BCRB_SCHEME = "bcrb"


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    scheme: str
    metrics: dict[str, float]
    trials: int


def _mean(values: Sequence[float]) -> float:
    finite = np.asarray(values, dtype=float)
    finite = finite[~np.isnan(finite)]
    return float(np.mean(finite)) if finite.size else float("nan")


def _median(values: Sequence[float]) -> float:
    finite = np.asarray(values, dtype=float)
    finite = finite[~np.isnan(finite)]
    return float(np.median(finite)) if finite.size else float("nan")


def _failures(name: str, results: Sequence[TrialResult]) -> float:
    return float(sum(name in result.failures for result in results))


def _scheme_metrics(scheme: Scheme, results: Sequence[TrialResult]) -> dict[str, float]:
    metrics = {}
    if scheme != Scheme.PERFECT_CSI:
        nmse = [result.nmse[scheme] for result in results]
        metrics["nmse_mean"] = _mean(nmse)
        metrics["nmse_median"] = _median(nmse)
    metrics["ser_mean"] = _mean([result.ser[scheme] for result in results])
    if scheme not in (Scheme.MMSE, Scheme.PERFECT_CSI):
        metrics["em_iters_mean"] = _mean([result.iterations[scheme] for result in results])
    metrics["failures"] = _failures(scheme.value, results)
    return metrics


def aggregate(config: ExperimentConfig, results: Sequence[Sequence[TrialResult]]) -> list[SweepRow]:
    """Summarize trial results, ordered by SNR, then configured scheme, then the bound."""
    rows = []
    for snr_db, point in zip(config.snr_db, results):
        for scheme in config.schemes:
            rows.append(SweepRow(snr_db, scheme.value, _scheme_metrics(scheme, point), len(point)))
        rows.append(
            SweepRow(
                snr_db,
                BCRB_SCHEME,
                {
                    "bcrb": _mean([result.bcrb_normalized for result in point]),
                    "failures": _failures(BCRB_SCHEME, point),
                },
                len(point),
            )
        )
    return rows


async def collect_trials(config: ExperimentConfig, threads: int = 1) -> list[list[TrialResult]]:
    """Run every (SNR, trial) pair on a thread pool; results come back in grid order."""
    loop = asyncio.get_running_loop()
    total = len(config.snr_db) * config.trials
    completed = 0

    with ThreadPoolExecutor(max_workers=threads) as executor:

        async def trial(snr_index: int, trial_index: int) -> TrialResult:
            nonlocal completed
            result = await loop.run_in_executor(
                executor, run_trial, config, snr_index, trial_index
            )
            completed += 1
            if completed % max(total // 10, 1) == 0 or completed == total:
                logger.info("Completed %d of %d trials", completed, total)
            return result

        async with TaskGroup() as group:
            tasks = [
                [group.create_task(trial(s, t)) for t in range(config.trials)]
                for s in range(len(config.snr_db))
            ]
    return [[task.result() for task in point] for point in tasks]


def write_csv(rows: Sequence[SweepRow], master_seed: int, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            for metric, value in row.metrics.items():
                writer.writerow(
                    (f"{row.snr_db:g}", row.scheme, metric, f"{value:.9g}", row.trials, master_seed)
                )
    logger.info("Wrote %d result rows to %s", len(rows), path)


async def sweep(
    config: ExperimentConfig, threads: int = 1, output: Path | None = None
) -> list[SweepRow]:
    rows = aggregate(config, await collect_trials(config, threads))
    if output is not None:
        write_csv(rows, config.master_seed, output)
    return rows


def run_sweep(
    config: ExperimentConfig, threads: int = 1, output: Path | None = None
) -> list[SweepRow]:
    return asyncio.run(sweep(config, threads, output))

"""
Experiment runner.

A run is the grid of (strategy, seed, lambda) cells of a RunConfig. Cells are
independent and run on a thread pool; their rows are gathered, sorted
canonically and written by one writer, so outputs do not depend on
execution order.

Randomness is split into named streams per seed. The proposal batch of round
t comes from a stream keyed by (seed, t) only, so every strategy and every
lambda decides over identical individuals; decisions and updates draw from
a stream keyed by (seed, strategy, lambda).
"""

import csv
import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from functools import reduce
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .. import __version__
from ..config import get_settings
from ..errors import ConfigError, IngestionError
from ..schemas import EnvironmentName, RunConfig, Strategy
from .environments import (
    CollectedData,
    Environment,
    Population,
    make_empirical_env,
    make_score_table_env,
    make_synthetic_env,
)
from .ingestion import load_dataset_csv, load_score_table_csv
from .learning import consequential_learning, initial_parameters
from .metrics import EvalSample, MetricsRecord, draw_eval_sample
from .oracle import DiscreteEnv
from .policies import FeatureMap
from .presets import standin_dataset, two_region_env

logger = logging.getLogger(__name__)

METRICS_HEADER = [
    "strategy", "seed", "lambda", "t",
    "utility", "effective_utility", "dp_violation", "eop_violation", "positives_collected",
]
METRIC_COLUMNS = METRICS_HEADER[4:]
GROUP_COLUMNS = ["strategy", "lambda", "t"]
DEPENDENCIES = ["numpy", "scipy", "pandas", "scikit-learn", "pydantic", "pydantic-settings", "tqdm"]

# Seed of the generated stand-in dataset; run seeds only change its split
STANDIN_DATA_SEED = 0


# ============ Random Streams ============

def _stable_key(part) -> int:
    digest = hashlib.sha256(str(part).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


class RandomStreams:
    """Named, independent generators derived from one run seed."""

    def __init__(self, seed: int):
        self.seed = seed

    def generator(self, *parts) -> np.random.Generator:
        entropy = [self.seed] + [_stable_key(p) for p in parts]
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def proposals(self, t: int) -> np.random.Generator:
        return self.generator("proposals", t)

    def decisions(self, strategy: Strategy) -> np.random.Generator:
        """Shared by every lambda of a strategy, so their cells see common noise."""
        return self.generator("decisions", Strategy(strategy).value)

    def initialization(self) -> np.random.Generator:
        return self.generator("init")

    def evaluation(self) -> np.random.Generator:
        return self.generator("eval")

    def split(self) -> np.random.Generator:
        return self.generator("split")


# ============ Environments ============

def build_environment(config: RunConfig, streams: RandomStreams) -> Environment:
    environment = config.environment
    if environment in (EnvironmentName.SETTING1, EnvironmentName.SETTING2):
        return make_synthetic_env(environment.value)
    if environment is EnvironmentName.TWO_REGION:
        return two_region_env()
    if environment is EnvironmentName.STANDIN_DATASET:
        return make_empirical_env(standin_dataset(seed=STANDIN_DATA_SEED), config.split_fraction, streams.split())
    if environment is EnvironmentName.DATASET:
        frame = load_dataset_csv(config.dataset_path)
        try:
            return make_empirical_env(frame, config.split_fraction, streams.split())
        except IngestionError as e:
            raise IngestionError(f"{config.dataset_path}: {e}") from e
    if environment is EnvironmentName.SCORE_TABLE:
        return make_score_table_env(load_score_table_csv(config.score_table_path, config.group_weights))
    raise ConfigError(f"unsupported environment '{environment}'")


def evaluation_sample(env: Environment, size: int, rng: np.random.Generator) -> EvalSample:
    """Exact support enumeration for discrete environments, a test set otherwise."""
    if isinstance(env, DiscreteEnv):
        return env.support_sample()
    return draw_eval_sample(env, size, rng)


# ============ Cells ============

@dataclass(frozen=True)
class Cell:
    strategy: Strategy
    seed: int
    lam: float

    @property
    def sort_key(self) -> Tuple[str, float, int]:
        return self.strategy.value, self.lam, self.seed


@dataclass
class CellResult:
    cell: Cell
    metrics: List[MetricsRecord]
    final: dict
    update_pool_sizes: List[int] = field(default_factory=list)
    proposal_digest: str = ""


@dataclass
class SeedContext:
    """Everything the cells of one seed share."""
    streams: RandomStreams
    env: Environment
    eval_sample: EvalSample
    fmap: FeatureMap
    proposals: Callable[[int], Population]
    initial: Optional[Tuple[np.ndarray, np.ndarray]]


@dataclass
class ExperimentResult:
    metrics_path: Path
    manifest_path: Path
    rows: int


def _seed_context(config: RunConfig, seed: int) -> SeedContext:
    streams = RandomStreams(seed)
    env = build_environment(config, streams)
    shared = config.experiment(seed, config.lambdas()[0])
    fmap = FeatureMap.from_settings(shared)
    eval_sample = evaluation_sample(env, config.eval_size, streams.evaluation())

    def proposals(t: int) -> Population:
        return env.sample_individuals(config.decisions, streams.proposals(t))

    learners = [s for s in config.strategies if s is not Strategy.OPTIMAL]
    initial = initial_parameters(env, shared, fmap, streams.initialization()) if learners else None
    return SeedContext(streams, env, eval_sample, fmap, proposals, initial)


def proposal_digest(collected: Sequence[CollectedData]) -> str:
    """SHA-256 over the proposal batches of every round, in order."""
    h = hashlib.sha256()
    for data in collected:
        h.update(data.population.digest().encode("ascii"))
    return h.hexdigest()


def run_cell(config: RunConfig, cell: Cell, context: SeedContext) -> CellResult:
    logger.info(f"Running {cell.strategy.value} seed={cell.seed} lambda={cell.lam:g}")
    try:
        run = consequential_learning(
            context.env,
            cell.strategy,
            config.experiment(cell.seed, cell.lam),
            context.streams.decisions(cell.strategy),
            eval_sample=context.eval_sample,
            fmap=context.fmap,
            proposals=context.proposals,
            initial=context.initial,
        )
    except Exception as e:
        logger.error(f"Cell {cell.strategy.value} seed={cell.seed} lambda={cell.lam:g} failed: {e}")
        raise
    return CellResult(cell, run.metrics, run.final_policy.describe(), run.update_pool_sizes, proposal_digest(run.collected))


# ============ Output ============

def format_value(value) -> str:
    """Integers as integers, floats in shortest round-trip form."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
            count += 1
    return count


def metric_rows(results: Sequence[CellResult]) -> List[list]:
    rows = []
    for result in sorted(results, key=lambda r: r.cell.sort_key):
        cell = result.cell
        for record in result.metrics:
            rows.append([
                cell.strategy.value, cell.seed, float(cell.lam), record.t,
                record.utility, record.effective_utility, record.dp_violation, record.eop_violation,
                record.positives_collected,
            ])
    return rows


def dependency_versions() -> Dict[str, str]:
    versions = {"consequential": __version__}
    for name in DEPENDENCIES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def build_manifest(config: RunConfig, results: Sequence[CellResult]) -> dict:
    return {
        "config": config.model_dump(mode="json", by_alias=True),
        "versions": dependency_versions(),
        "cells": [
            {
                "strategy": r.cell.strategy.value,
                "seed": r.cell.seed,
                "lambda": float(r.cell.lam),
                "final_policy": r.final,
                "proposal_digest": r.proposal_digest,
            }
            for r in sorted(results, key=lambda r: r.cell.sort_key)
        ],
    }


def resolve_output(config: RunConfig, output: Optional[Path] = None) -> Path:
    if output is not None:
        return Path(output)
    if config.output is not None:
        return Path(config.output)
    return Path(get_settings().output_dir)


# ============ Operations ============

def run_experiment(
    config: RunConfig,
    output: Optional[Path] = None,
    workers: Optional[int] = None,
    progress: Optional[bool] = None,
) -> ExperimentResult:
    """
    Run every (strategy, seed, lambda) cell and write ``metrics.csv`` and
    ``manifest.json`` into the output directory.
    """
    settings = get_settings()
    workers = workers if workers is not None else settings.workers
    progress = progress if progress is not None else settings.progress
    out_dir = resolve_output(config, output)

    cells = [
        Cell(strategy, seed, float(lam))
        for seed in config.seeds
        for lam in config.lambdas()
        for strategy in config.strategies
    ]
    logger.info(
        f"Starting run: environment={config.environment.value}, {len(cells)} cells, "
        f"T={config.timesteps}, N={config.decisions}, workers={workers}"
    )

    contexts = {seed: _seed_context(config, seed) for seed in config.seeds}
    results: List[CellResult] = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = [executor.submit(run_cell, config, cell, contexts[cell.seed]) for cell in cells]
        for future in tqdm(as_completed(futures), total=len(futures), desc="cells", disable=not progress):
            results.append(future.result())

    metrics_path = out_dir / "metrics.csv"
    manifest_path = out_dir / "manifest.json"
    count = write_csv(metrics_path, METRICS_HEADER, metric_rows(results))
    manifest_path.write_text(
        json.dumps(build_manifest(config, results), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info(f"Wrote {count} rows to {metrics_path}")
    return ExperimentResult(metrics_path, manifest_path, count)


def _quantile_label(q: float) -> str:
    if q == 0.5:
        return "median"
    return f"q{round(q * 100):g}"


def read_metrics(files: Sequence[Union[str, Path]]) -> pd.DataFrame:
    frames = []
    for path in files:
        path = Path(path)
        try:
            frame = pd.read_csv(path)
        except FileNotFoundError as e:
            raise IngestionError(f"{path}: file not found") from e
        except (pd.errors.ParserError, pd.errors.EmptyDataError) as e:
            raise IngestionError(f"{path}: cannot parse CSV: {e}") from e
        if list(frame.columns) != METRICS_HEADER:
            raise IngestionError(
                f"{path}: unexpected columns {list(frame.columns)}, expected {METRICS_HEADER}"
            )
        frames.append(frame)
    if not frames:
        raise IngestionError("no metrics files to aggregate")
    return pd.concat(frames, ignore_index=True)


def aggregate(
    files: Sequence[Union[str, Path]],
    quantiles: Sequence[float] = (0.25, 0.5, 0.75),
    output: Optional[Path] = None,
) -> pd.DataFrame:
    """
    Median and quantiles of every metric across seeds, per (strategy, lambda, t).

    Quantiles interpolate linearly between order statistics. One output row
    per (strategy, lambda, t, metric).
    """
    quantiles = sorted(set(float(q) for q in quantiles) | {0.5})
    for q in quantiles:
        if not 0.0 <= q <= 1.0:
            raise ConfigError(f"quantiles must lie in [0, 1], got {q}")

    frame = read_metrics(files)
    grouped = frame.groupby(GROUP_COLUMNS, sort=True)[METRIC_COLUMNS]
    tables = []
    for q in quantiles:
        table = grouped.quantile(q, interpolation="linear").reset_index()
        tables.append(
            table.melt(id_vars=GROUP_COLUMNS, value_vars=METRIC_COLUMNS, var_name="metric", value_name=_quantile_label(q))
        )
    keys = GROUP_COLUMNS + ["metric"]
    summary = reduce(lambda left, right: left.merge(right, on=keys), tables)
    summary["metric"] = pd.Categorical(summary["metric"], categories=METRIC_COLUMNS, ordered=True)
    summary = summary.sort_values(keys, kind="mergesort").reset_index(drop=True)
    summary["metric"] = summary["metric"].astype(str)

    columns = keys + [_quantile_label(q) for q in quantiles]
    summary = summary[columns]
    if output is not None:
        write_csv(Path(output), columns, _summary_rows(summary))
        logger.info(f"Wrote summary of {len(frame)} rows to {output}")
    return summary


def _summary_rows(summary: pd.DataFrame):
    for values in summary.itertuples(index=False, name=None):
        strategy, lam, t, metric, *stats = values
        yield [strategy, float(lam), int(t), metric] + [float(v) for v in stats]

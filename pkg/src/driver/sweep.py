import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from itertools import repeat
from typing import Iterator

from .config import ExperimentConfig
from .loop import PreparedCorpus, RunResult, run_experiment

logger = logging.getLogger(__name__)


def expand_sweep(config: ExperimentConfig) -> list[ExperimentConfig]:
    """One config per sweep value, labelled ``<label>[<parameter>=<value>]``."""
    sweep = config.sweep
    if sweep.parameter is None:
        return [config]
    variants = []
    for value in sweep.values:
        variant = config.with_value(sweep.parameter, value)
        label = f"{variant.label}[{sweep.parameter}={value}]"
        variants.append(
            replace(variant, experiment=replace(variant.experiment, label=label))
        )
    return variants


def run_seed(
    config: ExperimentConfig, prepared: PreparedCorpus, seed: int
) -> RunResult:
    return run_experiment(prepared, config.for_seed(seed))


def run_seeds(
    config: ExperimentConfig, prepared: PreparedCorpus
) -> Iterator[tuple[int, RunResult]]:
    """
    Runs every seed of the manifest. Seeds are independent, so with more than
    one worker they run in a process pool; results come back in seed order.
    """
    seeds = config.experiment.seeds
    workers = min(config.experiment.workers, len(seeds))
    if workers <= 1:
        for seed in seeds:
            yield seed, run_seed(config, prepared, seed)
        return
    with ProcessPoolExecutor(max_workers=workers) as executor:
        results = executor.map(run_seed, repeat(config), repeat(prepared), seeds)
        yield from zip(seeds, results)

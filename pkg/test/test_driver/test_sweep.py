import math
from dataclasses import replace

import pytest

from driver import (
    CorpusConfig,
    ExperimentConfig,
    ExperimentManifest,
    RunConfig,
    SweepConfig,
    expand_sweep,
    prepare_corpus,
    run_seeds,
)
from errors import InvalidConfigError
from mixture import SubsetSpec


def test_no_sweep_is_one_variant(config):
    assert expand_sweep(config) == [config]


def test_sweep_labels_and_values(config):
    swept = replace(config, sweep=SweepConfig("prior_tau", (1, 10, "inf")))
    variants = expand_sweep(swept)
    assert [v.label for v in variants] == [
        "HBO[prior_tau=1]",
        "HBO[prior_tau=10]",
        "HBO[prior_tau=inf]",
    ]
    assert [v.run.prior_tau for v in variants] == [1.0, 10.0, math.inf]


def test_sweep_keeps_a_given_label(config):
    labelled = replace(
        config,
        experiment=replace(config.experiment, label="desk"),
        sweep=SweepConfig("group_count", (1, 2)),
    )
    assert [v.label for v in expand_sweep(labelled)] == [
        "desk[group_count=1]",
        "desk[group_count=2]",
    ]


def test_invalid_value_fails_before_any_run(config):
    swept = replace(config, sweep=SweepConfig("group_count", (2, 0)))
    with pytest.raises(InvalidConfigError):
        expand_sweep(swept)


def test_seeds_run_in_order(config):
    prepared = prepare_corpus(config)
    results = list(run_seeds(config, prepared))
    assert [seed for seed, _ in results] == [3, 1]
    first, second = (result for _, result in results)
    picks = [r.subset_id for r in first.trajectory]
    assert picks != [r.subset_id for r in second.trajectory]


@pytest.fixture
def config(tiny_model_config):
    return ExperimentConfig(
        experiment=ExperimentManifest(seeds=(3, 1)),
        corpus=CorpusConfig(
            vocab_size=8,
            subsets=(
                SubsetSpec(size=30, response_length=3),
                SubsetSpec(size=30, response_length=3),
            ),
        ),
        model=tiny_model_config,
        run=RunConfig(
            total_steps=40,
            batch_size=2,
            group_count=2,
            prior_tau=math.inf,
            update_freq_global=20,
            update_freq_local=20,
            actor_hidden_dim=4,
            reward_batch_size=2,
        ),
    )

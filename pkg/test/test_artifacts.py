import json
from dataclasses import replace

import pytest
from numpy.testing import assert_allclose, assert_array_equal

from artifacts import FileRunRepository, RunDirectory, load_checkpoint, read_summary
from driver import (
    CorpusConfig,
    ExperimentConfig,
    ExperimentManifest,
    RunConfig,
    prepare_corpus,
    read_trajectory,
    run_experiment,
)
from errors import CorruptFileError
from mixture import SubsetSpec


def test_run_directory_layout(tmp_path):
    directory = RunDirectory.of(tmp_path, "HBO", 3)
    assert directory.root == tmp_path / "HBO" / "seed-3"
    assert directory.summary_path.name == "summary.jsonl"
    assert directory.checkpoint_path.name == "checkpoint"


def test_saved_run_has_every_artifact(saved, tmp_path):
    _, prepared, result, directory = saved
    assert directory.root == tmp_path / "runs" / "HBO" / "seed-5"
    effective = json.loads(directory.config_path.read_text())
    assert effective["run"]["seed"] == 5
    head, trajectory = read_trajectory(directory.trajectory_path)
    assert (head["label"], head["seed"]) == ("HBO", 5)
    assert (head["subsets"], head["groups"]) == (2, 2)
    assert head["fingerprint"] == prepared.fingerprint
    assert head["config"] == effective
    assert trajectory == result.trajectory


def test_summary_reads_back(saved):
    _, prepared, result, directory = saved
    summary = read_summary(directory.summary_path)
    assert (summary.label, summary.method, summary.seed) == ("HBO", "HBO", 5)
    assert summary.fingerprint == prepared.fingerprint
    assert summary.total_steps == 12
    assert summary.macro_perplexity == result.evaluation.macro_perplexity
    head = json.loads(directory.summary_path.read_text().splitlines()[0])
    assert head["format"] == "hbo-summary"
    assert head["config"]["run"]["seed"] == 5


def test_checkpoint_restores_model_and_actors(saved):
    _, _, result, directory = saved
    model, global_actor, local_actors = load_checkpoint(directory.checkpoint_path)
    for name, value in result.model.parameters.items():
        assert_array_equal(model.parameters[name], value)
    assert model.context_window == result.model.context_window
    assert_allclose(global_actor.distribution().probabilities, result.final_global)
    assert len(local_actors) == 2
    for actor, final in zip(local_actors, result.final_local):
        assert_allclose(actor.distribution().probabilities, final)
    assert global_actor.learning_rate == 0.05


def test_static_checkpoint_has_no_actors(saved, tmp_path):
    config, prepared, _, _ = saved
    static = replace(config, run=replace(config.run, mode="static"))
    result = run_experiment(prepared, static.for_seed(5))
    directory = FileRunRepository().save(static, prepared, 5, result)
    assert directory.root.parent.name == "Prop."
    _, global_actor, local_actors = load_checkpoint(directory.checkpoint_path)
    assert global_actor is None and local_actors == []


def test_summaries_are_keyed_by_seed(saved):
    config, prepared, _, directory = saved
    repository = FileRunRepository()
    other = run_experiment(prepared, config.for_seed(6))
    repository.save(config, prepared, 6, other)
    summaries = repository.summaries(directory.root.parent)
    assert sorted(summaries) == [5, 6]
    assert summaries[6].seed == 6


def test_summary_without_record(tmp_path):
    path = tmp_path / "summary.jsonl"
    head = json.dumps({"format": "hbo-summary", "version": 1}) + "\n"
    path.write_text(head)
    with pytest.raises(CorruptFileError, match="missing summary record"):
        read_summary(path)
    path.write_text(head + '{"label": "HBO"}\n')
    with pytest.raises(CorruptFileError) as excinfo:
        read_summary(path)
    assert excinfo.value.line == 2


@pytest.fixture
def saved(tmp_path, tiny_model_config):
    config = ExperimentConfig(
        experiment=ExperimentManifest(output_dir=str(tmp_path / "runs"), seeds=(5,)),
        corpus=CorpusConfig(
            vocab_size=8,
            subsets=(
                SubsetSpec(size=20, response_length=2),
                SubsetSpec(size=20, response_length=2),
            ),
        ),
        model=tiny_model_config,
        run=RunConfig(
            total_steps=12,
            batch_size=2,
            group_count=2,
            actor_lr_global=0.05,
            actor_lr_local=0.05,
            update_freq_global=4,
            update_freq_local=4,
            actor_hidden_dim=3,
            reward_batch_size=2,
        ),
    )
    prepared = prepare_corpus(config)
    result = run_experiment(prepared, config.for_seed(5))
    directory = FileRunRepository().save(config, prepared, 5, result)
    return config, prepared, result, directory

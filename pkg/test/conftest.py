import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mixture import (  # noqa: E402
    ExampleRecord,
    MixtureCorpus,
    SubsetSpec,
    generate_synthetic_mixture,
    partition_by_difficulty,
)
from toy_trainer import ModelConfig  # noqa: E402


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow", action="store_true", default=False, help="run desk-scale tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale run, needs --run-slow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def example():
    def make(instruction=(1, 2), response=(3, 4), subset_id=0, **kwargs):
        return ExampleRecord(tuple(instruction), tuple(response), subset_id, **kwargs)

    return make


@pytest.fixture
def tiny_model_config():
    return ModelConfig(context_window=2, embedding_dim=4, hidden_dim=5)


@pytest.fixture
def grouped_corpus():
    """Two subsets (40 and 20 examples), V=8, four groups scored by index."""
    corpus = generate_synthetic_mixture(
        [
            SubsetSpec(size=40, response_length=3),
            SubsetSpec(size=20, response_length=3),
        ],
        vocab_size=8,
        seed=3,
    )
    scores = [np.arange(s.size, dtype=float) for s in corpus.subsets]
    return partition_by_difficulty(corpus, scores, 4)


@pytest.fixture
def heldout_corpus():
    corpus = generate_synthetic_mixture(
        [SubsetSpec(size=6, response_length=3), SubsetSpec(size=6, response_length=3)],
        vocab_size=8,
        seed=4,
    )
    return MixtureCorpus.unpartitioned([s.examples for s in corpus.subsets], 8)

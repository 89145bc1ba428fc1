import math

import numpy as np
import pytest
from pytest import approx

from errors import InvalidConfigError, InvalidExampleError
from mixture import (
    LanguageModel,
    MixtureCorpus,
    difficulty_scorer,
    discard_easiest,
    ifd_score,
    partition_by_difficulty,
    score_corpus,
)


def test_ifd_of_uninformative_instruction_is_one(model, example):
    model.response_log_probs.side_effect = lambda examples, with_instruction: [
        np.log([0.5, 0.25]) for _ in examples
    ]
    assert ifd_score(model, example()) == approx(1.0)


def test_ifd_is_conditional_over_unconditional_perplexity(model, example):
    def log_probs(examples, with_instruction):
        p = [0.5, 0.5] if with_instruction else [0.25, 0.25]
        return [np.log(p) for _ in examples]

    model.response_log_probs.side_effect = log_probs
    assert ifd_score(model, example()) == approx(0.5)


def test_perplexity_and_loss_scorers(model, example):
    model.response_log_probs.side_effect = lambda examples, with_instruction: [
        np.log([0.5, 0.25]) for _ in examples
    ]
    assert difficulty_scorer("ppl").score(model, [example()])[0] == approx(
        math.sqrt(8), abs=1e-4
    )
    assert difficulty_scorer("loss").score(model, [example()])[0] == approx(
        math.log(math.sqrt(8))
    )


def test_unknown_metric():
    with pytest.raises(InvalidConfigError, match="ifd"):
        difficulty_scorer("entropy")


def test_empty_response_is_rejected(model, example):
    with pytest.raises(InvalidExampleError):
        ifd_score(model, example(response=()))


def test_score_corpus_chunks(model, heldout_corpus):
    model.response_log_probs.side_effect = lambda examples, with_instruction: [
        np.log([0.5]) for _ in examples
    ]
    scores = score_corpus(model, heldout_corpus, chunk_size=4)
    assert [len(s) for s in scores] == [6, 6]
    assert model.response_log_probs.call_count == 2 * 2 * 2


def test_partition_balances_group_sizes(example):
    examples = [example(index=n) for n in range(10)]
    corpus = MixtureCorpus.unpartitioned([examples], 8)
    scores = [[9, 8, 7, 6, 5, 4, 3, 2, 1, 0]]
    grouped = partition_by_difficulty(corpus, scores, 4)
    subset = grouped.subsets[0]
    assert subset.group_sizes == [3, 3, 2, 2]
    assert [e.index for e in subset.groups[0]] == [9, 8, 7]
    assert all(e.group_id == 3 for e in subset.groups[3])
    difficulties = [e.difficulty for e in subset.examples]
    assert difficulties == sorted(difficulties)


def test_partition_ties_keep_example_order(example):
    examples = [example(index=n) for n in range(4)]
    grouped = partition_by_difficulty(
        MixtureCorpus.unpartitioned([examples], 8), [[1.0] * 4], 2
    )
    assert [e.index for e in grouped.subsets[0].examples] == [0, 1, 2, 3]


def test_partition_into_more_groups_than_examples(example):
    corpus = MixtureCorpus.unpartitioned([[example(), example()]], 8)
    with pytest.raises(InvalidConfigError, match="fewer than 4 groups"):
        partition_by_difficulty(corpus, [[0.0, 1.0]], 4)


def test_partition_score_count_mismatch(example):
    corpus = MixtureCorpus.unpartitioned([[example(), example()]], 8)
    with pytest.raises(InvalidConfigError):
        partition_by_difficulty(corpus, [[0.0]], 1)


def test_discard_easiest_half(grouped_corpus):
    trimmed = discard_easiest(grouped_corpus, 0.5)
    assert trimmed.sizes == [20, 10]
    assert trimmed.group_count == 4
    for before, after in zip(grouped_corpus.subsets, trimmed.subsets):
        cutoff = before.examples[len(before.examples) // 2].difficulty
        assert min(e.difficulty for e in after.examples) >= cutoff


def test_discard_requires_partition(heldout_corpus):
    with pytest.raises(InvalidConfigError):
        discard_easiest(heldout_corpus, 0.5)


@pytest.fixture
def model(mocker):
    return mocker.Mock(spec=LanguageModel)

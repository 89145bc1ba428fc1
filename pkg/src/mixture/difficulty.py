import logging
import math
from typing import Protocol, Sequence

import numpy as np

from errors import InvalidConfigError, InvalidExampleError
from .records import ExampleRecord, MixtureCorpus, Subset

logger = logging.getLogger(__name__)

GROUP_GRANULARITIES = (1, 2, 4, 8, 16)


class LanguageModel(Protocol):
    def response_log_probs(
        self, examples: Sequence[ExampleRecord], with_instruction: bool = True
    ) -> list[np.ndarray]:
        """Per-example arrays of log p(y_l | context) over response tokens."""
        ...


class DifficultyScorer(Protocol):
    name: str

    def score(
        self, model: LanguageModel, examples: Sequence[ExampleRecord]
    ) -> np.ndarray:
        ...


def _mean_nll(log_probs: list[np.ndarray]) -> np.ndarray:
    return np.array([-np.mean(lp) for lp in log_probs], dtype=np.float64)


def _check_responses(examples: Sequence[ExampleRecord]) -> None:
    for example in examples:
        if len(example.response) == 0:
            raise InvalidExampleError(
                f"Example {example.index} of subset {example.subset_id} has an empty response"
            )


class IfdScorer(DifficultyScorer):
    """PPL(y|x) / PPL(y): above 1 when the instruction does not help."""

    name = "ifd"

    def score(
        self, model: LanguageModel, examples: Sequence[ExampleRecord]
    ) -> np.ndarray:
        _check_responses(examples)
        conditional = _mean_nll(model.response_log_probs(examples, True))
        unconditional = _mean_nll(model.response_log_probs(examples, False))
        return np.exp(conditional - unconditional)


class PerplexityScorer(DifficultyScorer):
    name = "ppl"

    def score(
        self, model: LanguageModel, examples: Sequence[ExampleRecord]
    ) -> np.ndarray:
        _check_responses(examples)
        return np.exp(_mean_nll(model.response_log_probs(examples, True)))


class LossScorer(DifficultyScorer):
    name = "loss"

    def score(
        self, model: LanguageModel, examples: Sequence[ExampleRecord]
    ) -> np.ndarray:
        _check_responses(examples)
        return _mean_nll(model.response_log_probs(examples, True))


DIFFICULTY_SCORERS: dict[str, DifficultyScorer] = {
    s.name: s for s in (IfdScorer(), PerplexityScorer(), LossScorer())
}


def difficulty_scorer(metric: str) -> DifficultyScorer:
    try:
        return DIFFICULTY_SCORERS[metric]
    except KeyError:
        raise InvalidConfigError(
            f"Unknown difficulty metric {metric!r}, "
            f"expected one of {', '.join(DIFFICULTY_SCORERS)}"
        ) from None


def ifd_score(model: LanguageModel, example: ExampleRecord) -> float:
    return float(IfdScorer().score(model, [example])[0])


def score_corpus(
    model: LanguageModel,
    corpus: MixtureCorpus,
    scorer: DifficultyScorer = IfdScorer(),
    chunk_size: int = 1024,
) -> list[np.ndarray]:
    scores = []
    for subset in corpus.subsets:
        examples = subset.examples
        scores.append(
            np.concatenate(
                [
                    scorer.score(model, examples[start : start + chunk_size])
                    for start in range(0, len(examples), chunk_size)
                ]
            )
        )
    return scores


def partition_by_difficulty(
    corpus: MixtureCorpus, scores: Sequence[Sequence[float]], k: int
) -> MixtureCorpus:
    """
    Sorts every subset by ascending score (stable, so ties keep example
    order) and cuts it into ``k`` contiguous groups whose sizes differ by at
    most one. Group 0 holds the easiest examples.
    """
    if k < 1:
        raise InvalidConfigError(f"group count must be at least 1: {k}")
    if len(scores) != corpus.subset_count:
        raise InvalidConfigError(
            f"Expected scores for {corpus.subset_count} subsets, got {len(scores)}"
        )
    subsets = []
    for subset_id, (subset, subset_scores) in enumerate(zip(corpus.subsets, scores)):
        examples = subset.examples
        if len(subset_scores) != len(examples):
            raise InvalidConfigError(
                f"Subset {subset_id} has {len(examples)} examples "
                f"but {len(subset_scores)} scores"
            )
        if len(examples) < k:
            raise InvalidConfigError(
                f"Subset {subset_id} has {len(examples)} examples, fewer than {k} groups"
            )
        values = np.asarray(subset_scores, dtype=np.float64)
        order = np.argsort(values, kind="stable")
        groups = tuple(
            tuple(examples[n].with_group(group_id, values[n]) for n in chunk)
            for group_id, chunk in enumerate(np.array_split(order, k))
        )
        subsets.append(Subset(groups))
        logger.info(
            "Partitioned subset %d into %d groups of sizes %s",
            subset_id,
            k,
            [len(g) for g in groups],
        )
    return MixtureCorpus(tuple(subsets), corpus.vocab_size)


def discard_easiest(corpus: MixtureCorpus, fraction: float) -> MixtureCorpus:
    """
    Drops the easiest ``fraction`` of each partitioned subset and regroups the
    rest into the same number of groups.
    """
    if not 0.0 <= fraction < 1.0:
        raise InvalidConfigError(f"discard fraction must lie in [0, 1): {fraction}")
    if not corpus.partitioned:
        raise InvalidConfigError("Only a partitioned corpus can discard easy examples")
    k = corpus.group_count
    kept, scores = [], []
    for subset in corpus.subsets:
        examples = subset.examples
        survivors = examples[math.floor(fraction * len(examples)) :]
        kept.append(survivors)
        scores.append([e.difficulty for e in survivors])
    return partition_by_difficulty(
        MixtureCorpus.unpartitioned(kept, corpus.vocab_size), scores, k
    )

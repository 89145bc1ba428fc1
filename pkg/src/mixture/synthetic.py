import logging
import math
from typing import Sequence

import numpy as np

from errors import ConfigIssues, InvalidConfigError
from .records import ExampleRecord, MixtureCorpus, SubsetSpec

logger = logging.getLogger(__name__)


def generate_synthetic_mixture(
    specs: Sequence[SubsetSpec], vocab_size: int, seed: int, process_seed: int = 0
) -> MixtureCorpus:
    """
    Draws one subset per spec from its own stochastic process over a shared
    vocabulary. Each example gets a noise level in [0, 1]: response tokens are
    replaced by uniform tokens with that probability, which is what makes some
    examples harder than others within a subset.

    The processes themselves (Markov supports, template keys and bodies) come
    from ``process_seed`` and the subset index only; ``seed`` draws the
    examples. Two calls with the same specs and different seeds therefore
    sample fresh examples of the same tasks.
    """
    issues = ConfigIssues()
    if not specs:
        issues.add("corpus.subsets", "at least one subset is required")
    if vocab_size < 2:
        issues.add("corpus.vocab_size", "must be at least 2")
    for index, spec in enumerate(specs):
        issues.update(spec.validate(f"corpus.subsets[{index}]"))
    issues.raise_if_invalid()

    streams = np.random.SeedSequence(seed).spawn(len(specs))
    subsets = []
    for subset_id, (spec, stream) in enumerate(zip(specs, streams)):
        process = np.random.default_rng([process_seed, subset_id])
        rng = np.random.default_rng(stream)
        generator = _GENERATORS[spec.generator_kind]
        instructions, responses = generator(spec, vocab_size, process, rng)
        subsets.append(
            [
                ExampleRecord(
                    instruction=tuple(int(t) for t in x),
                    response=tuple(int(t) for t in y),
                    subset_id=subset_id,
                    index=k,
                )
                for k, (x, y) in enumerate(zip(instructions, responses))
            ]
        )
        logger.info(
            "Generated subset %d (%s, %d examples)",
            subset_id,
            spec.name or spec.generator_kind,
            spec.size,
        )
    return MixtureCorpus.unpartitioned(subsets, vocab_size)


def _noise_levels(spec: SubsetSpec, rng: np.random.Generator) -> np.ndarray:
    return np.clip(spec.noise_floor + spec.noise_spread * rng.random(spec.size), 0, 1)


def _corrupt(
    tokens: np.ndarray, noise: np.ndarray, vocab_size: int, rng: np.random.Generator
) -> np.ndarray:
    mask = rng.random(tokens.shape) < noise[:, None]
    return np.where(mask, rng.integers(vocab_size, size=tokens.shape), tokens)


def _markov_chain(
    spec: SubsetSpec,
    vocab_size: int,
    process: np.random.Generator,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    # Each state moves uniformly over a random support of V**entropy states, so
    # the normalised entropy of every transition row is close to the knob.
    support_size = math.ceil(vocab_size**spec.transition_entropy)
    support_size = min(vocab_size, max(1, support_size))
    support = np.stack(
        [
            process.choice(vocab_size, size=support_size, replace=False)
            for _ in range(vocab_size)
        ]
    )
    noise = _noise_levels(spec, rng)
    length = spec.instruction_length + spec.response_length
    walk = np.empty((spec.size, length), dtype=np.int64)
    walk[:, 0] = rng.integers(vocab_size, size=spec.size)
    for t in range(1, length):
        step = support[walk[:, t - 1], rng.integers(support_size, size=spec.size)]
        if t >= spec.instruction_length:
            uniform = rng.integers(vocab_size, size=spec.size)
            step = np.where(rng.random(spec.size) < noise, uniform, step)
        walk[:, t] = step
    return walk[:, : spec.instruction_length], walk[:, spec.instruction_length :]


def _template_grammar(
    spec: SubsetSpec,
    vocab_size: int,
    process: np.random.Generator,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    # The instruction is a template key; the response is the template with
    # open slots (probability = transition_entropy) filled uniformly.
    keys = process.integers(
        vocab_size, size=(spec.template_count, spec.instruction_length)
    )
    bodies = process.integers(
        vocab_size, size=(spec.template_count, spec.response_length)
    )
    open_slots = process.random(bodies.shape) < spec.transition_entropy
    noise = _noise_levels(spec, rng)
    chosen = rng.integers(spec.template_count, size=spec.size)
    responses = np.where(
        open_slots[chosen],
        rng.integers(vocab_size, size=(spec.size, spec.response_length)),
        bodies[chosen],
    )
    return keys[chosen], _corrupt(responses, noise, vocab_size, rng)


_GENERATORS = {
    "markov-chain": _markov_chain,
    "template-grammar": _template_grammar,
}


def split_heldout(
    corpus: MixtureCorpus, fraction: float, seed: int
) -> tuple[MixtureCorpus, MixtureCorpus]:
    """
    Withholds ``fraction`` of every subset (at least one example when the
    fraction is positive) before any grouping happens.
    """
    if not 0.0 <= fraction < 1.0:
        raise InvalidConfigError(f"heldout fraction must lie in [0, 1): {fraction}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    train, heldout = [], []
    for subset in corpus.subsets:
        examples = subset.examples
        count = math.ceil(fraction * len(examples)) if fraction > 0 else 0
        if count >= len(examples):
            raise InvalidConfigError(
                f"subset {examples[0].subset_id} is too small to hold out {fraction:.0%}"
            )
        chosen = set(rng.choice(len(examples), size=count, replace=False).tolist())
        train.append([e for k, e in enumerate(examples) if k not in chosen])
        heldout.append([e for k, e in enumerate(examples) if k in chosen])
    return (
        MixtureCorpus.unpartitioned(train, corpus.vocab_size),
        MixtureCorpus.unpartitioned(heldout, corpus.vocab_size),
    )


def subsample(corpus: MixtureCorpus, fraction: float, seed: int) -> MixtureCorpus:
    """Keeps ``fraction`` of each subset, preserving example order."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidConfigError(f"data fraction must lie in (0, 1]: {fraction}")
    if fraction == 1.0:
        return corpus
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    kept = []
    for subset in corpus.subsets:
        examples = subset.examples
        count = max(1, round(fraction * len(examples)))
        chosen = np.sort(rng.choice(len(examples), size=count, replace=False))
        kept.append([examples[k] for k in chosen])
    return MixtureCorpus.unpartitioned(kept, corpus.vocab_size)

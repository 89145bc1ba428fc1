from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Iterable, Literal, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import logsumexp

from errors import ConfigIssues, InvalidBatchError, InvalidExampleError
from mixture import ExampleRecord

PARAMETER_NAMES = (
    "embedding",
    "hidden_weight",
    "hidden_bias",
    "output_weight",
    "output_bias",
)

Parameters = dict[str, np.ndarray]


@dataclass(frozen=True)
class ModelConfig:
    context_window: int = 4
    embedding_dim: int = 16
    hidden_dim: int = 32
    optimizer: Literal["sgd", "adamw"] = "adamw"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    lr_schedule: Literal["constant", "linear"] = "constant"
    warmup_fraction: float = 0.1

    def validate(self, prefix: str = "model") -> ConfigIssues:
        issues = ConfigIssues()
        for name in ("context_window", "embedding_dim", "hidden_dim"):
            if getattr(self, name) < 1:
                issues.add(f"{prefix}.{name}", "must be at least 1")
        if self.optimizer not in ("sgd", "adamw"):
            issues.add(f"{prefix}.optimizer", "expected 'sgd' or 'adamw'")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            issues.add(f"{prefix}.beta1", "betas must lie in [0, 1)")
        if self.eps <= 0:
            issues.add(f"{prefix}.eps", "must be positive")
        if self.weight_decay < 0:
            issues.add(f"{prefix}.weight_decay", "must be non-negative")
        if self.lr_schedule not in ("constant", "linear"):
            issues.add(f"{prefix}.lr_schedule", "expected 'constant' or 'linear'")
        if not 0 <= self.warmup_fraction < 1:
            issues.add(f"{prefix}.warmup_fraction", "must lie in [0, 1)")
        return issues


@dataclass(frozen=True)
class Batch:
    examples: tuple[ExampleRecord, ...]

    @classmethod
    def of(cls, examples: Iterable[ExampleRecord]) -> "Batch":
        return cls(tuple(examples))

    def __len__(self) -> int:
        return len(self.examples)

    def require_examples(self) -> tuple[ExampleRecord, ...]:
        if not self.examples:
            raise InvalidBatchError("Batch is empty")
        return self.examples


@dataclass(frozen=True)
class _Positions:
    contexts: np.ndarray
    targets: np.ndarray
    owner: np.ndarray
    lengths: np.ndarray


@dataclass(frozen=True)
class _Forward:
    inputs: np.ndarray
    hidden: np.ndarray
    log_probs: np.ndarray


class ToyLanguageModel:
    """
    Fixed-window MLP language model: the w tokens preceding a position are
    embedded, concatenated, passed through one tanh layer and a softmax over
    the vocabulary. Token id ``vocab_size`` is the padding token; it fills
    the window before the start of a sequence and replaces the instruction
    when scoring a response on its own.
    """

    def __init__(self, parameters: Mapping[str, np.ndarray], context_window: int):
        self._parameters: Parameters = {
            name: np.array(parameters[name], dtype=np.float64)
            for name in PARAMETER_NAMES
        }
        self.context_window = context_window
        self.vocab_size = self._parameters["output_bias"].shape[0]
        self.pad_token = self.vocab_size

    @classmethod
    def initialize(
        cls, vocab_size: int, config: ModelConfig = ModelConfig(), seed: int = 0
    ) -> "ToyLanguageModel":
        rng = np.random.default_rng(seed)
        w, d, h = config.context_window, config.embedding_dim, config.hidden_dim
        return cls(
            {
                "embedding": rng.normal(0.0, 1.0, (vocab_size + 1, d)),
                "hidden_weight": rng.normal(0.0, 1.0 / np.sqrt(w * d), (w * d, h)),
                "hidden_bias": np.zeros(h),
                "output_weight": rng.normal(0.0, 1.0 / np.sqrt(h), (h, vocab_size)),
                "output_bias": np.zeros(vocab_size),
            },
            w,
        )

    @property
    def parameters(self) -> Parameters:
        return self._parameters

    @property
    def hidden_dim(self) -> int:
        return self._parameters["hidden_bias"].shape[0]

    def copy(self) -> "ToyLanguageModel":
        return ToyLanguageModel(self._parameters, self.context_window)

    def snapshot(self) -> "ModelSnapshot":
        return ModelSnapshot.capture(self)

    def _positions(
        self, examples: Sequence[ExampleRecord], with_instruction: bool
    ) -> _Positions:
        w = self.context_window
        contexts, targets, owner, lengths = [], [], [], []
        for k, example in enumerate(examples):
            if not example.response:
                raise InvalidExampleError(
                    f"Example {example.index} of subset {example.subset_id} "
                    "has an empty response"
                )
            prefix = (
                example.instruction
                if with_instruction
                else (self.pad_token,) * len(example.instruction)
            )
            padded = np.array(
                (self.pad_token,) * w + prefix + example.response, dtype=np.int64
            )
            start = len(prefix)
            length = len(example.response)
            contexts.append(sliding_window_view(padded, w)[start : start + length])
            targets.append(example.response)
            owner.append(np.full(length, k))
            lengths.append(length)
        return _Positions(
            contexts=np.concatenate(contexts),
            targets=np.concatenate(targets).astype(np.int64),
            owner=np.concatenate(owner),
            lengths=np.array(lengths, dtype=np.float64),
        )

    def _forward(self, contexts: np.ndarray) -> _Forward:
        p = self._parameters
        inputs = p["embedding"][contexts].reshape(contexts.shape[0], -1)
        hidden = np.tanh(inputs @ p["hidden_weight"] + p["hidden_bias"])
        logits = hidden @ p["output_weight"] + p["output_bias"]
        log_probs = logits - logsumexp(logits, axis=1, keepdims=True)
        return _Forward(inputs, hidden, log_probs)

    def probabilities(self, contexts: np.ndarray) -> np.ndarray:
        return np.exp(self._forward(np.atleast_2d(contexts)).log_probs)

    def response_log_probs(
        self, examples: Sequence[ExampleRecord], with_instruction: bool = True
    ) -> list[np.ndarray]:
        if not examples:
            return []
        positions = self._positions(examples, with_instruction)
        forward = self._forward(positions.contexts)
        picked = forward.log_probs[np.arange(len(positions.targets)), positions.targets]
        return np.split(picked, np.cumsum(positions.lengths.astype(np.int64))[:-1])

    def example_nll(self, examples: Sequence[ExampleRecord]) -> np.ndarray:
        """Mean response-token NLL of every example."""
        return np.array([-np.mean(lp) for lp in self.response_log_probs(examples)])

    def loss_and_gradients(self, batch: Batch) -> tuple[float, Parameters]:
        examples = batch.require_examples()
        p = self._parameters
        positions = self._positions(examples, True)
        forward = self._forward(positions.contexts)
        rows = np.arange(len(positions.targets))
        # every example weighs 1/B, spread evenly over its response tokens
        weight = 1.0 / (len(examples) * positions.lengths[positions.owner])
        loss = float(-np.sum(weight * forward.log_probs[rows, positions.targets]))

        d_logits = np.exp(forward.log_probs) * weight[:, None]
        d_logits[rows, positions.targets] -= weight
        d_hidden = d_logits @ p["output_weight"].T
        d_pre = d_hidden * (1.0 - forward.hidden**2)
        d_inputs = (d_pre @ p["hidden_weight"].T).reshape(
            positions.contexts.shape + (-1,)
        )
        d_embedding = np.zeros_like(p["embedding"])
        np.add.at(d_embedding, positions.contexts, d_inputs)
        return loss, {
            "embedding": d_embedding,
            "hidden_weight": forward.inputs.T @ d_pre,
            "hidden_bias": d_pre.sum(axis=0),
            "output_weight": forward.hidden.T @ d_logits,
            "output_bias": d_logits.sum(axis=0),
        }

    def hidden_states(self, examples: Sequence[ExampleRecord]) -> np.ndarray:
        """Penultimate activation at every response position, one row each."""
        return self._forward(self._positions(examples, True).contexts).hidden


@dataclass(frozen=True, eq=False)
class ModelSnapshot:
    parameters: Mapping[str, np.ndarray] = field(repr=False)
    context_window: int

    @classmethod
    def capture(cls, model: ToyLanguageModel) -> "ModelSnapshot":
        frozen = {}
        for name, value in model.parameters.items():
            copied = np.array(value, copy=True)
            copied.setflags(write=False)
            frozen[name] = copied
        return cls(MappingProxyType(frozen), model.context_window)

    @cached_property
    def model(self) -> ToyLanguageModel:
        return ToyLanguageModel(self.parameters, self.context_window)


def nll_loss(model: ToyLanguageModel, batch: Batch) -> float:
    return float(np.mean(model.example_nll(batch.require_examples())))


def backward_gradients(model: ToyLanguageModel, batch: Batch) -> Parameters:
    return model.loss_and_gradients(batch)[1]


def gradient_norm(gradients: Mapping[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(gradients[n] ** 2) for n in sorted(gradients))))


def grad_l2_norm(model: ToyLanguageModel, batch: Batch) -> float:
    return gradient_norm(backward_gradients(model, batch))


def perplexity(model: ToyLanguageModel, example: ExampleRecord) -> float:
    return float(np.exp(model.example_nll([example])[0]))


def perplexities(
    model: ToyLanguageModel, examples: Sequence[ExampleRecord]
) -> np.ndarray:
    return np.exp(model.example_nll(examples))


def hidden_state(model: ToyLanguageModel, batch: Batch) -> np.ndarray:
    """Mean activation over the response positions of the whole batch."""
    return np.mean(model.hidden_states(batch.require_examples()), axis=0)

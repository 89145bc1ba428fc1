import math
from abc import abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Literal, Optional, Protocol, Sequence

import numpy as np

from errors import (
    DegenerateStateError,
    InvalidBatchError,
    InvalidConfigError,
    InvalidRewardError,
    InvalidStateError,
)
from mixture import ExampleRecord
from toy_trainer import (
    Batch,
    ModelSnapshot,
    ToyLanguageModel,
    grad_l2_norm,
    hidden_state,
    nll_loss,
    perplexities,
)

RewardLevel = Literal["global", "local"]


@dataclass(frozen=True)
class RewardSample:
    level: RewardLevel
    subset_id: int
    group_id: Optional[int]
    value: float
    step: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise InvalidRewardError(
                f"{self.level} reward for subset {self.subset_id} is {self.value}"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def global_reward_gradnorm(model: ToyLanguageModel, batch: Batch) -> float:
    return grad_l2_norm(model, batch)


def local_reward_ppl_ratio(
    model: ToyLanguageModel, snapshot: Optional[ModelSnapshot], batch: Batch
) -> float:
    """Mean over the batch of PPL under the current model / PPL under theta_0."""
    if snapshot is None:
        raise InvalidStateError("The initial model snapshot has not been captured")
    examples = batch.require_examples()
    current = perplexities(model, examples)
    initial = perplexities(snapshot.model, examples)
    return float(np.mean(current / initial))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    norm_a, norm_b = np.linalg.norm(a), np.linalg.norm(b)
    if norm_a == 0 or norm_b == 0:
        raise DegenerateStateError("Cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (norm_a * norm_b), -1.0, 1.0))


def cos_sim_reward(model: ToyLanguageModel, batch_a: Batch, batch_b: Batch) -> float:
    return cosine_similarity(hidden_state(model, batch_a), hidden_state(model, batch_b))


def mean_ppl_reward(model: ToyLanguageModel, batch: Batch) -> float:
    return float(np.mean(perplexities(model, batch.require_examples())))


def mean_loss_reward(model: ToyLanguageModel, batch: Batch) -> float:
    return nll_loss(model, batch)


class RewardFunction(Protocol):
    name: str
    batches_per_unit: int

    @abstractmethod
    def __call__(
        self,
        model: ToyLanguageModel,
        snapshot: Optional[ModelSnapshot],
        batches: Sequence[Batch],
    ) -> float:
        ...


class GradNormReward(RewardFunction):
    name = "gradnorm"
    batches_per_unit = 1

    def __call__(self, model, snapshot, batches):
        return global_reward_gradnorm(model, batches[0])


class CosSimReward(RewardFunction):
    """Similarity of the hidden states of two disjoint batches."""

    name = "cossim"
    batches_per_unit = 2

    def __call__(self, model, snapshot, batches):
        return cos_sim_reward(model, batches[0], batches[1])


class PplRatioReward(RewardFunction):
    name = "ppl_ratio"
    batches_per_unit = 1

    def __call__(self, model, snapshot, batches):
        return local_reward_ppl_ratio(model, snapshot, batches[0])


class MeanPplReward(RewardFunction):
    name = "ppl"
    batches_per_unit = 1

    def __call__(self, model, snapshot, batches):
        return mean_ppl_reward(model, batches[0])


class MeanLossReward(RewardFunction):
    name = "loss"
    batches_per_unit = 1

    def __call__(self, model, snapshot, batches):
        return mean_loss_reward(model, batches[0])


GLOBAL_REWARDS: dict[str, RewardFunction] = {
    r.name: r for r in (GradNormReward(), CosSimReward())
}
LOCAL_REWARDS: dict[str, RewardFunction] = {
    r.name: r for r in (PplRatioReward(), MeanPplReward(), MeanLossReward())
}


def reward_function(level: RewardLevel, name: str) -> RewardFunction:
    registry = GLOBAL_REWARDS if level == "global" else LOCAL_REWARDS
    try:
        return registry[name]
    except KeyError:
        raise InvalidConfigError(
            f"Unknown {level} reward {name!r}, expected one of {', '.join(registry)}"
        ) from None


def draw_reward_batches(
    examples: Sequence[ExampleRecord],
    size: int,
    count: int,
    rng: np.random.Generator,
) -> list[Batch]:
    """
    One batch is drawn uniformly with replacement. Several batches are drawn
    without replacement and split evenly, so they never share an example.
    """
    if not examples:
        raise InvalidBatchError("Cannot draw a reward batch from an empty pool")
    if count == 1:
        picks = rng.integers(0, len(examples), size=size)
        return [Batch.of(examples[k] for k in picks)]
    if len(examples) < count:
        raise InvalidBatchError(
            f"{count} disjoint batches need at least {count} examples, got {len(examples)}"
        )
    total = min(count * size, len(examples))
    picks = rng.choice(len(examples), size=total, replace=False)
    return [
        Batch.of(examples[k] for k in chunk) for chunk in np.array_split(picks, count)
    ]


RewardTask = Callable[[], float]


class RewardCalculator(Protocol):
    @abstractmethod
    def compute_rewards(self, tasks: Sequence[RewardTask]) -> list[float]:
        """Results come back in task order."""
        ...


class SequentialRewardCalculator(RewardCalculator):
    def compute_rewards(self, tasks: Sequence[RewardTask]) -> list[float]:
        return [task() for task in tasks]


class ThreadPoolRewardCalculator(RewardCalculator):
    def __init__(self, workers: int):
        self.workers = workers

    def compute_rewards(self, tasks: Sequence[RewardTask]) -> list[float]:
        with ThreadPoolExecutor(max_workers=self.workers) as executor:
            futures = [executor.submit(task) for task in tasks]
            return [future.result() for future in futures]


def reward_calculator(workers: int) -> RewardCalculator:
    if workers <= 1:
        return SequentialRewardCalculator()
    return ThreadPoolRewardCalculator(workers)

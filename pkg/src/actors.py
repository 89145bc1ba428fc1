import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from errors import DegenerateStateError, InvalidIndexError, InvalidRewardError
from mixture import temperature_distribution
from mixture.temperature import Tau

logger = logging.getLogger(__name__)

ACTOR_PARAMETER_NAMES = (
    "layer1_weight",
    "layer1_bias",
    "layer2_weight",
    "layer2_bias",
    "unit_bias",
)
COLLAPSE_THRESHOLD = 1e-6


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or len(p) == 0:
            raise DegenerateStateError(
                "A sampling distribution needs at least one unit"
            )
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise DegenerateStateError(f"Sampling probabilities must be positive: {p}")
        if abs(p.sum() - 1.0) > 1e-9:
            raise DegenerateStateError(f"Sampling probabilities sum to {p.sum()}")
        p.setflags(write=False)
        object.__setattr__(self, "probabilities", p)

    def __len__(self) -> int:
        return len(self.probabilities)

    def tolist(self) -> list[float]:
        return self.probabilities.tolist()


class ActorNetwork:
    """
    Two-layer policy over U sampling units. Unit u is described by row u of
    a fixed feature table; its logit is

        w2 . tanh(W1^T f_u + b1) + b2 + unit_bias[u]

    and the policy is the softmax over the U logits.
    """

    def __init__(
        self,
        features: np.ndarray,
        parameters: Mapping[str, np.ndarray],
        learning_rate: float,
    ):
        self.features = np.array(features, dtype=np.float64)
        self.features.setflags(write=False)
        self.parameters = {
            name: np.array(parameters[name], dtype=np.float64)
            for name in ACTOR_PARAMETER_NAMES
        }
        self.learning_rate = learning_rate

    @property
    def unit_count(self) -> int:
        return self.features.shape[0]

    def copy(self) -> "ActorNetwork":
        return ActorNetwork(self.features, self.parameters, self.learning_rate)

    def _hidden(self) -> np.ndarray:
        p = self.parameters
        return np.tanh(self.features @ p["layer1_weight"] + p["layer1_bias"])

    def network_output(self) -> np.ndarray:
        p = self.parameters
        return self._hidden() @ p["layer2_weight"] + p["layer2_bias"][0]

    def logits(self) -> np.ndarray:
        return self.network_output() + self.parameters["unit_bias"]

    def log_probabilities(self) -> np.ndarray:
        return log_softmax(self.logits())

    def distribution(self) -> SamplingDistribution:
        return SamplingDistribution(softmax(self.logits()))

    def backward(self, logit_gradient: np.ndarray) -> dict[str, np.ndarray]:
        """Chain rule from d/d(logits) to every actor parameter."""
        p = self.parameters
        hidden = self._hidden()
        d_pre = np.outer(logit_gradient, p["layer2_weight"]) * (1.0 - hidden**2)
        return {
            "layer1_weight": self.features.T @ d_pre,
            "layer1_bias": d_pre.sum(axis=0),
            "layer2_weight": hidden.T @ logit_gradient,
            "layer2_bias": np.array([logit_gradient.sum()]),
            "unit_bias": np.array(logit_gradient, dtype=np.float64),
        }

    def ascend(self, gradients: Mapping[str, np.ndarray], scale: float) -> None:
        for name in ACTOR_PARAMETER_NAMES:
            self.parameters[name] += scale * gradients[name]


def one_hot_features(unit_count: int) -> np.ndarray:
    return np.eye(unit_count)


def init_actor_from_prior(
    sizes: Sequence[int],
    tau: Tau,
    seed: int,
    hidden_dim: int = 32,
    learning_rate: float = 1e-4,
    init_scale: float = 1e-3,
    features: Optional[np.ndarray] = None,
) -> ActorNetwork:
    """
    Small random weights everywhere; the per-unit output bias absorbs the
    network's own output so the initial policy is exactly q_tau(sizes).
    """
    prior = temperature_distribution(sizes, tau)
    if features is None:
        features = one_hot_features(len(sizes))
    rng = np.random.default_rng(seed)
    actor = ActorNetwork(
        features,
        {
            "layer1_weight": rng.normal(
                0.0, init_scale, (features.shape[1], hidden_dim)
            ),
            "layer1_bias": rng.normal(0.0, init_scale, hidden_dim),
            "layer2_weight": rng.normal(0.0, init_scale, hidden_dim),
            "layer2_bias": np.zeros(1),
            "unit_bias": np.zeros(len(sizes)),
        },
        learning_rate,
    )
    actor.parameters["unit_bias"] = np.log(prior) - actor.network_output()
    return actor


def actor_distribution(actor: ActorNetwork) -> SamplingDistribution:
    return actor.distribution()


def sample_index(dist: SamplingDistribution, rng: np.random.Generator) -> int:
    """Inverse-CDF draw; always consumes exactly one uniform from ``rng``."""
    u = rng.random()
    index = int(np.searchsorted(np.cumsum(dist.probabilities), u, side="right"))
    return min(index, len(dist) - 1)


def log_prob_gradient(actor: ActorNetwork, unit: int) -> dict[str, np.ndarray]:
    if not 0 <= unit < actor.unit_count:
        raise InvalidIndexError(f"Unit {unit} outside [0, {actor.unit_count})")
    indicator = np.zeros(actor.unit_count)
    indicator[unit] = 1.0
    return actor.backward(indicator - actor.distribution().probabilities)


def reinforce_update(
    actor: ActorNetwork, rewards: Sequence[float], center: bool = False
) -> ActorNetwork:
    """
    psi <- psi + gamma * sum_u R(u) * grad log p(u), summed over every unit
    and applied as one step. With ``center`` the rewards are mean-centred
    first.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (actor.unit_count,):
        raise InvalidRewardError(
            f"Expected {actor.unit_count} rewards, got shape {rewards.shape}"
        )
    if not np.all(np.isfinite(rewards)):
        raise InvalidRewardError(f"Rewards must be finite: {rewards}")
    if center:
        rewards = rewards - rewards.mean()
    # sum_u R(u) (e_u - p) in logit space
    probabilities = actor.distribution().probabilities
    logit_gradient = rewards - probabilities * rewards.sum()
    actor.ascend(actor.backward(logit_gradient), actor.learning_rate)
    return actor


def warn_on_collapse(actor: ActorNetwork, label: str) -> None:
    probabilities = softmax(actor.logits())
    if probabilities.min() < COLLAPSE_THRESHOLD:
        logger.warning(
            "%s distribution collapsed: min probability %.3g at unit %d",
            label,
            probabilities.min(),
            int(probabilities.argmin()),
        )

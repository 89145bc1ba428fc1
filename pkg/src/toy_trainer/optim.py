from dataclasses import dataclass, field
from typing import Literal, Mapping

import numpy as np

from errors import ContractError, InvalidConfigError
from .model import ModelConfig, ToyLanguageModel


@dataclass
class OptimizerState:
    kind: Literal["sgd", "adamw"] = "adamw"
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    schedule: Literal["constant", "linear"] = "constant"
    warmup_fraction: float = 0.1
    total_steps: int = 0
    step: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in ("sgd", "adamw"):
            raise InvalidConfigError(f"Unknown optimizer {self.kind!r}")
        if self.learning_rate <= 0:
            raise InvalidConfigError(
                f"learning rate must be positive: {self.learning_rate}"
            )

    @classmethod
    def from_config(
        cls, config: ModelConfig, learning_rate: float, total_steps: int = 0
    ) -> "OptimizerState":
        return cls(
            kind=config.optimizer,
            learning_rate=learning_rate,
            beta1=config.beta1,
            beta2=config.beta2,
            eps=config.eps,
            weight_decay=config.weight_decay,
            schedule=config.lr_schedule,
            warmup_fraction=config.warmup_fraction,
            total_steps=total_steps,
        )

    def current_learning_rate(self) -> float:
        if self.schedule == "constant" or self.total_steps <= 0:
            return self.learning_rate
        # linear warm-up to the peak, then linear decay to zero at total_steps
        warmup = max(1, round(self.warmup_fraction * self.total_steps))
        if self.step < warmup:
            return self.learning_rate * (self.step + 1) / warmup
        remaining = self.total_steps - self.step
        decay_steps = max(1, self.total_steps - warmup)
        return self.learning_rate * max(0.0, remaining / decay_steps)


def optimizer_step(
    model: ToyLanguageModel,
    state: OptimizerState,
    gradients: Mapping[str, np.ndarray],
) -> ToyLanguageModel:
    """Updates ``model`` in place and advances the step counter."""
    parameters = model.parameters
    if set(gradients) != set(parameters):
        raise ContractError(
            f"Gradient names {sorted(gradients)} do not match {sorted(parameters)}"
        )
    for name, value in parameters.items():
        if np.shape(gradients[name]) != value.shape:
            raise ContractError(
                f"Gradient {name} has shape {np.shape(gradients[name])}, "
                f"expected {value.shape}"
            )
    lr = state.current_learning_rate()
    state.step += 1
    if state.kind == "sgd":
        for name, value in parameters.items():
            value -= lr * gradients[name]
        return model

    t = state.step
    for name, value in parameters.items():
        grad = gradients[name]
        m = state.first_moment.setdefault(name, np.zeros_like(value))
        v = state.second_moment.setdefault(name, np.zeros_like(value))
        m *= state.beta1
        m += (1 - state.beta1) * grad
        v *= state.beta2
        v += (1 - state.beta2) * grad**2
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        value -= lr * state.weight_decay * value
        value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return model

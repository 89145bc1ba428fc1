import logging
from dataclasses import dataclass

import numpy as np

from errors import InvalidConfigError
from mixture import MixtureCorpus
from toy_trainer import ToyLanguageModel

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SubsetMetrics:
    subset_id: int
    perplexity: float
    loss: float
    examples: int


@dataclass(frozen=True)
class Evaluation:
    subsets: tuple[SubsetMetrics, ...]

    @property
    def macro_perplexity(self) -> float:
        return float(np.mean([m.perplexity for m in self.subsets]))

    @property
    def macro_loss(self) -> float:
        return float(np.mean([m.loss for m in self.subsets]))

    def to_dict(self) -> dict:
        return {
            "macro_perplexity": self.macro_perplexity,
            "macro_loss": self.macro_loss,
            "subsets": [
                {
                    "subset": m.subset_id,
                    "perplexity": m.perplexity,
                    "loss": m.loss,
                    "examples": m.examples,
                }
                for m in self.subsets
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Evaluation":
        return cls(
            tuple(
                SubsetMetrics(s["subset"], s["perplexity"], s["loss"], s["examples"])
                for s in data["subsets"]
            )
        )


def evaluate(model: ToyLanguageModel, heldout: MixtureCorpus) -> Evaluation:
    """
    Per-subset mean held-out perplexity and mean response NLL, macro-averaged
    without weighting by subset size.
    """
    if heldout.vocab_size != model.vocab_size:
        raise InvalidConfigError(
            f"Model vocabulary {model.vocab_size} does not match "
            f"held-out vocabulary {heldout.vocab_size}"
        )
    metrics = []
    for subset_id, subset in enumerate(heldout.subsets):
        if subset.size == 0:
            raise InvalidConfigError(f"Held-out subset {subset_id} is empty")
        nll = model.example_nll(subset.examples)
        metrics.append(
            SubsetMetrics(
                subset_id=subset_id,
                perplexity=float(np.mean(np.exp(nll))),
                loss=float(np.mean(nll)),
                examples=subset.size,
            )
        )
    evaluation = Evaluation(tuple(metrics))
    logger.info(
        "Held-out macro perplexity %.4f, macro loss %.4f",
        evaluation.macro_perplexity,
        evaluation.macro_loss,
    )
    return evaluation

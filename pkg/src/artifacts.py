"""
Run outputs. Every run lives in ``<output_dir>/<label>/seed-<s>/``:

    config.json        effective configuration
    trajectory.jsonl   one TrajectoryRecord per step
    summary.jsonl      header + one summary record
    checkpoint/        final model and actor tensors
"""
import json
import logging
from abc import abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol

from actors import ACTOR_PARAMETER_NAMES, ActorNetwork
from driver import (
    Evaluation,
    ExperimentConfig,
    PreparedCorpus,
    RunResult,
    method_label,
    write_trajectory,
)
from errors import CorruptFileError
from jsonl import header, read_jsonl, write_jsonl
from toy_trainer import PARAMETER_NAMES, ToyLanguageModel, load_tensors, save_tensors

logger = logging.getLogger(__name__)

SUMMARY_FORMAT = "hbo-summary"
SUMMARY_VERSION = 1
SEED_PREFIX = "seed-"


@dataclass(frozen=True)
class RunDirectory:
    root: Path

    @classmethod
    def of(cls, output_dir: Path, label: str, seed: int) -> "RunDirectory":
        return cls(output_dir / label / f"{SEED_PREFIX}{seed}")

    @property
    def config_path(self) -> Path:
        return self.root / "config.json"

    @property
    def trajectory_path(self) -> Path:
        return self.root / "trajectory.jsonl"

    @property
    def summary_path(self) -> Path:
        return self.root / "summary.jsonl"

    @property
    def checkpoint_path(self) -> Path:
        return self.root / "checkpoint"


@dataclass(frozen=True)
class RunSummary:
    label: str
    method: str
    seed: int
    fingerprint: str
    total_steps: int
    evaluation: Evaluation

    @property
    def macro_perplexity(self) -> float:
        return self.evaluation.macro_perplexity

    @property
    def macro_loss(self) -> float:
        return self.evaluation.macro_loss


class RunRepository(Protocol):
    @abstractmethod
    def save(
        self,
        config: ExperimentConfig,
        prepared: PreparedCorpus,
        seed: int,
        result: RunResult,
    ) -> RunDirectory:
        ...

    @abstractmethod
    def summaries(self, label_dir: Path) -> dict[int, RunSummary]:
        ...


class FileRunRepository(RunRepository):
    def save(
        self,
        config: ExperimentConfig,
        prepared: PreparedCorpus,
        seed: int,
        result: RunResult,
    ) -> RunDirectory:
        directory = RunDirectory.of(
            Path(config.experiment.output_dir), result.label, seed
        )
        directory.root.mkdir(parents=True, exist_ok=True)
        effective = config.for_seed(seed).to_dict()
        directory.config_path.write_text(
            json.dumps(effective, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        provenance = {
            "label": result.label,
            "seed": seed,
            "fingerprint": prepared.fingerprint,
        }
        write_trajectory(
            directory.trajectory_path,
            result.trajectory,
            subsets=prepared.train.subset_count,
            groups=prepared.train.group_count,
            config=effective,
            **provenance,
        )
        write_jsonl(
            directory.summary_path,
            header(SUMMARY_FORMAT, SUMMARY_VERSION, config=effective, **provenance),
            [
                {
                    **result.summary(),
                    "method": method_label(config.run),
                    "seed": seed,
                    "fingerprint": prepared.fingerprint,
                }
            ],
        )
        save_checkpoint(directory.checkpoint_path, result, provenance)
        logger.info("Wrote %s", directory.root)
        return directory

    def summaries(self, label_dir: Path) -> dict[int, RunSummary]:
        found = {}
        for seed_dir in sorted(label_dir.glob(f"{SEED_PREFIX}*")):
            summary = read_summary(RunDirectory(seed_dir).summary_path)
            found[summary.seed] = summary
        return found


def read_summary(path: Path) -> RunSummary:
    _, rows = read_jsonl(path, SUMMARY_FORMAT, SUMMARY_VERSION)
    for number, row in rows:
        try:
            return RunSummary(
                label=row["label"],
                method=row["method"],
                seed=int(row["seed"]),
                fingerprint=row["fingerprint"],
                total_steps=int(row["total_steps"]),
                evaluation=Evaluation.from_dict(row["evaluation"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFileError(path, number, f"malformed summary ({exc})") from exc
    raise CorruptFileError(path, 2, "missing summary record")


def _actor_tensors(prefix: str, actor: ActorNetwork) -> dict:
    tensors = {f"{prefix}.features": actor.features}
    for name in ACTOR_PARAMETER_NAMES:
        tensors[f"{prefix}.{name}"] = actor.parameters[name]
    return tensors


def save_checkpoint(directory: Path, result: RunResult, metadata: dict) -> Path:
    tensors = {f"model.{n}": result.model.parameters[n] for n in PARAMETER_NAMES}
    actors = {}
    if result.global_actor is not None:
        tensors.update(_actor_tensors("global_actor", result.global_actor))
        actors["global_actor"] = result.global_actor.learning_rate
    for index, actor in enumerate(result.local_actors):
        tensors.update(_actor_tensors(f"local_actor.{index}", actor))
        actors[f"local_actor.{index}"] = actor.learning_rate
    return save_tensors(
        directory,
        tensors,
        {
            **metadata,
            "context_window": result.model.context_window,
            "actors": actors,
        },
    )


def load_checkpoint(
    directory: Path,
) -> tuple[ToyLanguageModel, Optional[ActorNetwork], list[ActorNetwork]]:
    tensors, metadata = load_tensors(directory)
    model = ToyLanguageModel(
        {n: tensors[f"model.{n}"] for n in PARAMETER_NAMES}, metadata["context_window"]
    )
    actors = {
        prefix: ActorNetwork(
            tensors[f"{prefix}.features"],
            {n: tensors[f"{prefix}.{n}"] for n in ACTOR_PARAMETER_NAMES},
            learning_rate,
        )
        for prefix, learning_rate in metadata["actors"].items()
    }
    local_actors = [
        actors[f"local_actor.{i}"]
        for i in range(sum(1 for k in actors if k.startswith("local_actor.")))
    ]
    return model, actors.get("global_actor"), local_actors

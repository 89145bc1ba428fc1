from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from errors import CorruptFileError
from jsonl import header, read_jsonl, write_jsonl
from rewards import RewardSample

TRAJECTORY_FORMAT = "hbo-trajectory"
TRAJECTORY_VERSION = 1

Distribution = tuple[float, ...]


@dataclass(frozen=True)
class TrajectoryRecord:
    """
    One training step. Distributions are the ones sampled from at this step
    and are present only when they differ from the previous record's (or at
    the configured stride); rewards are present at actor-update steps.
    """

    step: int
    subset_id: int
    group_id: Optional[int]
    loss: float
    global_distribution: Optional[Distribution] = None
    local_distributions: Optional[tuple[Distribution, ...]] = None
    rewards: tuple[RewardSample, ...] = ()

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "subset": self.subset_id,
            "group": self.group_id,
            "loss": self.loss,
            "global": None
            if self.global_distribution is None
            else list(self.global_distribution),
            "local": None
            if self.local_distributions is None
            else [list(d) for d in self.local_distributions],
            "rewards": [r.to_dict() for r in self.rewards],
        }

    @classmethod
    def from_dict(cls, row: dict) -> "TrajectoryRecord":
        return cls(
            step=int(row["step"]),
            subset_id=int(row["subset"]),
            group_id=None if row["group"] is None else int(row["group"]),
            loss=float(row["loss"]),
            global_distribution=None
            if row["global"] is None
            else tuple(map(float, row["global"])),
            local_distributions=None
            if row["local"] is None
            else tuple(tuple(map(float, d)) for d in row["local"]),
            rewards=tuple(RewardSample(**r) for r in row["rewards"]),
        )


def distribution_at(
    trajectory: Sequence[TrajectoryRecord], step: int
) -> tuple[Optional[Distribution], Optional[tuple[Distribution, ...]]]:
    """Latest global and local distributions recorded at or before ``step``."""
    global_dist, local_dists = None, None
    for record in trajectory:
        if record.step > step:
            break
        if record.global_distribution is not None:
            global_dist = record.global_distribution
        if record.local_distributions is not None:
            local_dists = record.local_distributions
    return global_dist, local_dists


def total_variation(p: Sequence[float], q: Sequence[float]) -> float:
    return 0.5 * float(np.sum(np.abs(np.asarray(p) - np.asarray(q))))


def subset_counts(
    trajectory: Iterable[TrajectoryRecord], subset_count: int
) -> np.ndarray:
    return np.bincount(
        [r.subset_id for r in trajectory], minlength=subset_count
    ).astype(np.int64)


def write_trajectory(
    path: Path, trajectory: Iterable[TrajectoryRecord], **provenance
) -> Path:
    return write_jsonl(
        path,
        header(TRAJECTORY_FORMAT, TRAJECTORY_VERSION, **provenance),
        (record.to_dict() for record in trajectory),
    )


def read_trajectory(path: Path) -> tuple[dict, list[TrajectoryRecord]]:
    """
    Reads a trajectory back and checks that every record agrees with the
    shape the first one declares: the first record carries the global
    distribution (and the local ones when the run sampled groups), and later
    distributions, subsets and groups stay within that shape.
    """
    head, rows = read_jsonl(path, TRAJECTORY_FORMAT, TRAJECTORY_VERSION)
    records: list[TrajectoryRecord] = []
    for number, row in rows:
        try:
            record = TrajectoryRecord.from_dict(row)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFileError(
                path, number, f"malformed trajectory record ({exc})"
            ) from exc
        problem = _shape_problem(record, records[0] if records else None)
        if problem:
            raise CorruptFileError(path, number, problem)
        records.append(record)
    return head, records


def _shape_problem(
    record: TrajectoryRecord, first: Optional[TrajectoryRecord]
) -> Optional[str]:
    first = first or record
    if first.global_distribution is None:
        return "first record carries no global distribution"
    subset_count = len(first.global_distribution)
    groups = None
    if first.local_distributions is not None:
        groups = [len(d) for d in first.local_distributions]
        if len(groups) != subset_count:
            return f"{len(groups)} local distributions for {subset_count} subsets"

    if record.global_distribution is not None:
        if len(record.global_distribution) != subset_count:
            return f"global distribution does not have {subset_count} entries"
    if record.local_distributions is not None:
        if [len(d) for d in record.local_distributions] != groups:
            return "local distributions do not match the first record"
    if not 0 <= record.subset_id < subset_count:
        return f"subset {record.subset_id} outside [0, {subset_count})"
    if groups is None:
        if record.group_id is not None:
            return "group id in a run without groups"
    elif record.group_id is None or not 0 <= record.group_id < groups[record.subset_id]:
        return f"group {record.group_id} outside subset {record.subset_id}"
    return None

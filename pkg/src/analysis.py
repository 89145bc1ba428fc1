import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
import tomli

from artifacts import RunRepository, RunSummary
from driver import TrajectoryRecord
from errors import InvalidConfigError, MismatchedCorporaError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CompareManifest:
    runs: tuple[Path, ...]
    baseline: Optional[Path] = None

    @classmethod
    def load(cls, path: Path) -> "CompareManifest":
        """
        ``runs`` lists run-label directories (relative to the manifest);
        ``baseline`` names one of them and defaults to the first.
        """
        try:
            with path.open("rb") as source:
                document = tomli.load(source)
        except FileNotFoundError:
            raise InvalidConfigError(f"Manifest not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc
        unknown = set(document) - {"runs", "baseline"}
        if unknown:
            raise InvalidConfigError(
                f"Unknown manifest keys: {', '.join(sorted(unknown))}"
            )
        runs = document.get("runs")
        if not isinstance(runs, list) or not all(isinstance(r, str) for r in runs):
            raise InvalidConfigError("runs: expected a list of run directories")
        baseline = document.get("baseline")
        return cls(
            tuple(path.parent / r for r in runs),
            None if baseline is None else path.parent / baseline,
        )


@dataclass(frozen=True)
class MethodStats:
    label: str
    seeds: tuple[int, ...]
    mean_perplexity: float
    std_perplexity: float
    mean_loss: float
    std_loss: float


@dataclass(frozen=True)
class PairedDifference:
    """Per-seed ``method - baseline`` macro held-out perplexity."""

    label: str
    baseline: str
    per_seed: tuple[tuple[int, float], ...]

    @property
    def mean(self) -> float:
        return float(np.mean([d for _, d in self.per_seed]))

    @property
    def wins(self) -> int:
        return sum(d < 0 for _, d in self.per_seed)

    @property
    def sign(self) -> str:
        if self.mean < 0:
            return "better"
        return "worse" if self.mean > 0 else "equal"


@dataclass(frozen=True)
class ComparisonReport:
    seeds: tuple[int, ...]
    methods: tuple[MethodStats, ...]
    differences: tuple[PairedDifference, ...]

    def lines(self) -> list[str]:
        lines = ["method\tseeds\tppl_mean\tppl_std\tloss_mean\tloss_std"]
        for m in self.methods:
            lines.append(
                f"{m.label}\t{len(m.seeds)}\t{m.mean_perplexity:.4f}\t"
                f"{m.std_perplexity:.4f}\t{m.mean_loss:.4f}\t{m.std_loss:.4f}"
            )
        lines.append("")
        lines.append(
            "method\tbaseline\t"
            + "\t".join(f"seed-{s}" for s in self.seeds)
            + "\tmean_diff\twins\tsign"
        )
        for d in self.differences:
            per_seed = "\t".join(f"{v:+.4f}" for _, v in d.per_seed)
            lines.append(
                f"{d.label}\t{d.baseline}\t{per_seed}\t{d.mean:+.4f}\t"
                f"{d.wins}/{len(d.per_seed)}\t{d.sign}"
            )
        return lines


def _std(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def compare_runs(
    runs: dict[str, dict[int, RunSummary]], baseline: Optional[str] = None
) -> ComparisonReport:
    """
    Mean and sample standard deviation of each method's macro metrics over
    the seeds every method shares, plus paired differences to the baseline.
    """
    if len(runs) < 2:
        raise InvalidConfigError("At least two runs are needed for a comparison")
    baseline = baseline or next(iter(runs))
    if baseline not in runs:
        raise InvalidConfigError(f"Baseline {baseline!r} is not among the runs")
    seeds = tuple(sorted(set.intersection(*(set(s) for s in runs.values()))))
    if not seeds:
        raise InvalidConfigError("The runs share no seed")
    for seed in seeds:
        fingerprints = {
            label: summaries[seed].fingerprint for label, summaries in runs.items()
        }
        if len(set(fingerprints.values())) > 1:
            raise MismatchedCorporaError(
                f"Seed {seed} was trained on different corpora: "
                + ", ".join(f"{k}={v[:12]}" for k, v in fingerprints.items())
            )

    methods, differences = [], []
    for label, summaries in runs.items():
        ppl = [summaries[s].macro_perplexity for s in seeds]
        loss = [summaries[s].macro_loss for s in seeds]
        methods.append(
            MethodStats(
                label,
                seeds,
                float(np.mean(ppl)),
                _std(ppl),
                float(np.mean(loss)),
                _std(loss),
            )
        )
        if label != baseline:
            reference = runs[baseline]
            per_seed = tuple(
                (s, summaries[s].macro_perplexity - reference[s].macro_perplexity)
                for s in seeds
            )
            differences.append(PairedDifference(label, baseline, per_seed))
    logger.info("Compared %d runs over seeds %s", len(runs), list(seeds))
    return ComparisonReport(seeds, tuple(methods), tuple(differences))


def _run_name(directory: Path, taken: dict) -> str:
    return directory.name if directory.name not in taken else str(directory)


def compare_manifest(
    manifest: CompareManifest, repository: RunRepository
) -> ComparisonReport:
    runs = {}
    for directory in manifest.runs:
        summaries = repository.summaries(directory)
        if not summaries:
            raise InvalidConfigError(f"No completed runs under {directory}")
        runs[_run_name(directory, runs)] = summaries
    baseline = None
    if manifest.baseline is not None:
        baseline = next(
            (name for name, d in zip(runs, manifest.runs) if d == manifest.baseline),
            manifest.baseline.name,
        )
    return compare_runs(runs, baseline)


@dataclass(frozen=True)
class PlotTable:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]

    def probability_columns(self, prefix: str) -> list[int]:
        return [k for k, c in enumerate(self.columns) if c.startswith(prefix)]

    def write_csv(self, out: TextIO) -> None:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow(["" if v is None else v for v in row])


def plot_table(trajectory: Iterable[TrajectoryRecord]) -> PlotTable:
    """
    Wide table of step vs every sampling probability (forward-filled between
    the steps where they were recorded) and every reward (blank where none
    was computed).
    """
    trajectory = list(trajectory)
    columns = ["step", "subset", "group", "loss"]
    if not trajectory:
        return PlotTable(tuple(columns), ())
    first = trajectory[0]
    subset_count = len(first.global_distribution)
    group_counts = (
        [len(d) for d in first.local_distributions] if first.local_distributions else []
    )
    units = [(i, j) for i, k in enumerate(group_counts) for j in range(k)]
    columns += [f"global_p{i}" for i in range(subset_count)]
    columns += [f"local_p{i}_{j}" for i, j in units]
    columns += [f"global_r{i}" for i in range(subset_count)]
    columns += [f"local_r{i}_{j}" for i, j in units]

    rows = []
    global_dist, local_dists = first.global_distribution, first.local_distributions
    for record in trajectory:
        if record.global_distribution is not None:
            global_dist = record.global_distribution
        if record.local_distributions is not None:
            local_dists = record.local_distributions
        global_rewards = [None] * subset_count
        local_rewards = {unit: None for unit in units}
        for reward in record.rewards:
            if reward.level == "global":
                global_rewards[reward.subset_id] = reward.value
            else:
                local_rewards[(reward.subset_id, reward.group_id)] = reward.value
        rows.append(
            (
                record.step,
                record.subset_id,
                record.group_id,
                record.loss,
                *global_dist,
                *(local_dists[i][j] for i, j in units),
                *global_rewards,
                *local_rewards.values(),
            )
        )
    return PlotTable(tuple(columns), tuple(rows))

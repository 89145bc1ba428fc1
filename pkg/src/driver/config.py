import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Literal, Mapping, Optional, get_args

import tomli

from errors import ConfigIssues, InvalidConfigError
from mixture import DIFFICULTY_SCORERS, SubsetSpec, parse_tau
from rewards import GLOBAL_REWARDS, LOCAL_REWARDS
from toy_trainer import ModelConfig

RunMode = Literal["hbo", "static", "global-only", "local-only"]
RUN_MODES = get_args(RunMode)
ABLATION_MODES = ("global-only", "local-only")


@dataclass(frozen=True)
class ExperimentManifest:
    label: str = ""
    output_dir: str = "runs"
    seeds: tuple[int, ...] = (0,)
    workers: int = 1

    def validate(self, prefix: str = "experiment") -> ConfigIssues:
        issues = ConfigIssues()
        if not self.output_dir:
            issues.add(f"{prefix}.output_dir", "must not be empty")
        if not self.seeds:
            issues.add(f"{prefix}.seeds", "at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            issues.add(f"{prefix}.seeds", "seeds must be distinct")
        if self.workers < 1:
            issues.add(f"{prefix}.workers", "must be at least 1")
        if "/" in self.label:
            issues.add(f"{prefix}.label", "must not contain '/'")
        return issues


@dataclass(frozen=True)
class CorpusConfig:
    vocab_size: int = 32
    seed: int = 0
    process_seed: int = 0
    heldout_fraction: float = 0.1
    data_fraction: float = 1.0
    subsets: tuple[SubsetSpec, ...] = ()
    difficulty_metric: str = "ifd"
    scorer_warmup_steps: int = 0
    path: Optional[str] = None

    def validate(self, prefix: str = "corpus") -> ConfigIssues:
        issues = ConfigIssues()
        if self.vocab_size < 2:
            issues.add(f"{prefix}.vocab_size", "must be at least 2")
        if not 0.0 < self.heldout_fraction < 1.0:
            issues.add(f"{prefix}.heldout_fraction", "must lie in (0, 1)")
        if not 0.0 < self.data_fraction <= 1.0:
            issues.add(f"{prefix}.data_fraction", "must lie in (0, 1]")
        if self.difficulty_metric not in DIFFICULTY_SCORERS:
            issues.add(
                "difficulty.metric",
                f"expected one of {', '.join(DIFFICULTY_SCORERS)}",
            )
        if self.scorer_warmup_steps < 0:
            issues.add("difficulty.scorer_warmup_steps", "must be non-negative")
        if not self.subsets and self.path is None:
            issues.add(f"{prefix}.subsets", "at least one subset is required")
        for index, spec in enumerate(self.subsets):
            issues.update(spec.validate(f"{prefix}.subsets[{index}]"))
        return issues


@dataclass(frozen=True)
class RunConfig:
    mode: RunMode = "hbo"
    total_steps: int = 3000
    learning_rate: float = 1e-3
    batch_size: int = 16
    group_count: int = 4
    prior_tau: float = 1.0
    actor_lr_global: float = 1e-4
    actor_lr_local: float = 1e-4
    update_freq_global: int = 200
    update_freq_local: int = 200
    actor_hidden_dim: int = 32
    actor_init_scale: float = 1e-3
    center_global: bool = False
    center_local: bool = False
    global_reward: str = "gradnorm"
    local_reward: str = "ppl_ratio"
    reward_batch_size: int = 64
    reward_workers: int = 1
    discard_easiest_fraction: float = 0.0
    eval_every: int = 0
    trajectory_stride: int = 0
    seed: int = 0
    reward_seed: Optional[int] = None

    @property
    def effective_reward_seed(self) -> int:
        return self.seed + 1 if self.reward_seed is None else self.reward_seed

    @property
    def is_ablation(self) -> bool:
        return self.mode in ABLATION_MODES or self.discard_easiest_fraction > 0

    def for_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, reward_seed=None)

    def validate(self, prefix: str = "run") -> ConfigIssues:
        issues = ConfigIssues()
        if self.mode not in RUN_MODES:
            issues.add(f"{prefix}.mode", f"expected one of {', '.join(RUN_MODES)}")
        for name in ("total_steps", "batch_size", "group_count"):
            if getattr(self, name) < 1:
                issues.add(f"{prefix}.{name}", "must be at least 1")
        if self.learning_rate <= 0:
            issues.add(f"{prefix}.learning_rate", "must be positive")
        try:
            parse_tau(self.prior_tau)
        except InvalidConfigError as exc:
            issues.add("actors.prior_tau", str(exc))
        for name, key in (
            ("actor_lr_global", "lr_global"),
            ("actor_lr_local", "lr_local"),
        ):
            if getattr(self, name) <= 0:
                issues.add(f"actors.{key}", "must be positive")
        for name, key in (
            ("update_freq_global", "update_frequency_global"),
            ("update_freq_local", "update_frequency_local"),
        ):
            if getattr(self, name) < 1:
                issues.add(f"actors.{key}", "must be at least 1")
        if self.actor_hidden_dim < 1:
            issues.add("actors.hidden_dim", "must be at least 1")
        if self.actor_init_scale <= 0:
            issues.add("actors.init_scale", "must be positive")
        if self.global_reward not in GLOBAL_REWARDS:
            issues.add("rewards.global", f"expected one of {', '.join(GLOBAL_REWARDS)}")
        if self.local_reward not in LOCAL_REWARDS:
            issues.add("rewards.local", f"expected one of {', '.join(LOCAL_REWARDS)}")
        if self.reward_batch_size < 1:
            issues.add("rewards.batch_size", "must be at least 1")
        if self.reward_workers < 1:
            issues.add("rewards.workers", "must be at least 1")
        if not 0.0 <= self.discard_easiest_fraction < 1.0:
            issues.add(f"{prefix}.discard_easiest_fraction", "must lie in [0, 1)")
        elif self.discard_easiest_fraction > 0 and self.mode == "static":
            issues.add(
                f"{prefix}.discard_easiest_fraction",
                "conflicts with mode 'static'; discarding needs grouped sampling",
            )
        for name in ("eval_every", "trajectory_stride"):
            if getattr(self, name) < 0:
                issues.add(f"{prefix}.{name}", "must be non-negative")
        return issues


def method_label(run: RunConfig) -> str:
    if run.mode == "static":
        tau = parse_tau(run.prior_tau)
        if math.isinf(tau):
            return "Uni."
        if tau == 1.0:
            return "Prop."
        if tau == 10.0:
            return "Temp."
        return f"Temp.(τ={tau:g})"
    return {"hbo": "HBO", "global-only": "HBO-global", "local-only": "HBO-local"}[
        run.mode
    ]


def _integer(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise TypeError(f"expected an integer, got {value!r}")
    return value


def _real(value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(f"expected a number, got {value!r}")
    return float(value)


def _flag(value) -> bool:
    if not isinstance(value, bool):
        raise TypeError(f"expected true or false, got {value!r}")
    return value


def _text(value) -> str:
    if not isinstance(value, str):
        raise TypeError(f"expected a string, got {value!r}")
    return value


def _seeds(value) -> tuple[int, ...]:
    if not isinstance(value, list):
        raise TypeError(f"expected a list of integers, got {value!r}")
    return tuple(_integer(v) for v in value)


def _values(value) -> tuple:
    if not isinstance(value, list):
        raise TypeError(f"expected a list, got {value!r}")
    return tuple(value)


Converter = Callable[[Any], Any]

# section -> key -> (converter, "component.field" targets)
_KEYS: dict[str, dict[str, tuple[Converter, tuple[str, ...]]]] = {
    "experiment": {
        "label": (_text, ("experiment.label",)),
        "output_dir": (_text, ("experiment.output_dir",)),
        "seeds": (_seeds, ("experiment.seeds",)),
        "workers": (_integer, ("experiment.workers",)),
    },
    "corpus": {
        "vocab_size": (_integer, ("corpus.vocab_size",)),
        "seed": (_integer, ("corpus.seed",)),
        "process_seed": (_integer, ("corpus.process_seed",)),
        "heldout_fraction": (_real, ("corpus.heldout_fraction",)),
        "data_fraction": (_real, ("corpus.data_fraction",)),
        "path": (_text, ("corpus.path",)),
    },
    "difficulty": {
        "metric": (_text, ("corpus.difficulty_metric",)),
        "scorer_warmup_steps": (_integer, ("corpus.scorer_warmup_steps",)),
        "group_count": (_integer, ("run.group_count",)),
    },
    "model": {
        "context_window": (_integer, ("model.context_window",)),
        "embedding_dim": (_integer, ("model.embedding_dim",)),
        "hidden_dim": (_integer, ("model.hidden_dim",)),
        "optimizer": (_text, ("model.optimizer",)),
        "beta1": (_real, ("model.beta1",)),
        "beta2": (_real, ("model.beta2",)),
        "eps": (_real, ("model.eps",)),
        "weight_decay": (_real, ("model.weight_decay",)),
        "lr_schedule": (_text, ("model.lr_schedule",)),
        "warmup_fraction": (_real, ("model.warmup_fraction",)),
    },
    "actors": {
        "prior_tau": (parse_tau, ("run.prior_tau",)),
        "lr_global": (_real, ("run.actor_lr_global",)),
        "lr_local": (_real, ("run.actor_lr_local",)),
        "update_frequency": (
            _integer,
            ("run.update_freq_global", "run.update_freq_local"),
        ),
        "update_frequency_global": (_integer, ("run.update_freq_global",)),
        "update_frequency_local": (_integer, ("run.update_freq_local",)),
        "hidden_dim": (_integer, ("run.actor_hidden_dim",)),
        "init_scale": (_real, ("run.actor_init_scale",)),
        "center_rewards": (_flag, ("run.center_global", "run.center_local")),
        "center_global": (_flag, ("run.center_global",)),
        "center_local": (_flag, ("run.center_local",)),
    },
    "rewards": {
        "global": (_text, ("run.global_reward",)),
        "local": (_text, ("run.local_reward",)),
        "batch_size": (_integer, ("run.reward_batch_size",)),
        "workers": (_integer, ("run.reward_workers",)),
    },
    "run": {
        "mode": (_text, ("run.mode",)),
        "total_steps": (_integer, ("run.total_steps",)),
        "learning_rate": (_real, ("run.learning_rate",)),
        "batch_size": (_integer, ("run.batch_size",)),
        "discard_easiest_fraction": (_real, ("run.discard_easiest_fraction",)),
        "eval_every": (_integer, ("run.eval_every",)),
        "trajectory_stride": (_integer, ("run.trajectory_stride",)),
        "seed": (_integer, ("run.seed",)),
        "reward_seed": (_integer, ("run.reward_seed",)),
    },
    "sweep": {
        "parameter": (_text, ("sweep.parameter",)),
        "values": (_values, ("sweep.values",)),
    },
}

_SUBSET_KEYS: dict[str, tuple[Converter, str]] = {
    "kind": (_text, "generator_kind"),
    "size": (_integer, "size"),
    "transition_entropy": (_real, "transition_entropy"),
    "noise_spread": (_real, "noise_spread"),
    "noise_floor": (_real, "noise_floor"),
    "instruction_length": (_integer, "instruction_length"),
    "response_length": (_integer, "response_length"),
    "template_count": (_integer, "template_count"),
    "name": (_text, "name"),
}
_REQUIRED_SUBSET_KEYS = ("kind", "size")

SWEEPABLE: dict[str, tuple[str, str]] = {
    "update_frequency": ("actors", "update_frequency"),
    "prior_tau": ("actors", "prior_tau"),
    "group_count": ("difficulty", "group_count"),
    "discard_easiest_fraction": ("run", "discard_easiest_fraction"),
    "global_reward": ("rewards", "global"),
    "local_reward": ("rewards", "local"),
    "difficulty_metric": ("difficulty", "metric"),
    "data_fraction": ("corpus", "data_fraction"),
    "mode": ("run", "mode"),
}


@dataclass(frozen=True)
class SweepConfig:
    parameter: Optional[str] = None
    values: tuple = ()

    def validate(self, prefix: str = "sweep") -> ConfigIssues:
        issues = ConfigIssues()
        if self.parameter is None:
            if self.values:
                issues.add(f"{prefix}.parameter", "missing required field")
            return issues
        if self.parameter not in SWEEPABLE:
            issues.add(
                f"{prefix}.parameter",
                f"cannot sweep {self.parameter!r}, "
                f"expected one of {', '.join(SWEEPABLE)}",
            )
        if not self.values:
            issues.add(f"{prefix}.values", "at least one value is required")
        return issues


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: ExperimentManifest = field(default_factory=ExperimentManifest)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    run: RunConfig = field(default_factory=RunConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    @property
    def label(self) -> str:
        return self.experiment.label or method_label(self.run)

    def validate(self) -> ConfigIssues:
        return (
            ConfigIssues()
            .update(self.experiment.validate())
            .update(self.corpus.validate())
            .update(self.model.validate())
            .update(self.run.validate())
            .update(self.sweep.validate())
        )

    def for_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, run=self.run.for_seed(seed))

    def with_value(self, parameter: str, value) -> "ExperimentConfig":
        """A copy with one sweepable parameter set, validated."""
        if parameter not in SWEEPABLE:
            raise InvalidConfigError(f"cannot sweep {parameter!r}")
        section, key = SWEEPABLE[parameter]
        issues = ConfigIssues()
        updates = _convert({section: {key: value}}, issues)
        issues.raise_if_invalid()
        config = replace(
            self,
            corpus=replace(self.corpus, **updates["corpus"]),
            run=replace(self.run, **updates["run"]),
        )
        config.validate().raise_if_invalid()
        return config

    def to_dict(self) -> dict:
        return _json_safe(asdict(self))


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def _convert(document: Mapping, issues: ConfigIssues) -> dict[str, dict]:
    values = {c: {} for c in ("experiment", "corpus", "model", "run", "sweep")}
    for section, table in document.items():
        keys = _KEYS.get(section)
        if keys is None:
            issues.add(section, "unknown section")
            continue
        if not isinstance(table, dict):
            issues.add(section, "expected a table")
            continue
        for key, raw in table.items():
            if section == "corpus" and key == "subsets":
                continue
            if key not in keys:
                issues.add(f"{section}.{key}", "unknown key")
                continue
            converter, targets = keys[key]
            try:
                value = converter(raw)
            except (TypeError, ValueError) as exc:
                issues.add(f"{section}.{key}", str(exc))
                continue
            for target in targets:
                component, name = target.split(".")
                values[component][name] = value
    return values


def _subsets(tables, issues: ConfigIssues) -> tuple[SubsetSpec, ...]:
    if tables is None:
        return ()
    if not isinstance(tables, list):
        issues.add("corpus.subsets", "expected an array of tables")
        return ()
    specs = []
    for index, table in enumerate(tables):
        prefix = f"corpus.subsets[{index}]"
        if not isinstance(table, dict):
            issues.add(prefix, "expected a table")
            continue
        arguments, ok = {}, True
        for key in _REQUIRED_SUBSET_KEYS:
            if key not in table:
                issues.add(f"{prefix}.{key}", "missing required field")
                ok = False
        for key, raw in table.items():
            if key not in _SUBSET_KEYS:
                issues.add(f"{prefix}.{key}", "unknown key")
                ok = False
                continue
            converter, name = _SUBSET_KEYS[key]
            try:
                arguments[name] = converter(raw)
            except (TypeError, ValueError) as exc:
                issues.add(f"{prefix}.{key}", str(exc))
                ok = False
        if ok:
            specs.append(SubsetSpec(**arguments))
    return tuple(specs)


def parse_config(document: Mapping) -> ExperimentConfig:
    issues = ConfigIssues()
    values = _convert(document, issues)
    corpus_table = document.get("corpus", {})
    subsets = _subsets(
        corpus_table.get("subsets") if isinstance(corpus_table, dict) else None, issues
    )
    issues.raise_if_invalid()
    config = ExperimentConfig(
        experiment=ExperimentManifest(**values["experiment"]),
        corpus=CorpusConfig(subsets=subsets, **values["corpus"]),
        model=ModelConfig(**values["model"]),
        run=RunConfig(**values["run"]),
        sweep=SweepConfig(**values["sweep"]),
    )
    config.validate().raise_if_invalid()
    return config


def load_config(path: Path) -> ExperimentConfig:
    try:
        with path.open("rb") as source:
            document = tomli.load(source)
    except FileNotFoundError:
        raise InvalidConfigError(f"Config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise InvalidConfigError(f"{path}: {exc}") from exc
    return parse_config(document)

import hashlib
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property, partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from actors import (
    ActorNetwork,
    SamplingDistribution,
    init_actor_from_prior,
    reinforce_update,
    sample_index,
    warn_on_collapse,
)
from errors import InvalidConfigError, InvalidStateError
from mixture import (
    GROUP_GRANULARITIES,
    ExampleRecord,
    MixtureCorpus,
    difficulty_scorer,
    discard_easiest,
    generate_synthetic_mixture,
    load_corpus,
    parse_tau,
    partition_by_difficulty,
    score_corpus,
    split_heldout,
    subsample,
    temperature_distribution,
)
from rewards import (
    RewardCalculator,
    RewardSample,
    draw_reward_batches,
    reward_calculator,
    reward_function,
)
from toy_trainer import (
    Batch,
    ModelConfig,
    ModelSnapshot,
    OptimizerState,
    ToyLanguageModel,
    optimizer_step,
)
from .config import ExperimentConfig, RunConfig, method_label
from .evaluation import Evaluation, evaluate
from .trajectory import Distribution, TrajectoryRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreparedCorpus:
    train: MixtureCorpus
    heldout: MixtureCorpus

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.train.fingerprint.encode("ascii"))
        digest.update(self.heldout.fingerprint.encode("ascii"))
        return digest.hexdigest()


def heldout_path(path: Path) -> Path:
    return path.with_name(f"{path.stem}.heldout{path.suffix}")


def training_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1])


def draw_training_batch(
    pool: Sequence[ExampleRecord], size: int, rng: np.random.Generator
) -> Batch:
    return Batch.of(pool[k] for k in rng.integers(0, len(pool), size=size))


def scoring_model(
    train: MixtureCorpus, config: ExperimentConfig
) -> ToyLanguageModel:
    """The frozen initial model, optionally warmed up on uniform mixture batches."""
    model = ToyLanguageModel.initialize(
        train.vocab_size, config.model, config.corpus.seed
    )
    steps = config.corpus.scorer_warmup_steps
    if steps:
        examples = list(train.examples())
        rng = np.random.default_rng([config.corpus.seed, 3])
        optimizer = OptimizerState.from_config(
            config.model, config.run.learning_rate, steps
        )
        for _ in range(steps):
            _, gradients = model.loss_and_gradients(
                draw_training_batch(examples, config.run.batch_size, rng)
            )
            optimizer_step(model, optimizer, gradients)
        logger.info("Warmed up the difficulty scorer for %d steps", steps)
    return model


def regroup(corpus: MixtureCorpus, k: int) -> MixtureCorpus:
    """Re-cuts a scored corpus into ``k`` groups using the stored difficulties."""
    if corpus.partitioned and corpus.group_count == k:
        return corpus
    if not all(e.difficulty is not None for e in corpus.examples()):
        raise InvalidStateError("Corpus has no difficulty scores to regroup by")
    subsets = [s.examples for s in corpus.subsets]
    return partition_by_difficulty(
        MixtureCorpus.unpartitioned(subsets, corpus.vocab_size),
        [[e.difficulty for e in s] for s in subsets],
        k,
    )


def prepare_corpus(config: ExperimentConfig) -> PreparedCorpus:
    """
    Generates (or loads) the mixture, withholds the held-out portion, and
    partitions the training portion by difficulty.
    """
    corpus_config = config.corpus
    if corpus_config.path is not None:
        path = Path(corpus_config.path)
        train = regroup(load_corpus(path), config.run.group_count)
        heldout = load_corpus(heldout_path(path))
        if train.vocab_size != heldout.vocab_size:
            raise InvalidConfigError(
                f"{path} and its held-out file disagree on vocabulary"
            )
        return PreparedCorpus(train, heldout)

    full = generate_synthetic_mixture(
        corpus_config.subsets,
        corpus_config.vocab_size,
        corpus_config.seed,
        corpus_config.process_seed,
    )
    train, heldout = split_heldout(
        full, corpus_config.heldout_fraction, corpus_config.seed
    )
    train = subsample(train, corpus_config.data_fraction, corpus_config.seed)
    scores = score_corpus(
        scoring_model(train, config),
        train,
        difficulty_scorer(corpus_config.difficulty_metric),
    )
    train = partition_by_difficulty(train, scores, config.run.group_count)
    return PreparedCorpus(train, heldout)


class SamplingPolicy:
    """A learned actor or a frozen distribution over sampling units."""

    def __init__(
        self,
        name: str,
        actor: Optional[ActorNetwork] = None,
        fixed: Optional[SamplingDistribution] = None,
    ):
        self.name = name
        self.actor = actor
        self.fixed = fixed
        self._distribution: Optional[SamplingDistribution] = fixed

    @classmethod
    def learned(cls, name: str, actor: ActorNetwork) -> "SamplingPolicy":
        return cls(name, actor=actor)

    @classmethod
    def frozen(cls, name: str, probabilities: np.ndarray) -> "SamplingPolicy":
        return cls(name, fixed=SamplingDistribution(probabilities))

    @property
    def learnable(self) -> bool:
        return self.actor is not None

    def distribution(self) -> SamplingDistribution:
        if self._distribution is None:
            self._distribution = self.actor.distribution()
        return self._distribution

    def update(self, rewards: Sequence[float], center: bool) -> None:
        reinforce_update(self.actor, rewards, center)
        self._distribution = None
        warn_on_collapse(self.actor, self.name)
        logger.debug("%s distribution now %s", self.name, self.distribution().tolist())


@dataclass
class RunResult:
    label: str
    model: ToyLanguageModel
    global_actor: Optional[ActorNetwork]
    local_actors: list[ActorNetwork]
    final_global: Distribution
    final_local: Optional[tuple[Distribution, ...]]
    evaluation: Optional[Evaluation]
    trajectory: list[TrajectoryRecord]
    total_steps: int
    evaluations: list[tuple[int, Evaluation]] = field(default_factory=list)

    @property
    def macro_perplexity(self) -> float:
        return self.evaluation.macro_perplexity

    def summary(self) -> dict:
        return {
            "label": self.label,
            "total_steps": self.total_steps,
            "evaluation": None
            if self.evaluation is None
            else self.evaluation.to_dict(),
            "evaluations": [
                {"step": step, **evaluation.to_dict()}
                for step, evaluation in self.evaluations
            ],
            "final_global": list(self.final_global),
            "final_local": None
            if self.final_local is None
            else [list(d) for d in self.final_local],
        }


def _scheduled(step: int, frequency: int, total_steps: int) -> bool:
    # a frequency beyond the horizon freezes the actor, including at step 0
    return frequency <= total_steps and step % frequency == 0


class _Session:
    def __init__(
        self,
        corpus: MixtureCorpus,
        config: RunConfig,
        model_config: ModelConfig,
        total_steps: int,
    ):
        self.corpus = corpus
        self.config = config
        self.total_steps = total_steps
        self.model = ToyLanguageModel.initialize(
            corpus.vocab_size, model_config, config.seed
        )
        self.snapshot: ModelSnapshot = self.model.snapshot()
        self.optimizer = OptimizerState.from_config(
            model_config, config.learning_rate, total_steps
        )
        self.train_rng = training_rng(config.seed)
        self.reward_rng = np.random.default_rng(config.effective_reward_seed)
        self.calculator: RewardCalculator = reward_calculator(config.reward_workers)

    def train_step(self, pool: Sequence[ExampleRecord]) -> float:
        batch = draw_training_batch(pool, self.config.batch_size, self.train_rng)
        loss, gradients = self.model.loss_and_gradients(batch)
        optimizer_step(self.model, self.optimizer, gradients)
        return loss

    def rewards(
        self,
        level: str,
        name: str,
        pools: list[tuple[int, Optional[int], Sequence]],
        step: int,
    ) -> list[RewardSample]:
        function = reward_function(level, name)
        # batches come off the reward stream in unit order before any computing
        batches = [
            draw_reward_batches(
                pool,
                self.config.reward_batch_size,
                function.batches_per_unit,
                self.reward_rng,
            )
            for _, _, pool in pools
        ]
        values = self.calculator.compute_rewards(
            [partial(function, self.model, self.snapshot, b) for b in batches]
        )
        return [
            RewardSample(level, subset_id, group_id, float(value), step)
            for (subset_id, group_id, _), value in zip(pools, values)
        ]


def _train(
    corpus: MixtureCorpus,
    pools: list[list[Sequence[ExampleRecord]]],
    global_policy: SamplingPolicy,
    local_policies: list[SamplingPolicy],
    config: RunConfig,
    model_config: ModelConfig,
    heldout: Optional[MixtureCorpus],
    total_steps: int,
    label: str,
    group_sampling: bool = True,
) -> RunResult:
    session = _Session(corpus, config, model_config, total_steps)
    trajectory, evaluations = [], []
    last_global, last_local = None, None
    update_locals = any(p.learnable for p in local_policies)
    stride = config.trajectory_stride

    for step in range(total_steps):
        global_dist = global_policy.distribution()
        local_dists = [p.distribution() for p in local_policies]
        subset_id = sample_index(global_dist, session.train_rng)
        group_id = sample_index(local_dists[subset_id], session.train_rng)
        loss = session.train_step(pools[subset_id][group_id])

        rewards = []
        if global_policy.learnable and _scheduled(
            step, config.update_freq_global, total_steps
        ):
            samples = session.rewards(
                "global",
                config.global_reward,
                [(i, None, s.examples) for i, s in enumerate(corpus.subsets)],
                step,
            )
            global_policy.update([r.value for r in samples], config.center_global)
            rewards.extend(samples)
        if update_locals and _scheduled(step, config.update_freq_local, total_steps):
            samples = session.rewards(
                "local",
                config.local_reward,
                [
                    (i, j, group)
                    for i, s in enumerate(corpus.subsets)
                    for j, group in enumerate(s.groups)
                ],
                step,
            )
            for subset, policy in enumerate(local_policies):
                if policy.learnable:
                    policy.update(
                        [r.value for r in samples if r.subset_id == subset],
                        config.center_local,
                    )
            rewards.extend(samples)

        on_stride = stride > 0 and step % stride == 0
        global_now = tuple(global_dist.tolist())
        local_now = None
        if group_sampling:
            local_now = tuple(tuple(d.tolist()) for d in local_dists)
        trajectory.append(
            TrajectoryRecord(
                step=step,
                subset_id=subset_id,
                group_id=group_id if group_sampling else None,
                loss=loss,
                global_distribution=global_now
                if on_stride or global_now != last_global
                else None,
                local_distributions=local_now
                if group_sampling and (on_stride or local_now != last_local)
                else None,
                rewards=tuple(rewards),
            )
        )
        last_global, last_local = global_now, local_now

        if heldout is None or not config.eval_every:
            continue
        if (step + 1) % config.eval_every == 0:
            evaluations.append((step + 1, evaluate(session.model, heldout)))

    result = RunResult(
        label=label,
        model=session.model,
        global_actor=global_policy.actor,
        local_actors=[p.actor for p in local_policies if p.learnable],
        final_global=tuple(global_policy.distribution().tolist()),
        final_local=tuple(tuple(p.distribution().tolist()) for p in local_policies)
        if group_sampling
        else None,
        evaluation=None if heldout is None else evaluate(session.model, heldout),
        trajectory=trajectory,
        total_steps=total_steps,
        evaluations=evaluations,
    )
    logger.info("Finished %s (seed %d) after %d steps", label, config.seed, total_steps)
    return result


def _actor_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence([seed, 2]).generate_state(count)]


def _learned_global(
    corpus: MixtureCorpus, config: RunConfig, seed: int
) -> SamplingPolicy:
    return SamplingPolicy.learned(
        "global",
        init_actor_from_prior(
            corpus.sizes,
            config.prior_tau,
            seed,
            hidden_dim=config.actor_hidden_dim,
            learning_rate=config.actor_lr_global,
            init_scale=config.actor_init_scale,
        ),
    )


def _learned_locals(
    corpus: MixtureCorpus, config: RunConfig, seeds: Sequence[int]
) -> list[SamplingPolicy]:
    return [
        SamplingPolicy.learned(
            f"local[{i}]",
            init_actor_from_prior(
                subset.group_sizes,
                config.prior_tau,
                seed,
                hidden_dim=config.actor_hidden_dim,
                learning_rate=config.actor_lr_local,
                init_scale=config.actor_init_scale,
            ),
        )
        for i, (subset, seed) in enumerate(zip(corpus.subsets, seeds))
    ]


def _require_partitioned(corpus: MixtureCorpus) -> int:
    if not corpus.partitioned:
        raise InvalidStateError(
            "Corpus must be partitioned into difficulty groups first"
        )
    return corpus.group_count


def _group_pools(corpus: MixtureCorpus) -> list[list[Sequence[ExampleRecord]]]:
    return [list(subset.groups) for subset in corpus.subsets]


def run_hbo(
    corpus: MixtureCorpus,
    config: RunConfig,
    heldout: Optional[MixtureCorpus] = None,
    model_config: ModelConfig = ModelConfig(),
) -> RunResult:
    """
    Bilevel sampling: each step draws a subset from the global actor and a
    difficulty group from that subset's local actor, then trains on a batch
    from the group. Global and local actors are updated by REINFORCE every
    F_global and F_local steps from rewards computed for every unit.
    """
    if config.mode != "hbo" or config.discard_easiest_fraction > 0:
        raise InvalidConfigError(
            f"run_hbo needs mode 'hbo' without discarding, got mode {config.mode!r}"
        )
    _require_partitioned(corpus)
    seeds = _actor_seeds(config.seed, corpus.subset_count + 1)
    return _train(
        corpus,
        _group_pools(corpus),
        _learned_global(corpus, config, seeds[0]),
        _learned_locals(corpus, config, seeds[1:]),
        config,
        model_config,
        heldout,
        config.total_steps,
        method_label(config),
    )


def run_static(
    corpus: MixtureCorpus,
    config: RunConfig,
    tau=None,
    heldout: Optional[MixtureCorpus] = None,
    model_config: ModelConfig = ModelConfig(),
) -> RunResult:
    """Fixed q_tau over subsets, then uniform over the subset's examples."""
    tau = parse_tau(config.prior_tau if tau is None else tau)
    static = replace(config, mode="static", prior_tau=tau)
    return _train(
        corpus,
        [[subset.examples] for subset in corpus.subsets],
        SamplingPolicy.frozen("global", temperature_distribution(corpus.sizes, tau)),
        [
            SamplingPolicy.frozen(f"local[{i}]", np.ones(1))
            for i in range(corpus.subset_count)
        ],
        static,
        model_config,
        heldout,
        config.total_steps,
        method_label(static),
        group_sampling=False,
    )


def run_ablation(
    corpus: MixtureCorpus,
    config: RunConfig,
    heldout: Optional[MixtureCorpus] = None,
    model_config: ModelConfig = ModelConfig(),
) -> RunResult:
    """
    global-only freezes every local actor at uniform over groups; local-only
    freezes the global actor at the proportional prior. A positive discard
    fraction drops each subset's easiest examples and stretches the run to
    round(T / (1 - fraction)) steps.
    """
    if config.mode == "static":
        raise InvalidConfigError("mode 'static' is not an actor ablation")
    group_count = _require_partitioned(corpus)
    fraction = config.discard_easiest_fraction
    granular = config.mode == "hbo" and fraction == 0
    if granular and group_count not in GROUP_GRANULARITIES:
        raise InvalidConfigError(
            f"group-granularity ablation expects {GROUP_GRANULARITIES} groups, "
            f"got {group_count}"
        )
    total_steps = config.total_steps
    if fraction > 0:
        corpus = discard_easiest(corpus, fraction)
        total_steps = round(config.total_steps / (1.0 - fraction))
        logger.info(
            "Discarded %.0f%% easiest examples, training %d steps",
            100 * fraction,
            total_steps,
        )

    seeds = _actor_seeds(config.seed, corpus.subset_count + 1)
    if config.mode == "local-only":
        global_policy = SamplingPolicy.frozen(
            "global", temperature_distribution(corpus.sizes, 1.0)
        )
    else:
        global_policy = _learned_global(corpus, config, seeds[0])
    if config.mode == "global-only":
        local_policies = [
            SamplingPolicy.frozen(f"local[{i}]", np.full(k, 1.0 / k))
            for i, k in enumerate(len(s.groups) for s in corpus.subsets)
        ]
    else:
        local_policies = _learned_locals(corpus, config, seeds[1:])
    return _train(
        corpus,
        _group_pools(corpus),
        global_policy,
        local_policies,
        config,
        model_config,
        heldout,
        total_steps,
        method_label(config),
    )


def run_experiment(prepared: PreparedCorpus, config: ExperimentConfig) -> RunResult:
    run = config.run
    if run.mode == "static":
        result = run_static(prepared.train, run, None, prepared.heldout, config.model)
    elif run.is_ablation:
        result = run_ablation(prepared.train, run, prepared.heldout, config.model)
    else:
        result = run_hbo(prepared.train, run, prepared.heldout, config.model)
    result.label = config.label
    return result

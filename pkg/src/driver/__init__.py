from .config import (
    ABLATION_MODES,
    RUN_MODES,
    SWEEPABLE,
    CorpusConfig,
    ExperimentConfig,
    ExperimentManifest,
    RunConfig,
    RunMode,
    SweepConfig,
    load_config,
    method_label,
    parse_config,
)
from .evaluation import Evaluation, SubsetMetrics, evaluate
from .loop import (
    PreparedCorpus,
    RunResult,
    SamplingPolicy,
    draw_training_batch,
    heldout_path,
    prepare_corpus,
    regroup,
    run_ablation,
    run_experiment,
    run_hbo,
    run_static,
    scoring_model,
    training_rng,
)
from .sweep import expand_sweep, run_seed, run_seeds
from .trajectory import (
    TrajectoryRecord,
    distribution_at,
    read_trajectory,
    subset_counts,
    total_variation,
    write_trajectory,
)

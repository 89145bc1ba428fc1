from .difficulty import (
    DIFFICULTY_SCORERS,
    GROUP_GRANULARITIES,
    DifficultyScorer,
    IfdScorer,
    LanguageModel,
    LossScorer,
    PerplexityScorer,
    difficulty_scorer,
    discard_easiest,
    ifd_score,
    partition_by_difficulty,
    score_corpus,
)
from .records import (
    ExampleRecord,
    GeneratorKind,
    MixtureCorpus,
    Subset,
    SubsetSpec,
    load_corpus,
    save_corpus,
    write_corpus,
)
from .synthetic import generate_synthetic_mixture, split_heldout, subsample
from .temperature import parse_tau, temperature_distribution

"""episcore: episode-level pairwise preference reward modeling for
multi-turn spoken dialogue, with the full construction, training, and
evaluation harness around it."""

__version__ = "0.1.0"

from .episodes import (
    Criterion,
    Episode,
    PreferencePair,
    Segment,
    SegmentManifest,
    Turn,
    read_episodes,
    read_pairs,
    read_segments,
    validate_episode,
    write_episodes,
    write_pairs,
    write_segments,
)
from .evaluation import (
    AgreementRow,
    Aggregates,
    EvalReport,
    ScoredPair,
    aggregate,
    agreement_stats,
    build_report,
    confidence_buckets,
    distribution_stats,
    pairwise_accuracy,
)
from .gradcheck import run_gradcheck
from .pipeline import (
    GroupingConfig,
    HeuristicJudge,
    JudgeScores,
    SynthConfig,
    filter_by_judge,
    filter_structural,
    group_segments,
    stratify_bench,
    synth_config,
    synth_pairs,
)
from .scorer import (
    Activations,
    ScorerConfig,
    ScorerParams,
    backward,
    encode,
    init_params,
    load_checkpoint,
    pool,
    save_checkpoint,
    score,
)
from .training import (
    AdamState,
    StepReport,
    TrainConfig,
    TrainResult,
    bt_loss,
    center_loss,
    clip_gradients,
    lr_at_step,
    optimizer_step,
    total_loss,
    train,
)

__all__ = [
    "__version__",
    "Criterion",
    "Episode",
    "PreferencePair",
    "Segment",
    "SegmentManifest",
    "Turn",
    "validate_episode",
    "read_pairs",
    "write_pairs",
    "read_episodes",
    "write_episodes",
    "read_segments",
    "write_segments",
    "GroupingConfig",
    "JudgeScores",
    "HeuristicJudge",
    "SynthConfig",
    "group_segments",
    "filter_structural",
    "filter_by_judge",
    "stratify_bench",
    "synth_config",
    "synth_pairs",
    "ScorerConfig",
    "ScorerParams",
    "Activations",
    "encode",
    "pool",
    "score",
    "backward",
    "init_params",
    "save_checkpoint",
    "load_checkpoint",
    "TrainConfig",
    "StepReport",
    "TrainResult",
    "AdamState",
    "bt_loss",
    "center_loss",
    "total_loss",
    "lr_at_step",
    "clip_gradients",
    "optimizer_step",
    "train",
    "ScoredPair",
    "Aggregates",
    "EvalReport",
    "AgreementRow",
    "pairwise_accuracy",
    "aggregate",
    "distribution_stats",
    "agreement_stats",
    "confidence_buckets",
    "build_report",
    "run_gradcheck",
]

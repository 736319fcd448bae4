"""Conditional-VAE anomaly detection for hierarchically structured telemetry.

The pipeline, in dependency order: generate or load a dataset whose features
x sit below observed conditioning factors k (``synthetic``, ``trigger``,
``data``), train a conditional VAE with a learned per-feature output variance
(``model``), score samples with the reconstruction and latent metrics and
apply the OR verdict (``metrics``), and evaluate ROC/AUC or run the full
CVAE-vs-VAE benchmark (``evaluate``). ``cli`` ties the stages together as
subcommands sharing one config format (``config``).
"""

from .config import RunConfig, format_config, load_config, resolve_config
from .data import (
    LABEL_INLIER,
    LABEL_TYPE_A,
    LABEL_TYPE_B,
    LABEL_TYPE_B_INLIER,
    Dataset,
    load_dataset,
    split_dataset,
)
from .errors import (
    ConfigError,
    CvaeadError,
    FileFormatError,
    NumericError,
    ShapeError,
    TrainingDivergedError,
    UndefinedAucError,
)
from .evaluate import (
    ExperimentConfig,
    RocResult,
    SweepResult,
    SyntheticConfig,
    TriggerConfig,
    load_report,
    load_roc,
    partial_auc,
    roc_auc,
    run_synthetic_experiment,
    run_trigger_experiment,
    save_report,
    save_roc,
    threshold_sweep,
)
from .metrics import (
    AnomalyScore,
    Verdict,
    calibrate_thresholds,
    decide,
    load_scores,
    save_scores,
    score,
    score_type_a,
    score_type_b,
)
from .model import (
    CvaeModel,
    DecodedDistribution,
    LatentPosterior,
    TrainConfig,
    TrainResult,
    build_model,
    cvae_loss,
    decode,
    encode,
    gaussian_nll,
    kl_to_standard_normal,
    load_model,
    models_equal,
    reparameterize,
    save_model,
    train,
)
from .seeding import child_rng, derive_seed
from .synthetic import (
    CausalStructure,
    generate,
    inject,
    load_structure,
    make_structure,
    save_structure,
)
from .trigger import (
    TriggerGraph,
    inject_rate_anomaly,
    load_graph,
    make_graph,
    save_graph,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyScore",
    "CausalStructure",
    "ConfigError",
    "CvaeModel",
    "CvaeadError",
    "Dataset",
    "DecodedDistribution",
    "ExperimentConfig",
    "FileFormatError",
    "LABEL_INLIER",
    "LABEL_TYPE_A",
    "LABEL_TYPE_B",
    "LABEL_TYPE_B_INLIER",
    "LatentPosterior",
    "NumericError",
    "RocResult",
    "RunConfig",
    "ShapeError",
    "SweepResult",
    "SyntheticConfig",
    "TrainConfig",
    "TrainResult",
    "TriggerConfig",
    "TriggerGraph",
    "TrainingDivergedError",
    "UndefinedAucError",
    "Verdict",
    "build_model",
    "calibrate_thresholds",
    "child_rng",
    "cvae_loss",
    "decide",
    "decode",
    "derive_seed",
    "encode",
    "format_config",
    "gaussian_nll",
    "generate",
    "inject",
    "inject_rate_anomaly",
    "kl_to_standard_normal",
    "load_config",
    "load_dataset",
    "load_graph",
    "load_model",
    "load_report",
    "load_roc",
    "load_scores",
    "load_structure",
    "make_graph",
    "make_structure",
    "models_equal",
    "partial_auc",
    "reparameterize",
    "resolve_config",
    "roc_auc",
    "run_synthetic_experiment",
    "run_trigger_experiment",
    "save_graph",
    "save_model",
    "save_report",
    "save_roc",
    "save_scores",
    "save_structure",
    "score",
    "score_type_a",
    "score_type_b",
    "simulate",
    "split_dataset",
    "threshold_sweep",
    "train",
]

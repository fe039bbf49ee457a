"""Self-supervised time-series representations via all-timestep contrastive
pretraining, with linear-probe, semi-supervised, forecasting, and anomaly
evaluations on the frozen encoder."""

from .data import (
    CsvSchema,
    FeatureStats,
    InstanceSequence,
    RawSeries,
    SequenceBatch,
    StftConfig,
    SynthConfig,
    load_csv,
    make_batches,
    read_instance_cache,
    regime_templates,
    stft_preprocess,
    synth_generate,
    train_test_split,
    write_instance_cache,
    zscore_normalize,
)
from .encoder import (
    EncoderConfig,
    EncoderState,
    backward,
    forward,
    init_params,
    named_parameters,
    parameter_count,
    set_mode,
)
from .errors import CheckpointError, DataError, NonFiniteGradientError
from .evaluate import (
    AnomalyModel,
    EvalReport,
    ForecastConfig,
    ProbeConfig,
    average_precision,
    embed_dataset,
    linear_probe,
    metric_suite,
    pca_anomaly_fit,
    pca_anomaly_score,
    ridge_forecast,
    semi_supervised_eval,
)
from .losses import (
    LossConfig,
    LossOutput,
    cosine_similarity_matrix,
    loss_forward,
    loss_gradient_check,
    mpxent_loss_matrix,
    mpxent_loss_oracle,
    mpxent_loss_shuffled,
    ntxent_single_positive,
)
from .seeding import derive_seed
from .trainer import (
    OptimizerState,
    RunLog,
    TrainConfig,
    adamw_step,
    init_optimizer,
    load_checkpoint,
    pretrain,
    resolve_iterations,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyModel", "CheckpointError", "CsvSchema", "DataError",
    "EncoderConfig", "EncoderState", "EvalReport", "FeatureStats",
    "ForecastConfig", "InstanceSequence", "LossConfig", "LossOutput",
    "NonFiniteGradientError", "OptimizerState", "ProbeConfig", "RawSeries",
    "RunLog", "SequenceBatch", "StftConfig", "SynthConfig", "TrainConfig",
    "adamw_step", "average_precision", "backward", "cosine_similarity_matrix",
    "derive_seed", "embed_dataset", "forward", "init_optimizer", "init_params",
    "linear_probe", "load_checkpoint", "load_csv", "loss_forward",
    "loss_gradient_check", "make_batches", "metric_suite",
    "mpxent_loss_matrix", "mpxent_loss_oracle", "mpxent_loss_shuffled",
    "named_parameters", "ntxent_single_positive", "parameter_count",
    "pca_anomaly_fit", "pca_anomaly_score", "pretrain", "read_instance_cache",
    "regime_templates", "resolve_iterations", "ridge_forecast",
    "save_checkpoint", "semi_supervised_eval", "set_mode", "stft_preprocess",
    "synth_generate", "train_test_split", "write_instance_cache",
    "zscore_normalize",
]

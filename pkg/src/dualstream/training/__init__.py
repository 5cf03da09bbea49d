from dualstream.training.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    Checkpoint,
    CheckpointMeta,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    restore,
    save_checkpoint,
)
from dualstream.training.config import (
    FLAT_KEYS,
    ConfigEntry,
    RunConfig,
    SynthSpec,
    build_run_config,
    config_hash,
    flatten_run_config,
    load_config_file,
    parse_config_text,
)
from dualstream.training.metrics import (
    CSV_HEADER,
    ClassMetrics,
    ConfusionMatrix,
    EpochRecord,
    MetricsLog,
    read_metrics,
)
from dualstream.training.trainer import (
    BEST_CHECKPOINT,
    LAST_CHECKPOINT,
    EvaluationResult,
    GradcheckReport,
    LoadedModel,
    Prediction,
    StepInfo,
    TrainResult,
    epoch_checkpoint_name,
    evaluate,
    evaluate_checkpoint,
    gradcheck,
    load_model,
    load_run_data,
    miniature_config,
    predict,
    train,
)

__all__ = [
    "RunConfig",
    "SynthSpec",
    "ConfigEntry",
    "FLAT_KEYS",
    "build_run_config",
    "config_hash",
    "flatten_run_config",
    "load_config_file",
    "parse_config_text",
    "Checkpoint",
    "CheckpointMeta",
    "MAGIC",
    "FORMAT_VERSION",
    "encode_checkpoint",
    "decode_checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "restore",
    "EpochRecord",
    "MetricsLog",
    "read_metrics",
    "ConfusionMatrix",
    "ClassMetrics",
    "CSV_HEADER",
    "train",
    "evaluate",
    "evaluate_checkpoint",
    "predict",
    "gradcheck",
    "load_model",
    "load_run_data",
    "miniature_config",
    "epoch_checkpoint_name",
    "StepInfo",
    "TrainResult",
    "EvaluationResult",
    "LoadedModel",
    "Prediction",
    "GradcheckReport",
    "LAST_CHECKPOINT",
    "BEST_CHECKPOINT",
]

from dualstream.data import Dataset, load_dataset, split, synth_dataset
from dualstream.model import DualStreamNet, ModelConfig
from dualstream.optim import ScheduleConfig, lr_at
from dualstream.training import (
    RunConfig,
    build_run_config,
    evaluate,
    gradcheck,
    predict,
    train,
)

__all__ = [
    "DualStreamNet",
    "ModelConfig",
    "ScheduleConfig",
    "RunConfig",
    "build_run_config",
    "lr_at",
    "Dataset",
    "load_dataset",
    "split",
    "synth_dataset",
    "train",
    "evaluate",
    "predict",
    "gradcheck",
]

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from dualstream import errors

DEFAULT_WARMUP_EPOCHS = 5
DEFAULT_TOTAL_EPOCHS = 2000
DEFAULT_BASE_LR = 1e-3
DEFAULT_WARMUP_LR = 2e-8
DEFAULT_MIN_LR = 2e-4
DEFAULT_WEIGHT_DECAY = 1e-8
DEFAULT_BATCH_SIZE = 64
DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


class ScheduleConfig(BaseModel):
    """Optimizer hyperparameters and the learning-rate envelope.

    The defaults are the full-scale regimen: 2000 epochs, batch 64, a 5 epoch
    linear warmup from 2e-8 to 1e-3, then cosine decay to 2e-4.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    warmup_epochs: int = Field(default=DEFAULT_WARMUP_EPOCHS, ge=0)
    total_epochs: int = Field(default=DEFAULT_TOTAL_EPOCHS, gt=0)
    base_lr: float = Field(default=DEFAULT_BASE_LR, gt=0)
    warmup_lr: float = Field(default=DEFAULT_WARMUP_LR, gt=0)
    min_lr: float = Field(default=DEFAULT_MIN_LR, gt=0)
    weight_decay: float = Field(default=DEFAULT_WEIGHT_DECAY, ge=0)
    batch_size: int = Field(default=DEFAULT_BATCH_SIZE, gt=0)
    beta1: float = Field(default=DEFAULT_BETAS[0], ge=0, lt=1)
    beta2: float = Field(default=DEFAULT_BETAS[1], ge=0, lt=1)
    eps: float = Field(default=DEFAULT_EPS, gt=0)

    @model_validator(mode="after")
    def _check_ordering(self) -> "ScheduleConfig":
        if not self.warmup_lr <= self.min_lr <= self.base_lr:
            raise ValueError(
                f"need warmup_lr <= min_lr <= base_lr, got {self.warmup_lr}, "
                f"{self.min_lr}, {self.base_lr}"
            )
        if self.warmup_epochs >= self.total_epochs:
            raise ValueError(
                f"warmup_epochs ({self.warmup_epochs}) must be below total_epochs "
                f"({self.total_epochs})"
            )
        return self


def lr_at(epoch: float, cfg: ScheduleConfig) -> float:
    """Learning rate at a (possibly fractional) epoch.

    Linear warmup from `warmup_lr` to `base_lr` over `warmup_epochs`, then
    cosine decay from `base_lr` to `min_lr` at `total_epochs`. The three
    anchor points return the configured rates exactly.

    Raises:
        ScheduleRangeError: If `epoch` is outside [0, total_epochs].

    !!! example "Examples"
        ```python
        from dualstream.optim import ScheduleConfig, lr_at

        cfg = ScheduleConfig()
        assert lr_at(0, cfg) == 2e-8
        assert lr_at(5, cfg) == 1e-3
        assert lr_at(2000, cfg) == 2e-4
        assert abs(lr_at(1002.5, cfg) - 6e-4) < 1e-15
        ```
    """
    if not (math.isfinite(epoch) and 0 <= epoch <= cfg.total_epochs):
        raise errors.ScheduleRangeError(
            f"epoch {epoch} outside the schedule range [0, {cfg.total_epochs}]"
        )
    if epoch < cfg.warmup_epochs:
        return cfg.warmup_lr + (cfg.base_lr - cfg.warmup_lr) * (epoch / cfg.warmup_epochs)
    if epoch == cfg.warmup_epochs:
        return cfg.base_lr
    if epoch == cfg.total_epochs:
        return cfg.min_lr
    progress = (epoch - cfg.warmup_epochs) / (cfg.total_epochs - cfg.warmup_epochs)
    return cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + math.cos(math.pi * progress))


def fractional_epoch(step: int, steps_per_epoch: int) -> float:
    """Epoch position of global optimizer step `step`; exact at epoch boundaries."""
    if steps_per_epoch < 1:
        raise errors.ConfigurationError(
            f"steps_per_epoch must be positive, got {steps_per_epoch}"
        )
    return step / steps_per_epoch


def lr_trace(cfg: ScheduleConfig, steps_per_epoch: int) -> np.ndarray:
    """Per-step learning rates for steps 0..total_epochs·steps_per_epoch inclusive."""
    total = cfg.total_epochs * steps_per_epoch
    return np.array(
        [lr_at(fractional_epoch(s, steps_per_epoch), cfg) for s in range(total + 1)]
    )

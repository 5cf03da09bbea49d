from dualstream.optim.adamw import AdamWState, adamw_step, init_adamw_states, zero_grads
from dualstream.optim.schedule import (
    ScheduleConfig,
    fractional_epoch,
    lr_at,
    lr_trace,
)

__all__ = [
    "ScheduleConfig",
    "lr_at",
    "lr_trace",
    "fractional_epoch",
    "AdamWState",
    "init_adamw_states",
    "adamw_step",
    "zero_grads",
]

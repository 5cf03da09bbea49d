import math

import numpy as np
import pytest
from pydantic import ValidationError

from dualstream import errors
from dualstream.optim import ScheduleConfig, fractional_epoch, lr_at, lr_trace


def test_anchor_points_are_exact():
    cfg = ScheduleConfig()
    assert lr_at(0, cfg) == cfg.warmup_lr
    assert lr_at(cfg.warmup_epochs, cfg) == cfg.base_lr
    assert lr_at(cfg.total_epochs, cfg) == cfg.min_lr


def test_warmup_is_linear_and_decay_is_cosine():
    cfg = ScheduleConfig(warmup_epochs=4, total_epochs=24, base_lr=1.0, warmup_lr=0.2, min_lr=0.5)
    assert lr_at(1, cfg) == pytest.approx(0.4)
    assert lr_at(2.5, cfg) == pytest.approx(0.7)
    # A quarter of the way through the decay.
    expected = 0.5 + 0.25 * (1.0 + math.cos(math.pi / 4))
    assert lr_at(9, cfg) == pytest.approx(expected)
    assert lr_at(14, cfg) == pytest.approx(0.75)


def test_rate_is_continuous_at_the_end_of_warmup():
    cfg = ScheduleConfig()
    for delta in (1e-12, 1e-13):
        assert abs(lr_at(cfg.warmup_epochs - delta, cfg) - cfg.base_lr) < 1e-15
        assert abs(lr_at(cfg.warmup_epochs + delta, cfg) - cfg.base_lr) < 1e-15


def test_envelope_shape():
    cfg = ScheduleConfig(warmup_epochs=3, total_epochs=30)
    trace = lr_trace(cfg, steps_per_epoch=7)
    peak = 3 * 7
    assert np.all(np.diff(trace[: peak + 1]) > 0)
    assert np.all(np.diff(trace[peak:]) <= 0)
    assert trace.max() == cfg.base_lr
    assert np.all((trace >= cfg.warmup_lr) & (trace <= cfg.base_lr))


def test_per_step_trace_agrees_with_epoch_rates_at_boundaries():
    cfg = ScheduleConfig(warmup_epochs=2, total_epochs=12)
    steps_per_epoch = 13
    trace = lr_trace(cfg, steps_per_epoch)
    assert trace.shape == (12 * 13 + 1,)
    for epoch in range(cfg.total_epochs + 1):
        assert trace[epoch * steps_per_epoch] == lr_at(epoch, cfg)


def test_zero_warmup_starts_at_base_rate():
    cfg = ScheduleConfig(warmup_epochs=0, total_epochs=10)
    assert lr_at(0, cfg) == cfg.base_lr
    assert lr_at(0.5, cfg) < cfg.base_lr


@pytest.mark.parametrize("epoch", [-0.01, 2000.5, float("nan"), float("inf")])
def test_out_of_range_epochs(epoch):
    with pytest.raises(errors.ScheduleRangeError):
        lr_at(epoch, ScheduleConfig())
    with pytest.raises(ValueError):
        lr_at(epoch, ScheduleConfig())


def test_fractional_epoch():
    assert fractional_epoch(0, 5) == 0.0
    assert fractional_epoch(10, 5) == 2.0
    assert fractional_epoch(7, 5) == pytest.approx(1.4)
    with pytest.raises(errors.ConfigurationError):
        fractional_epoch(1, 0)


@pytest.mark.parametrize(
    "values",
    [
        {"warmup_lr": 1e-3, "min_lr": 1e-4},
        {"min_lr": 2e-3},
        {"warmup_epochs": 10, "total_epochs": 10},
        {"beta2": 1.0},
        {"batch_size": 0},
        {"weight_decay": -1.0},
    ],
)
def test_invalid_schedules(values):
    with pytest.raises(ValidationError):
        ScheduleConfig(**values)

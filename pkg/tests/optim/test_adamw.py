import numpy as np
import pytest

from dualstream import errors
from dualstream.model import ParamStore
from dualstream.optim import (
    AdamWState,
    ScheduleConfig,
    adamw_step,
    init_adamw_states,
    zero_grads,
)


def make_store():
    store = ParamStore()
    store.add("layer.weight", np.array([[1.0, -2.0], [0.5, 3.0]]))
    store.add("norm.weight", np.array([1.0, 1.0]), decay=False)
    store.add("bn.running_mean", np.array([0.3, 0.4]), trainable=False)
    return store


def reference_adamw(theta, grads, lrs, cfg, decay=True):
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    for t, (g, lr) in enumerate(zip(grads, lrs), start=1):
        if decay:
            theta = theta * (1 - lr * cfg.weight_decay)
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1**t)
        v_hat = v / (1 - cfg.beta2**t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return theta


def test_matches_reference_over_several_steps(rng):
    cfg = ScheduleConfig(weight_decay=0.05)
    store = make_store()
    states = init_adamw_states(store)
    start = {name: t.data.copy() for name, t in store.trainable()}
    grads = {name: [rng.standard_normal(t.shape) for _ in range(5)] for name, t in store.trainable()}
    lrs = [1e-3, 5e-3, 1e-2, 5e-3, 1e-3]
    for i, lr in enumerate(lrs):
        for name, tensor in store.trainable():
            tensor.grad = grads[name][i]
        adamw_step(store, states, lr, cfg)
    np.testing.assert_allclose(
        store["layer.weight"].data,
        reference_adamw(start["layer.weight"], grads["layer.weight"], lrs, cfg),
        rtol=1e-12,
    )
    np.testing.assert_allclose(
        store["norm.weight"].data,
        reference_adamw(start["norm.weight"], grads["norm.weight"], lrs, cfg, decay=False),
        rtol=1e-12,
    )
    assert states["layer.weight"].t == 5


def test_first_step_moves_each_entry_by_about_lr():
    cfg = ScheduleConfig(weight_decay=0.0)
    store = ParamStore()
    w = store.add("w", np.zeros(4))
    w.grad = np.array([1e-3, -5.0, 20.0, -0.1])
    adamw_step(store, init_adamw_states(store), 0.01, cfg)
    np.testing.assert_allclose(w.data, -0.01 * np.sign(w.grad), rtol=1e-4)


def test_decay_skips_exempt_tensors_and_buffers():
    cfg = ScheduleConfig(weight_decay=0.5)
    store = make_store()
    zero_grads(store)
    adamw_step(store, init_adamw_states(store), 0.1, cfg)
    # Zero gradients leave only the decoupled decay.
    np.testing.assert_allclose(
        store["layer.weight"].data, 0.95 * np.array([[1.0, -2.0], [0.5, 3.0]])
    )
    np.testing.assert_array_equal(store["norm.weight"].data, [1.0, 1.0])
    np.testing.assert_array_equal(store["bn.running_mean"].data, [0.3, 0.4])


def test_missing_state_is_created():
    store = make_store()
    zero_grads(store)
    states: dict[str, AdamWState] = {}
    adamw_step(store, states, 1e-3, ScheduleConfig())
    assert set(states) == {"layer.weight", "norm.weight"}


def test_missing_or_non_finite_gradient():
    store = make_store()
    states = init_adamw_states(store)
    with pytest.raises(errors.ContractViolationError, match="layer.weight"):
        adamw_step(store, states, 1e-3, ScheduleConfig())
    zero_grads(store)
    store["norm.weight"].grad[0] = np.nan
    with pytest.raises(errors.NumericalError, match="norm.weight"):
        adamw_step(store, states, 1e-3, ScheduleConfig())


def test_zero_grads_resets_trainable_only():
    store = make_store()
    store["layer.weight"].grad = np.ones((2, 2))
    zero_grads(store)
    np.testing.assert_array_equal(store["layer.weight"].grad, np.zeros((2, 2)))
    assert store["bn.running_mean"].grad is None


def test_constant_gradient_moves_lr_every_step():
    cfg = ScheduleConfig(weight_decay=0.0)
    store = ParamStore()
    w = store.add("w", np.zeros(3))
    states = init_adamw_states(store)
    lr = 1e-3
    for _ in range(1000):
        before = w.data.copy()
        w.grad = np.array([0.5, -2.0, 1e-2])
        adamw_step(store, states, lr, cfg)
        np.testing.assert_allclose(np.abs(w.data - before), lr, rtol=1e-2)
    np.testing.assert_allclose(w.data, -1000 * lr * np.sign([0.5, -2.0, 1e-2]), rtol=1e-2)


def test_zero_learning_rate_leaves_parameters_unchanged(rng):
    store = make_store()
    start = {name: t.data.copy() for name, t in store.trainable()}
    states = init_adamw_states(store)
    for _ in range(3):
        for _, tensor in store.trainable():
            tensor.grad = rng.standard_normal(tensor.shape)
        adamw_step(store, states, 0.0, ScheduleConfig(weight_decay=0.3))
    for name, tensor in store.trainable():
        np.testing.assert_array_equal(tensor.data, start[name])


def test_bad_gradient_leaves_every_parameter_untouched():
    store = make_store()
    states = init_adamw_states(store)
    store["layer.weight"].grad = np.ones((2, 2))
    store["norm.weight"].grad = np.array([np.inf, 0.0])
    with pytest.raises(errors.NumericalError, match="norm.weight"):
        adamw_step(store, states, 0.1, ScheduleConfig())
    np.testing.assert_array_equal(store["layer.weight"].data, [[1.0, -2.0], [0.5, 3.0]])
    np.testing.assert_array_equal(states["layer.weight"].m, np.zeros((2, 2)))
    assert states["layer.weight"].t == 0

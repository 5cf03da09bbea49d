import logging
import typing
from dataclasses import dataclass

import numpy as np

from dualstream import errors
from dualstream.autograd import Tensor
from dualstream.model import ParamStore
from dualstream.optim.schedule import ScheduleConfig

logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    """Moment estimates for one parameter."""

    m: np.ndarray
    """First moment, same shape as the parameter."""

    v: np.ndarray
    """Second moment (nonnegative), same shape as the parameter."""

    t: int = 0
    """Number of steps taken."""

    @classmethod
    def from_param(cls, param: Tensor) -> "AdamWState":
        return cls(m=np.zeros_like(param.data), v=np.zeros_like(param.data))


def init_adamw_states(params: ParamStore) -> dict[str, AdamWState]:
    """Fresh zero-moment state for every trainable tensor in `params`."""
    return {name: AdamWState.from_param(t) for name, t in params.trainable()}


def adamw_step(
    params: ParamStore,
    states: typing.MutableMapping[str, AdamWState],
    lr: float,
    cfg: ScheduleConfig,
) -> None:
    """Apply one AdamW update in place to every trainable tensor.

    Weight decay is decoupled: θ ← θ·(1 − lr·wd) first, then the bias-corrected
    Adam step θ ← θ − lr·m̂/(√v̂ + eps). Tensors registered without decay
    (norm scales and shifts, relative-bias tables) skip the first part.
    Buffers are never touched.

    Every gradient is validated before any parameter or moment changes.

    Raises:
        ContractViolationError: If a trainable tensor has no gradient.
        NumericalError: If a gradient holds non-finite values.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.model import ParamStore
        from dualstream.optim import ScheduleConfig, adamw_step, init_adamw_states

        store = ParamStore()
        w = store.add("w", np.array([1.0, -2.0]))
        w.grad = np.array([0.5, -0.5])
        states = init_adamw_states(store)
        adamw_step(store, states, lr=0.1, cfg=ScheduleConfig(weight_decay=0.0))
        assert np.allclose(w.data, [0.9, -1.9])
        ```
    """
    b1, b2, eps = cfg.beta1, cfg.beta2, cfg.eps
    shrink = 1.0 - lr * cfg.weight_decay
    trainable = list(params.trainable())
    for name, param in trainable:
        if param.grad is None:
            raise errors.ContractViolationError(f"No gradient for trainable parameter {name}")
        if not np.all(np.isfinite(param.grad)):
            raise errors.NumericalError(f"Non-finite gradient for parameter {name}")
    for name, param in trainable:
        grad = param.grad
        state = states.get(name)
        if state is None:
            state = states[name] = AdamWState.from_param(param)
        data = param.data
        if params.decays(name) and cfg.weight_decay:
            data *= data.dtype.type(shrink)
        state.t += 1
        state.m *= b1
        state.m += (1.0 - b1) * grad
        state.v *= b2
        state.v += (1.0 - b2) * grad * grad
        m_hat = state.m / (1.0 - b1**state.t)
        v_hat = state.v / (1.0 - b2**state.t)
        data -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(data.dtype, copy=False)


def zero_grads(params: ParamStore) -> None:
    """Reset the gradient of every trainable tensor to exact zeros."""
    for _, param in params.trainable():
        param.zero_grad()

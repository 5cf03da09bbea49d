import logging
import typing
from dataclasses import dataclass

import numpy as np

from dualstream.autograd.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-5
DEFAULT_ATOL = 1e-6


@dataclass
class GradientCheckResult:
    """Finite-difference comparison for one tensor."""

    name: str
    max_rel_error: float
    """Largest |analytic − numeric| / max(|analytic|, |numeric|, atol) over checked entries."""

    checked: int
    """Number of entries compared."""

    worst_index: tuple[int, ...] | None = None


def relative_error(analytic: float, numeric: float, atol: float = DEFAULT_ATOL) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), atol)


def _select_indices(
    analytic: np.ndarray, max_entries: int | None, rng: np.random.Generator
) -> list[tuple[int, ...]]:
    size = analytic.size
    if max_entries is None or size <= max_entries:
        flat = np.arange(size)
    else:
        # Half the budget on the largest gradients, the rest sampled uniformly.
        top = np.argsort(-np.abs(analytic.reshape(-1)), kind="stable")[: max_entries // 2]
        rest = np.setdiff1d(np.arange(size), top)
        sampled = rng.choice(rest, size=max_entries - top.size, replace=False)
        flat = np.sort(np.concatenate([top, sampled]))
    return [tuple(int(i) for i in np.unravel_index(f, analytic.shape)) for f in flat]


def check_gradients(
    loss_fn: typing.Callable[[], Tensor],
    tensors: typing.Mapping[str, Tensor],
    *,
    step: float = DEFAULT_STEP,
    atol: float = DEFAULT_ATOL,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, GradientCheckResult]:
    """Compare backward gradients with central finite differences.

    `loss_fn` must rebuild the scalar loss from the current contents of
    `tensors` each time it is called. Tensor data is perturbed in place and
    restored exactly afterwards.

    Args:
        loss_fn: Zero-argument callable returning a scalar `Tensor`.
        tensors: Named leaf tensors to check; each must have `requires_grad`.
        step: Finite-difference step; entry x is perturbed by step · max(1, |x|).
        atol: Floor for the relative-error denominator.
        max_entries: Entries compared per tensor (all when None).
        seed: Seed for choosing entries when sampling.

    Returns:
        One `GradientCheckResult` per tensor, in the order of `tensors`.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.autograd import Tensor, check_gradients, gelu

        x = Tensor(np.linspace(-2.0, 2.0, 7), requires_grad=True)
        results = check_gradients(lambda: gelu(x).sum(), {"x": x})
        assert results["x"].max_rel_error < 1e-6
        ```
    """
    for tensor in tensors.values():
        tensor.grad = None
    backward(loss_fn())
    rng = np.random.default_rng(seed)
    results: dict[str, GradientCheckResult] = {}
    for name, tensor in tensors.items():
        analytic = (
            np.zeros_like(tensor.data) if tensor.grad is None else tensor.grad.copy()
        )
        worst, worst_index = 0.0, None
        indices = _select_indices(analytic, max_entries, rng)
        with no_grad():
            for index in indices:
                original = tensor.data[index]
                h = step * max(1.0, abs(float(original)))
                tensor.data[index] = original + h
                plus = loss_fn().item()
                tensor.data[index] = original - h
                minus = loss_fn().item()
                tensor.data[index] = original
                numeric = (plus - minus) / (2.0 * h)
                err = relative_error(float(analytic[index]), numeric, atol)
                if err > worst:
                    worst, worst_index = err, index
        logger.debug(f"gradcheck {name}: max relative error {worst:.3e} over {len(indices)}")
        results[name] = GradientCheckResult(
            name=name, max_rel_error=worst, checked=len(indices), worst_index=worst_index
        )
    return results

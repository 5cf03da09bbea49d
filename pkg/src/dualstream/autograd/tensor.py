"""Dense tensors with reverse-mode automatic differentiation.

A `Tensor` wraps a contiguous numpy array. Every differentiable operation is a
`Function` subclass; applying it records a node that references its input
tensors, so `backward` can walk the recorded graph in reverse topological order.
"""

from __future__ import annotations

import contextlib
import contextvars
import logging
import typing
from dataclasses import dataclass, field

import numpy as np

from dualstream import errors

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float64

ArrayLike = typing.Union[np.ndarray, float, int, typing.Sequence[float]]

_grad_enabled: contextvars.ContextVar[bool] = contextvars.ContextVar(
    "dualstream_grad_enabled", default=True
)
_mac_counter: contextvars.ContextVar["MacCounter | None"] = contextvars.ContextVar(
    "dualstream_mac_counter", default=None
)


@contextlib.contextmanager
def no_grad():
    """Run forward operations without recording them for backward.

    !!! example "Examples"
        ```python
        from dualstream.autograd import Tensor, no_grad

        x = Tensor([1.0, 2.0], requires_grad=True)
        with no_grad():
            y = x * 2.0
        assert y.requires_grad is False
        ```
    """
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled() -> bool:
    return _grad_enabled.get()


@dataclass
class MacCounter:
    """Multiply-accumulate tally collected by `count_macs`."""

    total: int = 0
    """Sum of batch·m·k·n over every `matmul` executed inside the context."""

    calls: int = 0

    def add(self, macs: int) -> None:
        self.total += int(macs)
        self.calls += 1


@contextlib.contextmanager
def count_macs():
    """Count the multiply-accumulates performed by `matmul` inside the block.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.autograd import Tensor, count_macs, matmul

        a = Tensor(np.ones((2, 3, 4)))
        b = Tensor(np.ones((2, 4, 5)))
        with count_macs() as counter:
            matmul(a, b)
        assert counter.total == 2 * 3 * 4 * 5
        ```
    """
    counter = MacCounter()
    token = _mac_counter.set(counter)
    try:
        yield counter
    finally:
        _mac_counter.reset(token)


def record_macs(macs: int) -> None:
    counter = _mac_counter.get()
    if counter is not None:
        counter.add(macs)


class Function:
    """Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps the
    gradient of the output to one gradient (or ``None``) per input tensor.
    """

    def __init__(self, *inputs: "Tensor"):
        self.inputs = inputs
        self.saved: dict[str, typing.Any] = {}

    def forward(self, *arrays: np.ndarray, **kwargs: typing.Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: "Tensor", **kwargs: typing.Any) -> "Tensor":
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        if not np.all(np.isfinite(out)):
            raise errors.NumericalError(
                f"{cls.__name__} produced non-finite values for input shapes "
                f"{[t.shape for t in inputs]}"
            )
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
        result = Tensor(out, requires_grad=requires_grad, _copy=False)
        if requires_grad:
            result._node = fn
        return result

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
        """Sum out broadcast dimensions so `grad` matches `shape`."""
        if grad.shape == shape:
            return grad
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for axis, extent in enumerate(shape):
            if extent == 1 and grad.shape[axis] != 1:
                grad = grad.sum(axis=axis, keepdims=True)
        return grad


class Tensor:
    """Dense N-dimensional float array with an optional gradient slot.

    Tensors are immutable once an op has produced them; only `grad` changes,
    and only during `backward`.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.autograd import Tensor

        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        loss = (x * x).sum()
        loss.backward()
        assert np.array_equal(x.grad, 2 * x.data)
        ```
    """

    __slots__ = ("data", "grad", "requires_grad", "_node", "name")

    def __init__(
        self,
        data: ArrayLike,
        *,
        requires_grad: bool = False,
        dtype: typing.Any = None,
        name: str | None = None,
        _copy: bool = True,
    ):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        if _copy or not arr.flags.c_contiguous:
            arr = np.array(arr, order="C", copy=True)
        if arr.ndim and 0 in arr.shape:
            raise errors.ConfigurationError(f"Tensor extents must be positive: {arr.shape}")
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._node: Function | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise errors.ContractViolationError(
                f"item() needs a single-element tensor, got shape {self.shape}"
            )
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        else:
            self.grad.fill(0.0)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self) -> None:
        backward(self)

    def dump(self, stream: typing.TextIO) -> None:
        dump_tensor(self, stream)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"

    # Operator overloads dispatch to dualstream.autograd.functional.

    def __add__(self, other):
        from dualstream.autograd import functional as F

        return F.add(self, _as_tensor(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        from dualstream.autograd import functional as F

        return F.add(self, F.scale(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        from dualstream.autograd import functional as F

        return F.add(_as_tensor(other, self.dtype), F.scale(self, -1.0))

    def __mul__(self, other):
        from dualstream.autograd import functional as F

        if isinstance(other, (int, float)):
            return F.scale(self, float(other))
        return F.mul(self, _as_tensor(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        from dualstream.autograd import functional as F

        return F.scale(self, -1.0)

    def __matmul__(self, other):
        from dualstream.autograd import functional as F

        return F.matmul(self, _as_tensor(other, self.dtype))

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        from dualstream.autograd import functional as F

        return F.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        from dualstream.autograd import functional as F

        return F.mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        from dualstream.autograd import functional as F

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        from dualstream.autograd import functional as F

        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return F.transpose(self, axes or None)


def _as_tensor(value, dtype) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=dtype))


@dataclass
class Graph:
    """Recorded operations reachable from an output, in topological order.

    Every node's inputs precede it in `nodes`; `backward` replays the list in
    reverse so each node is visited exactly once.
    """

    output: Tensor
    nodes: list[Tensor] = field(default_factory=list)
    """Non-leaf tensors ordered so producers come before consumers."""

    leaves: list[Tensor] = field(default_factory=list)
    """Leaf tensors with `requires_grad`, in first-visit order."""

    @classmethod
    def from_output(cls, output: Tensor) -> "Graph":
        graph = cls(output=output)
        visited: set[int] = set()
        # Iterative post-order DFS; the order only depends on graph structure.
        stack: list[tuple[Tensor, bool]] = [(output, False)]
        while stack:
            tensor, expanded = stack.pop()
            key = id(tensor)
            if expanded:
                graph.nodes.append(tensor)
                continue
            if key in visited:
                continue
            visited.add(key)
            if tensor._node is None:
                if tensor.requires_grad:
                    graph.leaves.append(tensor)
                continue
            stack.append((tensor, True))
            for parent in reversed(tensor._node.inputs):
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        return graph

    def replay(self, seed_grad: np.ndarray) -> None:
        grads: dict[int, np.ndarray] = {id(self.output): seed_grad}
        for tensor in reversed(self.nodes):
            grad = grads.pop(id(tensor), None)
            if grad is None:
                continue
            node = tensor._node
            input_grads = node.backward(grad)
            for parent, parent_grad in zip(node.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                if parent._node is None:
                    _accumulate(parent, parent_grad)
                elif id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + parent_grad
                else:
                    grads[id(parent)] = parent_grad
        if self.output._node is None and self.output.requires_grad:
            _accumulate(self.output, seed_grad)


def _accumulate(tensor: Tensor, grad: np.ndarray) -> None:
    grad = np.asarray(grad, dtype=tensor.dtype).reshape(tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.array(grad, copy=True)
    else:
        tensor.grad += grad


def backward(loss: Tensor) -> Graph:
    """Populate `.grad` on every leaf tensor with `requires_grad` reachable from `loss`.

    Gradients accumulate: calling `backward` twice without zeroing doubles them.

    Args:
        loss: A scalar (single-element), finite tensor.

    Returns:
        The replayed `Graph`.
    """
    if loss.size != 1:
        raise errors.ContractViolationError(
            f"backward requires a scalar loss, got shape {loss.shape}"
        )
    if not np.all(np.isfinite(loss.data)):
        raise errors.NumericalError(f"backward called on non-finite loss {loss.data}")
    if not loss.requires_grad:
        raise errors.ContractViolationError(
            "backward called on a tensor that does not require grad"
        )
    graph = Graph.from_output(loss)
    graph.replay(np.ones_like(loss.data))
    for leaf in graph.leaves:
        if leaf.grad is not None and not np.all(np.isfinite(leaf.grad)):
            raise errors.NumericalError(
                f"non-finite gradient for tensor {leaf.name or leaf.shape}"
            )
    logger.debug(f"backward replayed {len(graph.nodes)} ops into {len(graph.leaves)} leaves")
    return graph


def dump_tensor(tensor: Tensor | np.ndarray, stream: typing.TextIO) -> None:
    """Write a tensor in the debug text format.

    The first line is ``shape: d0 d1 ...``; each following line holds one row
    along the last axis in row-major order, with 17 significant digits.
    """
    data = tensor.data if isinstance(tensor, Tensor) else np.asarray(tensor)
    stream.write("shape: " + " ".join(str(d) for d in data.shape) + "\n")
    rows = data.reshape(-1, data.shape[-1]) if data.ndim else data.reshape(1, 1)
    for row in rows:
        stream.write(" ".join(f"{float(v):.17g}" for v in row) + "\n")

"""Differentiable operations on `Tensor`.

Each public function validates its arguments, raising
`dualstream.errors.ConfigurationError` for shape problems, and dispatches to a
`Function` subclass holding the forward and backward arithmetic.
"""

from __future__ import annotations

import math
import typing

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from dualstream import errors
from dualstream.autograd.tensor import Function, Tensor, record_macs

DEFAULT_LAYER_NORM_EPS = 1e-6
DEFAULT_BATCH_NORM_EPS = 1e-5
DEFAULT_BATCH_NORM_MOMENTUM = 0.1
# Upper bound on unrolled convolution windows held at once.
CONV_CHUNK_ELEMENTS = 1 << 24

Axis = typing.Union[int, tuple[int, ...], None]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------


class Conv2d(Function):
    """Cross-correlation, either dense or depthwise (groups == channels).

    The batch is processed in slices whose unrolled windows hold at most
    `CONV_CHUNK_ELEMENTS` values, and never less than one sample.
    """

    def forward(self, x, w, *bias, stride: int, padding: int, depthwise: bool):
        kh, kw = w.shape[2], w.shape[3]
        xp = (
            np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
            if padding
            else x
        )
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[
            :, :, ::stride, ::stride
        ]
        parts = []
        for rows in _batch_slices(windows):
            if depthwise:
                parts.append(np.einsum("nchwij,cij->nchw", windows[rows], w[:, 0]))
            else:
                part = np.tensordot(windows[rows], w, axes=([1, 4, 5], [1, 2, 3]))
                parts.append(part.transpose(0, 3, 1, 2))
        out = np.concatenate(parts, axis=0)
        if bias:
            out = out + bias[0][None, :, None, None]
        self.saved.update(
            windows=windows,
            w=w,
            padded_shape=xp.shape,
            input_shape=x.shape,
            stride=stride,
            padding=padding,
            depthwise=depthwise,
        )
        return np.ascontiguousarray(out)

    def backward(self, grad):
        s = self.saved
        windows, w, stride, padding = s["windows"], s["w"], s["stride"], s["padding"]
        kh, kw = w.shape[2], w.shape[3]
        ho, wo = grad.shape[2], grad.shape[3]
        grad_w = None
        grad_xp = np.zeros(s["padded_shape"], dtype=grad.dtype)
        for rows in _batch_slices(windows):
            g = grad[rows]
            if s["depthwise"]:
                part = np.einsum("nchw,nchwij->cij", g, windows[rows])[:, None]
                # [n, C, Ho, Wo, kh, kw]
                cols = g[..., None, None] * w[:, 0][None, :, None, None]
            else:
                part = np.tensordot(g, windows[rows], axes=([0, 2, 3], [0, 2, 3]))
                # [n, Ho, Wo, C_in, kh, kw] -> [n, C_in, Ho, Wo, kh, kw]
                cols = np.tensordot(g, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
            grad_w = part if grad_w is None else grad_w + part
            for i in range(kh):
                for j in range(kw):
                    grad_xp[
                        rows,
                        :,
                        i : i + stride * (ho - 1) + 1 : stride,
                        j : j + stride * (wo - 1) + 1 : stride,
                    ] += cols[..., i, j]
        h, wd = s["input_shape"][2], s["input_shape"][3]
        grad_x = grad_xp[:, :, padding : padding + h, padding : padding + wd]
        grads = [np.ascontiguousarray(grad_x), grad_w]
        if len(self.inputs) == 3:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)


def _batch_slices(windows: np.ndarray) -> list[slice]:
    n = windows.shape[0]
    per_sample = max(math.prod(windows.shape[1:]), 1)
    step = max(1, CONV_CHUNK_ELEMENTS // per_sample)
    return [slice(start, min(start + step, n)) for start in range(0, n, step)]


def _conv_output_extent(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def _check_conv(
    input: Tensor,
    weight: Tensor,
    bias: Tensor | None,
    stride: int,
    padding: int,
    depthwise: bool,
) -> None:
    if input.ndim != 4 or weight.ndim != 4:
        raise errors.ConfigurationError(
            f"conv2d expects input [N,C,H,W] and weight [C_out,C_in,kh,kw], got "
            f"{input.shape} and {weight.shape}"
        )
    if stride < 1 or padding < 0:
        raise errors.ConfigurationError(
            f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}"
        )
    channels = input.shape[1]
    if depthwise:
        if weight.shape[0] != channels or weight.shape[1] != 1:
            raise errors.ConfigurationError(
                f"depthwise weight must be [{channels},1,kh,kw], got {weight.shape}"
            )
    elif weight.shape[1] != channels:
        raise errors.ConfigurationError(
            f"conv2d channel mismatch: input has {channels}, weight expects {weight.shape[1]}"
        )
    kh, kw = weight.shape[2], weight.shape[3]
    if padding and (kh % 2 == 0 or kw % 2 == 0):
        raise errors.ConfigurationError(
            f"padded convolution needs odd kernel extents, got {kh}x{kw}"
        )
    ho = _conv_output_extent(input.shape[2], kh, stride, padding)
    wo = _conv_output_extent(input.shape[3], kw, stride, padding)
    if ho < 1 or wo < 1:
        raise errors.ConfigurationError(
            f"conv2d output extent {ho}x{wo} is not positive for input {input.shape[2:]} "
            f"kernel {kh}x{kw} stride {stride} padding {padding}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise errors.ConfigurationError(
            f"conv2d bias must have shape ({weight.shape[0]},), got {bias.shape}"
        )


def conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """2-D cross-correlation over `input` [N,C_in,H,W] with `weight` [C_out,C_in,kh,kw].

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.autograd import Tensor, conv2d

        x = Tensor(np.ones((1, 1, 5, 5)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        out = conv2d(x, w, Tensor(np.zeros(1)))
        assert out.shape == (1, 1, 3, 3) and np.all(out.data == 9.0)
        ```
    """
    _check_conv(input, weight, bias, stride, padding, depthwise=False)
    args = (input, weight) if bias is None else (input, weight, bias)
    return Conv2d.apply(*args, stride=stride, padding=padding, depthwise=False)


def depthwise_conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """Per-channel convolution: `weight` is [C,1,kh,kw] and channel c only sees channel c."""
    _check_conv(input, weight, bias, stride, padding, depthwise=True)
    args = (input, weight) if bias is None else (input, weight, bias)
    return Conv2d.apply(*args, stride=stride, padding=padding, depthwise=True)


# ---------------------------------------------------------------------------
# Dense algebra
# ---------------------------------------------------------------------------


class Linear(Function):
    def forward(self, x, w, *bias):
        self.saved.update(x=x, w=w)
        out = x @ w.T
        if bias:
            out = out + bias[0]
        return out

    def backward(self, grad):
        x, w = self.saved["x"], self.saved["w"]
        grad_x = grad @ w
        flat_g = grad.reshape(-1, grad.shape[-1])
        grad_w = flat_g.T @ x.reshape(-1, x.shape[-1])
        grads = [grad_x, grad_w]
        if len(self.inputs) == 3:
            grads.append(flat_g.sum(axis=0))
        return tuple(grads)


def linear(input: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: `input @ weight.T + bias`."""
    if weight.ndim != 2 or input.shape[-1] != weight.shape[1]:
        raise errors.ConfigurationError(
            f"linear expects weight [d_out,{input.shape[-1]}], got {weight.shape}"
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise errors.ConfigurationError(
            f"linear bias must have shape ({weight.shape[0]},), got {bias.shape}"
        )
    args = (input, weight) if bias is None else (input, weight, bias)
    return Linear.apply(*args)


class MatMul(Function):
    def forward(self, a, b):
        self.saved.update(a=a, b=b)
        out = np.matmul(a, b)
        batch = int(np.prod(out.shape[:-2], dtype=np.int64))
        record_macs(batch * a.shape[-2] * a.shape[-1] * b.shape[-1])
        return out

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        grad_a = np.matmul(grad, np.swapaxes(b, -1, -2))
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad)
        return self.unbroadcast(grad_a, a.shape), self.unbroadcast(grad_b, b.shape)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes, broadcasting leading axes."""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise errors.ConfigurationError(
            f"matmul shape mismatch: {a.shape} @ {b.shape}"
        )
    return MatMul.apply(a, b)


class Add(Function):
    def forward(self, a, b):
        self.saved.update(a_shape=a.shape, b_shape=b.shape)
        return a + b

    def backward(self, grad):
        return (
            self.unbroadcast(grad, self.saved["a_shape"]),
            self.unbroadcast(grad, self.saved["b_shape"]),
        )


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise errors.ConfigurationError(f"add cannot broadcast {a.shape} and {b.shape}") from e
    return Add.apply(a, b)


class Mul(Function):
    def forward(self, a, b):
        self.saved.update(a=a, b=b)
        return a * b

    def backward(self, grad):
        a, b = self.saved["a"], self.saved["b"]
        return (
            self.unbroadcast(grad * b, a.shape),
            self.unbroadcast(grad * a, b.shape),
        )


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise errors.ConfigurationError(f"mul cannot broadcast {a.shape} and {b.shape}") from e
    return Mul.apply(a, b)


class Scale(Function):
    def forward(self, x, *, factor: float):
        self.saved["factor"] = factor
        return x * x.dtype.type(factor)

    def backward(self, grad):
        return (grad * grad.dtype.type(self.saved["factor"]),)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


# ---------------------------------------------------------------------------
# Shape plumbing and reductions
# ---------------------------------------------------------------------------


class Transpose(Function):
    def forward(self, x, *, axes):
        self.saved["axes"] = axes
        return np.ascontiguousarray(np.transpose(x, axes))

    def backward(self, grad):
        inverse = np.argsort(self.saved["axes"])
        return (np.ascontiguousarray(np.transpose(grad, inverse)),)


def transpose(x: Tensor, axes: typing.Sequence[int] | None = None) -> Tensor:
    """Permute axes; with no `axes`, swap the last two."""
    if axes is None:
        axes = list(range(x.ndim))
        if x.ndim >= 2:
            axes[-1], axes[-2] = axes[-2], axes[-1]
    axes = tuple(int(a) % x.ndim for a in axes)
    if sorted(axes) != list(range(x.ndim)):
        raise errors.ConfigurationError(f"invalid permutation {axes} for {x.ndim} axes")
    return Transpose.apply(x, axes=axes)


class Reshape(Function):
    def forward(self, x, *, shape):
        self.saved["shape"] = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.saved["shape"]),)


def _resolve_shape(source: tuple[int, ...], shape: tuple[int, ...]) -> tuple[int, ...]:
    size = math.prod(source)
    unknown = [i for i, d in enumerate(shape) if d == -1]
    if len(unknown) > 1 or any(d == 0 or d < -1 for d in shape):
        raise errors.ConfigurationError(f"cannot reshape {source} into {shape}")
    known = math.prod(d for d in shape if d != -1)
    resolved = list(shape)
    if unknown:
        if size % known:
            raise errors.ConfigurationError(f"cannot reshape {source} into {shape}")
        resolved[unknown[0]] = size // known
    if math.prod(resolved) != size:
        raise errors.ConfigurationError(f"cannot reshape {source} into {shape}")
    return tuple(resolved)


def reshape(x: Tensor, shape: typing.Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=_resolve_shape(x.shape, tuple(int(d) for d in shape)))


class Concat(Function):
    def forward(self, *arrays, axis: int):
        self.saved.update(axis=axis, sizes=[a.shape[axis] for a in arrays])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.saved["sizes"])[:-1]
        return tuple(np.split(grad, bounds, axis=self.saved["axis"]))


def concat(tensors: typing.Sequence[Tensor], axis: int = -1) -> Tensor:
    """Join tensors along `axis`.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.autograd import Tensor, concat

        a, b = Tensor(np.zeros((2, 3))), Tensor(np.ones((2, 5)))
        assert concat([a, b], axis=-1).shape == (2, 8)
        ```
    """
    if not tensors:
        raise errors.ConfigurationError("concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors:
        if t.ndim != ndim or any(
            t.shape[d] != tensors[0].shape[d] for d in range(ndim) if d != axis
        ):
            raise errors.ConfigurationError(
                f"concat shape mismatch on axis {axis}: {[t.shape for t in tensors]}"
            )
    return Concat.apply(*tensors, axis=axis)


def _normalize_axes(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(int(a) % ndim for a in axis))


class Sum(Function):
    def forward(self, x, *, axes, keepdims):
        self.saved.update(shape=x.shape, axes=axes, keepdims=keepdims)
        return np.asarray(x.sum(axis=axes, keepdims=keepdims))

    def backward(self, grad):
        s = self.saved
        if not s["keepdims"]:
            grad = np.expand_dims(grad, s["axes"])
        return (np.ascontiguousarray(np.broadcast_to(grad, s["shape"])),)


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axes=_normalize_axes(axis, x.ndim), keepdims=keepdims)


class Mean(Function):
    def forward(self, x, *, axes, keepdims):
        count = int(np.prod([x.shape[a] for a in axes], dtype=np.int64))
        self.saved.update(shape=x.shape, axes=axes, keepdims=keepdims, count=count)
        return np.asarray(x.mean(axis=axes, keepdims=keepdims))

    def backward(self, grad):
        s = self.saved
        if not s["keepdims"]:
            grad = np.expand_dims(grad, s["axes"])
        grad = grad / grad.dtype.type(s["count"])
        return (np.ascontiguousarray(np.broadcast_to(grad, s["shape"])),)


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axes=_normalize_axes(axis, x.ndim), keepdims=keepdims)


class Gather(Function):
    def forward(self, table, *, index):
        self.saved.update(index=index, size=table.shape[-1])
        return table[..., index]

    def backward(self, grad):
        index, size = self.saved["index"], self.saved["size"]
        flat_index = index.reshape(-1)
        lead = grad.shape[: grad.ndim - index.ndim]
        rows = grad.reshape(int(np.prod(lead, dtype=np.int64)), -1)
        # bincount sums in a fixed order, so the scatter is deterministic.
        out = np.stack(
            [np.bincount(flat_index, weights=row, minlength=size) for row in rows]
        )
        return (out.reshape(*lead, size).astype(grad.dtype, copy=False),)


def gather(table: Tensor, index: np.ndarray) -> Tensor:
    """Select entries of `table` along its last axis: ``table[..., index]``."""
    index = np.asarray(index, dtype=np.int64)
    if index.size and (index.min() < 0 or index.max() >= table.shape[-1]):
        raise errors.ConfigurationError(
            f"gather index out of range for table of width {table.shape[-1]}"
        )
    return Gather.apply(table, index=index)


# ---------------------------------------------------------------------------
# Activations and normalization
# ---------------------------------------------------------------------------


class GELU(Function):
    def forward(self, x):
        cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        self.saved.update(x=x, cdf=cdf)
        return x * cdf

    def backward(self, grad):
        x, cdf = self.saved["x"], self.saved["cdf"]
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (grad * (cdf + x * pdf),)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, x·Φ(x) with Φ the standard normal CDF."""
    return GELU.apply(x)


class Softmax(Function):
    def forward(self, x, *, axis):
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        y = e / e.sum(axis=axis, keepdims=True)
        self.saved.update(y=y, axis=axis)
        return y

    def backward(self, grad):
        y, axis = self.saved["y"], self.saved["axis"]
        return (y * (grad - (grad * y).sum(axis=axis, keepdims=True)),)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Shift-stabilized softmax along `axis`."""
    return Softmax.apply(x, axis=int(axis) % x.ndim)


class LayerNorm(Function):
    def forward(self, x, gamma, beta, *, eps):
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std
        self.saved.update(xhat=xhat, inv_std=inv_std, gamma=gamma)
        return xhat * gamma + beta

    def backward(self, grad):
        xhat, inv_std, gamma = (
            self.saved["xhat"],
            self.saved["inv_std"],
            self.saved["gamma"],
        )
        d = xhat.shape[-1]
        gxhat = grad * gamma
        grad_x = (inv_std / d) * (
            d * gxhat
            - gxhat.sum(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(grad.ndim - 1))
        return grad_x, (grad * xhat).sum(axis=lead), grad.sum(axis=lead)


def layer_norm(
    x: Tensor, gamma: Tensor, beta: Tensor, eps: float = DEFAULT_LAYER_NORM_EPS
) -> Tensor:
    """Normalize over the last axis, then scale by `gamma` and shift by `beta`."""
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise errors.ConfigurationError(
            f"layer_norm affine parameters must have shape ({d},), got "
            f"{gamma.shape} and {beta.shape}"
        )
    return LayerNorm.apply(x, gamma, beta, eps=float(eps))


class BatchNorm(Function):
    def forward(
        self,
        x,
        gamma,
        beta,
        *,
        running_mean,
        running_var,
        training,
        momentum,
        eps,
    ):
        axes = (0, 2, 3)
        if training:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            mu = x.mean(axis=axes)
            centered = x - mu[None, :, None, None]
            var = (centered * centered).mean(axis=axes)
            running_mean *= 1.0 - momentum
            running_mean += momentum * mu
            running_var *= 1.0 - momentum
            running_var += momentum * var * (count / (count - 1))
        else:
            mu, var = running_mean, running_var
            centered = x - mu[None, :, None, None]
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = centered * inv_std[None, :, None, None]
        self.saved.update(xhat=xhat, inv_std=inv_std, gamma=gamma, training=training)
        return xhat * gamma[None, :, None, None] + beta[None, :, None, None]

    def backward(self, grad):
        s = self.saved
        xhat, inv_std, gamma = s["xhat"], s["inv_std"], s["gamma"]
        axes = (0, 2, 3)
        grad_gamma = (grad * xhat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        gxhat = grad * gamma[None, :, None, None]
        if s["training"]:
            m = grad.shape[0] * grad.shape[2] * grad.shape[3]
            grad_x = (inv_std[None, :, None, None] / m) * (
                m * gxhat
                - gxhat.sum(axis=axes, keepdims=True)
                - xhat * (gxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = gxhat * inv_std[None, :, None, None]
        return grad_x, grad_gamma, grad_beta


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
    training: bool,
    momentum: float = DEFAULT_BATCH_NORM_MOMENTUM,
    eps: float = DEFAULT_BATCH_NORM_EPS,
) -> Tensor:
    """Per-channel normalization of `x` [N,C,H,W].

    In training mode batch statistics are used and the running statistics are
    updated in place (running variance with the unbiased estimate); in eval
    mode only the running statistics are used.
    """
    if x.ndim != 4:
        raise errors.ConfigurationError(f"batch_norm expects [N,C,H,W], got {x.shape}")
    c = x.shape[1]
    for t in (gamma, beta, running_mean, running_var):
        if t.shape != (c,):
            raise errors.ConfigurationError(
                f"batch_norm per-channel tensors must have shape ({c},), got {t.shape}"
            )
    if training and x.shape[0] * x.shape[2] * x.shape[3] == 1:
        raise errors.DegenerateVarianceError(
            "batch_norm in train mode needs more than one value per channel"
        )
    return BatchNorm.apply(
        x,
        gamma,
        beta,
        running_mean=running_mean.data,
        running_var=running_var.data,
        training=training,
        momentum=float(momentum),
        eps=float(eps),
    )


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


class CrossEntropy(Function):
    def forward(self, logits, *, labels):
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        log_probs = shifted - log_norm
        n = logits.shape[0]
        self.saved.update(probs=np.exp(log_probs), labels=labels)
        return np.asarray(-log_probs[np.arange(n), labels].mean())

    def backward(self, grad):
        probs, labels = self.saved["probs"], self.saved["labels"]
        n = probs.shape[0]
        onehot = np.zeros_like(probs)
        onehot[np.arange(n), labels] = 1.0
        return ((probs - onehot) * (grad / n),)


def cross_entropy(logits: Tensor, labels: typing.Sequence[int] | np.ndarray) -> Tensor:
    """Mean negative log-likelihood of `labels` under softmax(`logits`).

    !!! example "Examples"
        ```python
        import math
        import numpy as np
        from dualstream.autograd import Tensor, cross_entropy

        loss = cross_entropy(Tensor(np.zeros((3, 5))), [0, 1, 4])
        assert abs(loss.item() - math.log(5)) < 1e-12
        ```
    """
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise errors.ConfigurationError(
            f"cross_entropy expects logits [N,K] and labels [N], got "
            f"{logits.shape} and {labels.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise errors.ConfigurationError(
            f"labels must lie in [0, {logits.shape[1]}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return CrossEntropy.apply(logits, labels=labels)

"""Forward passes of the dual-stream classifier.

Every function reads its tensors from a `ParamStore` under a dotted prefix and
composes `dualstream.autograd` ops, so a single `backward` on the loss reaches
all parameters. Feature maps are [N,C,H,W] throughout.
"""

import functools
import logging
import math
import typing
from dataclasses import dataclass

import numpy as np

from dualstream import errors
from dualstream.autograd import (
    Tensor,
    batch_norm,
    concat,
    conv2d,
    depthwise_conv2d,
    gather,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean,
    reshape,
    scale,
    softmax,
    transpose,
)
from dualstream.model.config import GRID_REDUCTION, ModelConfig
from dualstream.model.params import ParamStore, init_params

logger = logging.getLogger(__name__)

Mode = typing.Literal["train", "eval"]


def _conv(x: Tensor, params: ParamStore, prefix: str, **kwargs) -> Tensor:
    return conv2d(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], **kwargs)


def channel_layer_norm(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    """layer_norm over the channels of every spatial site of [N,C,H,W]."""
    tokens = transpose(x, (0, 2, 3, 1))
    normed = layer_norm(tokens, params[f"{prefix}.weight"], params[f"{prefix}.bias"])
    return transpose(normed, (0, 3, 1, 2))


def grain_forward(images: Tensor, params: ParamStore, in_channels: int = 3) -> Tensor:
    """Convolutional stem: [N,in_channels,H,W] → [N,embed_dim,H/4,W/4].

    A stride-2 3×3 conv, two stride-1 3×3 convs (GELU after each), then patch
    aggregation by a 2×2 stride-2 conv followed by layer_norm over channels.
    """
    if images.ndim != 4 or images.shape[1] != in_channels:
        raise errors.ConfigurationError(
            f"grain expects images [N,{in_channels},H,W], got {images.shape}"
        )
    h, w = images.shape[2:]
    if h % GRID_REDUCTION or w % GRID_REDUCTION:
        raise errors.ConfigurationError(
            f"image extents {h}x{w} must be divisible by {GRID_REDUCTION}"
        )
    x = gelu(_conv(images, params, "grain.stem1", stride=2, padding=1))
    x = gelu(_conv(x, params, "grain.stem2", padding=1))
    x = gelu(_conv(x, params, "grain.stem3", padding=1))
    x = _conv(x, params, "grain.patch", stride=2)
    return channel_layer_norm(x, params, "grain.norm")


def lpu_forward(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    """Local perception unit: x + depthwise 3×3 conv(x), a conditional position encoding."""
    local = depthwise_conv2d(
        x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], padding=1
    )
    return x + local


@dataclass(frozen=True)
class RelativeBias:
    """Learned per-head scalar added to attention logits, keyed by spatial offset.

    Queries live on the full Hq×Wq grid. Keys come from the grid reduced by
    `kv_reduction` r; key (a, b) is located at (a·r, b·r) on the query grid.
    The offset between a query and a key therefore lies in
    [-(Hq-1), Hq-1] × [-(Wq-1), Wq-1], which indexes a table of width
    (2·Hq−1)·(2·Wq−1).

    !!! example "Examples"
        ```python
        from dualstream.model import RelativeBias

        index = RelativeBias.index_map(4, 4, 2)
        assert index.shape == (16, 4)
        # Query (0, 0) and key (0, 0) share the zero offset, the table center.
        assert index[0, 0] == 3 * 7 + 3
        ```
    """

    table: Tensor
    """[num_heads, (2·Hq−1)·(2·Wq−1)]"""

    hq: int
    wq: int
    kv_reduction: int = 1

    @staticmethod
    @functools.lru_cache(maxsize=32)
    def index_map(hq: int, wq: int, kv_reduction: int) -> np.ndarray:
        """Table column for each (query, key) pair: int array [Hq·Wq, (Hq/r)·(Wq/r)]."""
        r = kv_reduction
        qi, qj = np.meshgrid(np.arange(hq), np.arange(wq), indexing="ij")
        ka, kb = np.meshgrid(np.arange(0, hq, r), np.arange(0, wq, r), indexing="ij")
        di = qi.reshape(-1, 1) - ka.reshape(1, -1) + (hq - 1)
        dj = qj.reshape(-1, 1) - kb.reshape(1, -1) + (wq - 1)
        index = di * (2 * wq - 1) + dj
        index.setflags(write=False)
        return index

    def __post_init__(self):
        expected = (2 * self.hq - 1) * (2 * self.wq - 1)
        if self.table.ndim != 2 or self.table.shape[1] != expected:
            raise errors.ConfigurationError(
                f"relative bias table for a {self.hq}x{self.wq} grid needs width "
                f"{expected}, got shape {self.table.shape}"
            )

    def __call__(self) -> Tensor:
        """Bias [num_heads, L, L/r²] for the attention logits."""
        return gather(self.table, self.index_map(self.hq, self.wq, self.kv_reduction))


def lmhsa_forward(
    x: Tensor,
    params: ParamStore,
    prefix: str,
    num_heads: int,
    kv_reduction: int,
    *,
    return_attention: bool = False,
) -> Tensor | tuple[Tensor, Tensor]:
    """Lightweight multi-head self-attention with a residual connection.

    The input is layer-normalized per site. Queries come from a 1×1 conv of the
    full map; keys and values from 1×1 convs of the map reduced by an r×r
    stride-r depthwise conv (skipped when r = 1), so each head scores L queries
    against L/r² keys. A relative positional bias is added to the scaled logits.

    Returns the updated map, plus the attention probabilities
    [N, num_heads, L, L/r²] when `return_attention` is set.
    """
    n, c, h, w = x.shape
    r = kv_reduction
    if c % num_heads:
        raise errors.ConfigurationError(
            f"channels ({c}) must be divisible by num_heads ({num_heads})"
        )
    if r < 1 or h % r or w % r:
        raise errors.ConfigurationError(
            f"spatial extents {h}x{w} must be divisible by kv_reduction ({r})"
        )
    d_k = c // num_heads
    length, kv_length = h * w, (h // r) * (w // r)

    y = channel_layer_norm(x, params, f"{prefix}.norm")
    q = _conv(y, params, f"{prefix}.q")
    q = transpose(reshape(q, (n, num_heads, d_k, length)), (0, 1, 3, 2))
    if r > 1:
        kv_src = depthwise_conv2d(
            y,
            params[f"{prefix}.kv_reduce.weight"],
            params[f"{prefix}.kv_reduce.bias"],
            stride=r,
        )
    else:
        kv_src = y
    # Keys stay [.., d_k, L_kv], which is already Kᵀ for the score product.
    k_t = reshape(_conv(kv_src, params, f"{prefix}.k"), (n, num_heads, d_k, kv_length))
    v = reshape(_conv(kv_src, params, f"{prefix}.v"), (n, num_heads, d_k, kv_length))
    v = transpose(v, (0, 1, 3, 2))

    bias = RelativeBias(params[f"{prefix}.rel_bias"], h, w, r)
    scores = scale(matmul(q, k_t), 1.0 / math.sqrt(d_k)) + bias()
    attention = softmax(scores, axis=-1)
    out = transpose(matmul(attention, v), (0, 1, 3, 2))
    out = _conv(reshape(out, (n, c, h, w)), params, f"{prefix}.proj")
    result = x + out
    if return_attention:
        return result, attention
    return result


def mlp_conv_forward(x: Tensor, params: ParamStore, prefix: str) -> Tensor:
    """Pointwise feed-forward block: x + conv1x1(GELU(conv1x1(x)))."""
    hidden = gelu(_conv(x, params, f"{prefix}.fc1"))
    return x + _conv(hidden, params, f"{prefix}.fc2")


def attention_stream_forward(x: Tensor, params: ParamStore, config: ModelConfig) -> Tensor:
    for i in range(config.num_lmhsa_blocks):
        block = f"attn.blocks.{i}"
        x = lpu_forward(x, params, f"{block}.lpu")
        x = lmhsa_forward(
            x, params, f"{block}.attn", config.num_heads, config.kv_reduction
        )
        x = mlp_conv_forward(x, params, f"{block}.mlp")
    return x


def cnn_stream_forward(
    x: Tensor, params: ParamStore, config: ModelConfig, mode: Mode = "train"
) -> Tensor:
    """Four blocks of 3×3 conv → GELU → batch_norm at the widths in `config.cnn_channels`."""
    training = _is_training(mode)
    for i in range(len(config.cnn_channels)):
        x = gelu(_conv(x, params, f"cnn.blocks.{i}.conv", padding=1))
        bn = f"cnn.blocks.{i}.bn"
        x = batch_norm(
            x,
            params[f"{bn}.weight"],
            params[f"{bn}.bias"],
            params[f"{bn}.running_mean"],
            params[f"{bn}.running_var"],
            training=training,
        )
    return x


def fuse_and_classify(attn_feat: Tensor, cnn_feat: Tensor, params: ParamStore) -> Tensor:
    """Pool both streams, concatenate, and apply the expansion head → logits [N,K]."""
    pooled = concat([mean(attn_feat, axis=(2, 3)), mean(cnn_feat, axis=(2, 3))], axis=-1)
    hidden = gelu(linear(pooled, params["head.fc1.weight"], params["head.fc1.bias"]))
    return linear(hidden, params["head.fc2.weight"], params["head.fc2.bias"])


def model_forward(
    images: Tensor, params: ParamStore, config: ModelConfig, mode: Mode = "train"
) -> Tensor:
    """Full classifier: grain stem → attention and CNN streams → fused head."""
    features = grain_forward(images, params, config.in_channels)
    attn_feat = attention_stream_forward(features, params, config)
    cnn_feat = cnn_stream_forward(features, params, config, mode)
    return fuse_and_classify(attn_feat, cnn_feat, params)


def _is_training(mode: Mode) -> bool:
    if mode not in ("train", "eval"):
        raise errors.ConfigurationError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train"


class DualStreamNet:
    """A `ModelConfig` together with the `ParamStore` it describes.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.autograd import Tensor, no_grad
        from dualstream.model import DualStreamNet, ModelConfig

        net = DualStreamNet(
            ModelConfig(input_size=32, embed_dim=8, num_heads=2, cnn_channels=(8, 8, 8, 8))
        )
        with no_grad():
            logits = net(Tensor(np.zeros((2, 3, 32, 32))), mode="eval")
        assert logits.shape == (2, 5)
        ```
    """

    __slots__ = ("config", "params")

    def __init__(
        self,
        config: ModelConfig,
        params: ParamStore | None = None,
        *,
        dtype: typing.Any = np.float64,
    ):
        self.config = config
        self.params = params if params is not None else init_params(config, dtype)

    def __call__(self, images: Tensor, mode: Mode = "train") -> Tensor:
        return model_forward(images, self.params, self.config, mode)

    def num_parameters(self) -> int:
        return self.params.num_parameters()

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.items()))[1].dtype

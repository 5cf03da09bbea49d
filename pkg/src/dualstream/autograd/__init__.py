from dualstream.autograd.functional import (
    DEFAULT_BATCH_NORM_EPS,
    DEFAULT_BATCH_NORM_MOMENTUM,
    DEFAULT_LAYER_NORM_EPS,
    add,
    batch_norm,
    concat,
    conv2d,
    cross_entropy,
    depthwise_conv2d,
    gather,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean,
    mul,
    reshape,
    scale,
    softmax,
    sum,
    transpose,
)
from dualstream.autograd.gradcheck import (
    GradientCheckResult,
    check_gradients,
    relative_error,
)
from dualstream.autograd.tensor import (
    Function,
    Graph,
    MacCounter,
    Tensor,
    backward,
    count_macs,
    dump_tensor,
    is_grad_enabled,
    no_grad,
)

__all__ = [
    "Tensor",
    "Function",
    "Graph",
    "MacCounter",
    "backward",
    "no_grad",
    "is_grad_enabled",
    "count_macs",
    "dump_tensor",
    "add",
    "mul",
    "scale",
    "matmul",
    "linear",
    "conv2d",
    "depthwise_conv2d",
    "transpose",
    "reshape",
    "concat",
    "sum",
    "mean",
    "gather",
    "gelu",
    "softmax",
    "layer_norm",
    "batch_norm",
    "cross_entropy",
    "check_gradients",
    "relative_error",
    "GradientCheckResult",
    "DEFAULT_LAYER_NORM_EPS",
    "DEFAULT_BATCH_NORM_EPS",
    "DEFAULT_BATCH_NORM_MOMENTUM",
]

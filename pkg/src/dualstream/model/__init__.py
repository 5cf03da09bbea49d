from dualstream.model.config import ModelConfig, build_model_config
from dualstream.model.layers import (
    DualStreamNet,
    RelativeBias,
    attention_stream_forward,
    channel_layer_norm,
    cnn_stream_forward,
    fuse_and_classify,
    grain_forward,
    lmhsa_forward,
    lpu_forward,
    mlp_conv_forward,
    model_forward,
)
from dualstream.model.params import ParamKind, ParamStore, init_params

__all__ = [
    "ModelConfig",
    "build_model_config",
    "ParamStore",
    "ParamKind",
    "init_params",
    "RelativeBias",
    "DualStreamNet",
    "grain_forward",
    "lpu_forward",
    "lmhsa_forward",
    "mlp_conv_forward",
    "attention_stream_forward",
    "cnn_stream_forward",
    "fuse_and_classify",
    "model_forward",
    "channel_layer_norm",
]

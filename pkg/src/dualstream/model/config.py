from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from dualstream import errors

DEFAULT_INPUT_SIZE = 192
DEFAULT_STEM_CHANNELS = 32
DEFAULT_EMBED_DIM = 64
DEFAULT_NUM_LMHSA_BLOCKS = 2
DEFAULT_NUM_HEADS = 4
DEFAULT_KV_REDUCTION = 2
DEFAULT_MLP_CONV_HIDDEN_RATIO = 4
DEFAULT_CNN_CHANNELS = (64, 64, 64, 64)
DEFAULT_FFN_EXPANSION = 4
DEFAULT_NUM_CLASSES = 5
DEFAULT_INIT_STD = 0.02

# Two stride-2 stages between the image and the stream feature grids.
GRID_REDUCTION = 4


class ModelConfig(BaseModel):
    """Architectural hyperparameters of the dual-stream classifier.

    !!! example "Examples"
        ```python
        from dualstream.model import ModelConfig

        cfg = ModelConfig(input_size=64, embed_dim=16, num_lmhsa_blocks=1)
        assert cfg.grid_size == 16
        assert cfg.head_dim == 4
        ```
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_size: int = Field(default=DEFAULT_INPUT_SIZE, gt=0)
    in_channels: int = Field(default=3, gt=0)
    stem_channels: int = Field(default=DEFAULT_STEM_CHANNELS, gt=0)
    embed_dim: int = Field(default=DEFAULT_EMBED_DIM, gt=0)
    num_lmhsa_blocks: int = Field(default=DEFAULT_NUM_LMHSA_BLOCKS, ge=0)
    num_heads: int = Field(default=DEFAULT_NUM_HEADS, gt=0)
    kv_reduction: int = Field(default=DEFAULT_KV_REDUCTION, gt=0)
    mlp_conv_hidden_ratio: int = Field(default=DEFAULT_MLP_CONV_HIDDEN_RATIO, gt=0)
    cnn_channels: tuple[int, int, int, int] = DEFAULT_CNN_CHANNELS
    ffn_expansion: int = Field(default=DEFAULT_FFN_EXPANSION, gt=0)
    num_classes: int = Field(default=DEFAULT_NUM_CLASSES, ge=2)
    init_std: float = Field(default=DEFAULT_INIT_STD, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_divisibility(self) -> "ModelConfig":
        if self.embed_dim % self.num_heads:
            raise ValueError(
                f"embed_dim ({self.embed_dim}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.input_size % GRID_REDUCTION:
            raise ValueError(
                f"input_size ({self.input_size}) must be divisible by {GRID_REDUCTION}"
            )
        if self.grid_size % self.kv_reduction:
            raise ValueError(
                f"feature grid {self.grid_size} must be divisible by kv_reduction "
                f"({self.kv_reduction})"
            )
        if any(c <= 0 for c in self.cnn_channels):
            raise ValueError(f"cnn_channels must be positive, got {self.cnn_channels}")
        return self

    @property
    def grid_size(self) -> int:
        """Side of the square feature grid both streams operate on."""
        return self.input_size // GRID_REDUCTION

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def fused_dim(self) -> int:
        return self.embed_dim + self.cnn_channels[-1]


def build_model_config(**values) -> ModelConfig:
    """Construct a `ModelConfig`, converting validation failures to `ConfigurationError`."""
    try:
        return ModelConfig(**values)
    except ValidationError as e:
        raise errors.ConfigurationError(f"Invalid model configuration: {e}") from e

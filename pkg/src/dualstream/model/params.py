import logging
import typing

import numpy as np
from scipy.stats import truncnorm

from dualstream import errors
from dualstream.autograd import Tensor
from dualstream.model.config import ModelConfig

logger = logging.getLogger(__name__)

# Truncation of the normal init, in standard deviations.
TRUNCATION = 2.0


class ParamKind(typing.NamedTuple):
    """How a stored tensor takes part in training."""

    trainable: bool = True
    decay: bool = True


WEIGHT = ParamKind()
NO_DECAY = ParamKind(trainable=True, decay=False)
BUFFER = ParamKind(trainable=False, decay=False)


class ParamStore:
    """Named, ordered collection of model tensors.

    Trainable tensors have `requires_grad` set. Buffers (batch-norm running
    statistics) live in the same store but are skipped by the optimizer.
    Iteration order is insertion order and therefore stable.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.model import ParamStore

        store = ParamStore()
        store.add("fc.weight", np.zeros((2, 3)))
        store.add("bn.running_mean", np.zeros(2), trainable=False)
        assert store["fc.weight"].requires_grad
        assert [name for name, _ in store.trainable()] == ["fc.weight"]
        assert store.num_parameters() == 6
        ```
    """

    __slots__ = ("_tensors", "_kinds")

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._kinds: dict[str, ParamKind] = {}

    def add(
        self,
        name: str,
        data: np.ndarray,
        *,
        trainable: bool = True,
        decay: bool = True,
        dtype: typing.Any = None,
    ) -> Tensor:
        if name in self._tensors:
            raise errors.ConfigurationError(f"Duplicate parameter name: {name}")
        kind = ParamKind(trainable=trainable, decay=decay and trainable)
        tensor = Tensor(data, requires_grad=trainable, dtype=dtype, name=name)
        self._tensors[name] = tensor
        self._kinds[name] = kind
        return tensor

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._tensors[name]
        except KeyError:
            raise errors.ConfigurationError(f"Missing parameter: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> typing.Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def items(self) -> typing.Iterator[tuple[str, Tensor]]:
        yield from self._tensors.items()

    def kind(self, name: str) -> ParamKind:
        return self._kinds[name]

    def trainable(self) -> typing.Iterator[tuple[str, Tensor]]:
        for name, tensor in self._tensors.items():
            if self._kinds[name].trainable:
                yield name, tensor

    def buffers(self) -> typing.Iterator[tuple[str, Tensor]]:
        for name, tensor in self._tensors.items():
            if not self._kinds[name].trainable:
                yield name, tensor

    def decays(self, name: str) -> bool:
        return self._kinds[name].decay

    def num_parameters(self, *, trainable_only: bool = True) -> int:
        return sum(
            t.size
            for name, t in self._tensors.items()
            if self._kinds[name].trainable or not trainable_only
        )

    def groups(self) -> dict[str, list[str]]:
        """Trainable names grouped by owning layer (name without its last component)."""
        grouped: dict[str, list[str]] = {}
        for name, _ in self.trainable():
            grouped.setdefault(name.rsplit(".", 1)[0], []).append(name)
        return grouped

    def load_arrays(self, arrays: typing.Mapping[str, np.ndarray]) -> None:
        """Overwrite every stored tensor in place from `arrays` (same names and shapes)."""
        missing = [name for name in self._tensors if name not in arrays]
        extra = [name for name in arrays if name not in self._tensors]
        if missing or extra:
            raise errors.ConfigurationError(
                f"Parameter names do not match: missing {missing[:5]}, unexpected {extra[:5]}"
            )
        for name, tensor in self._tensors.items():
            array = arrays[name]
            if array.shape != tensor.shape:
                raise errors.ConfigurationError(
                    f"Shape mismatch for {name}: stored {tensor.shape}, given {array.shape}"
                )
            tensor.data[...] = array


def _trunc_normal(
    rng: np.random.Generator, shape: tuple[int, ...], std: float
) -> np.ndarray:
    return truncnorm.rvs(
        -TRUNCATION, TRUNCATION, loc=0.0, scale=std, size=shape, random_state=rng
    )


class _Initializer:
    def __init__(self, config: ModelConfig, dtype: typing.Any):
        self.store = ParamStore()
        self.rng = np.random.default_rng(config.seed)
        self.std = config.init_std
        self.dtype = dtype

    def conv(self, prefix: str, c_out: int, c_in: int, k: int) -> None:
        self.store.add(
            f"{prefix}.weight",
            _trunc_normal(self.rng, (c_out, c_in, k, k), self.std),
            dtype=self.dtype,
        )
        self.store.add(f"{prefix}.bias", np.zeros(c_out), dtype=self.dtype)

    def linear(self, prefix: str, d_out: int, d_in: int) -> None:
        self.store.add(
            f"{prefix}.weight",
            _trunc_normal(self.rng, (d_out, d_in), self.std),
            dtype=self.dtype,
        )
        self.store.add(f"{prefix}.bias", np.zeros(d_out), dtype=self.dtype)

    def norm(self, prefix: str, channels: int) -> None:
        self.store.add(f"{prefix}.weight", np.ones(channels), decay=False, dtype=self.dtype)
        self.store.add(f"{prefix}.bias", np.zeros(channels), decay=False, dtype=self.dtype)

    def batch_norm(self, prefix: str, channels: int) -> None:
        self.norm(prefix, channels)
        self.store.add(
            f"{prefix}.running_mean", np.zeros(channels), trainable=False, dtype=self.dtype
        )
        self.store.add(
            f"{prefix}.running_var", np.ones(channels), trainable=False, dtype=self.dtype
        )


def init_params(config: ModelConfig, dtype: typing.Any = np.float64) -> ParamStore:
    """Create and initialize every tensor of the model described by `config`.

    Conv and linear weights are drawn from a normal truncated at two standard
    deviations (std `config.init_std`), biases and the relative-bias tables
    start at zero, norm scales at one. The draw order is fixed, so the same
    `config.seed` gives bitwise-identical stores.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.model import ModelConfig, init_params

        cfg = ModelConfig(input_size=32, embed_dim=8, num_heads=2, cnn_channels=(8, 8, 8, 8))
        a, b = init_params(cfg), init_params(cfg)
        assert all(np.array_equal(a[n].data, b[n].data) for n in a)
        assert not a["attn.blocks.0.attn.rel_bias"].data.any()
        ```
    """
    init = _Initializer(config, dtype)
    c, s = config.embed_dim, config.stem_channels
    init.conv("grain.stem1", s, config.in_channels, 3)
    init.conv("grain.stem2", s, s, 3)
    init.conv("grain.stem3", s, s, 3)
    init.conv("grain.patch", c, s, 2)
    init.norm("grain.norm", c)

    g = config.grid_size
    table_width = (2 * g - 1) * (2 * g - 1)
    hidden = c * config.mlp_conv_hidden_ratio
    for i in range(config.num_lmhsa_blocks):
        block = f"attn.blocks.{i}"
        init.store.add(
            f"{block}.lpu.weight",
            _trunc_normal(init.rng, (c, 1, 3, 3), init.std),
            dtype=dtype,
        )
        init.store.add(f"{block}.lpu.bias", np.zeros(c), dtype=dtype)
        init.norm(f"{block}.attn.norm", c)
        init.conv(f"{block}.attn.q", c, c, 1)
        if config.kv_reduction > 1:
            r = config.kv_reduction
            init.store.add(
                f"{block}.attn.kv_reduce.weight",
                _trunc_normal(init.rng, (c, 1, r, r), init.std),
                dtype=dtype,
            )
            init.store.add(f"{block}.attn.kv_reduce.bias", np.zeros(c), dtype=dtype)
        init.conv(f"{block}.attn.k", c, c, 1)
        init.conv(f"{block}.attn.v", c, c, 1)
        init.conv(f"{block}.attn.proj", c, c, 1)
        init.store.add(
            f"{block}.attn.rel_bias",
            np.zeros((config.num_heads, table_width)),
            decay=False,
            dtype=dtype,
        )
        init.conv(f"{block}.mlp.fc1", hidden, c, 1)
        init.conv(f"{block}.mlp.fc2", c, hidden, 1)

    c_in = c
    for i, width in enumerate(config.cnn_channels):
        init.conv(f"cnn.blocks.{i}.conv", width, c_in, 3)
        init.batch_norm(f"cnn.blocks.{i}.bn", width)
        c_in = width

    d = config.fused_dim
    init.linear("head.fc1", d * config.ffn_expansion, d)
    init.linear("head.fc2", config.num_classes, d * config.ffn_expansion)

    store = init.store
    logger.debug(
        f"Initialized {len(store)} tensors, {store.num_parameters()} trainable values"
    )
    return store

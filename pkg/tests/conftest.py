import numpy as np
import pytest

from dualstream.data import synth_dataset, write_corpus
from dualstream.model import ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """Smallest model that still exercises every block type."""
    return ModelConfig(
        input_size=16,
        stem_channels=4,
        embed_dim=8,
        num_lmhsa_blocks=1,
        num_heads=2,
        kv_reduction=2,
        mlp_conv_hidden_ratio=2,
        cnn_channels=(4, 4, 4, 4),
        num_classes=3,
    )


@pytest.fixture
def tiny_dataset():
    return synth_dataset(4, num_classes=3, image_size=16, seed=5)


@pytest.fixture
def corpus_dir(tmp_path, tiny_dataset):
    root = tmp_path / "corpus"
    write_corpus(tiny_dataset, root)
    return root


TINY_RUN = {
    "input_size": 16,
    "stem_channels": 4,
    "embed_dim": 8,
    "num_lmhsa_blocks": 1,
    "num_heads": 2,
    "kv_reduction": 2,
    "mlp_conv_hidden_ratio": 2,
    "cnn_channels": "4,4,4,4",
    "num_classes": 3,
    "synth_per_class": 4,
    "epochs": 3,
    "warmup_epochs": 1,
    "batch_size": 4,
    "base_lr": 1e-2,
    "warmup_lr": 1e-4,
    "min_lr": 1e-3,
    "log_wall_time": False,
    "seed": 0,
}


@pytest.fixture
def make_run_config(tmp_path):
    """Build a tiny synthetic `RunConfig` writing under ``tmp_path/<name>``."""
    from dualstream.training import build_run_config

    def make(name="run", **overrides):
        values = {**TINY_RUN, "out_dir": str(tmp_path / name), **overrides}
        return build_run_config(values)

    return make

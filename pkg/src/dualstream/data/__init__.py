from dualstream.data.dataset import (
    DEFAULT_IMAGE_SIZE,
    DEFAULT_TRAIN_FRACTION,
    AugmentFlags,
    BatchOptions,
    ChannelStats,
    Dataset,
    LabeledSample,
    augment,
    batches,
    compute_channel_stats,
    hflip,
    load_dataset,
    rotate,
    shift,
    split,
    train_size,
)
from dualstream.data.pnm import (
    decode_pnm,
    encode_pnm,
    read_pnm,
    resize_bilinear,
    write_pnm,
)
from dualstream.data.synth import (
    CELL_CLASS_NAMES,
    centroid_baseline_accuracy,
    default_class_names,
    synth_dataset,
    write_corpus,
)

__all__ = [
    "LabeledSample",
    "Dataset",
    "load_dataset",
    "split",
    "train_size",
    "batches",
    "BatchOptions",
    "augment",
    "AugmentFlags",
    "hflip",
    "rotate",
    "shift",
    "ChannelStats",
    "compute_channel_stats",
    "decode_pnm",
    "encode_pnm",
    "read_pnm",
    "write_pnm",
    "resize_bilinear",
    "synth_dataset",
    "write_corpus",
    "centroid_baseline_accuracy",
    "default_class_names",
    "CELL_CLASS_NAMES",
    "DEFAULT_IMAGE_SIZE",
    "DEFAULT_TRAIN_FRACTION",
]

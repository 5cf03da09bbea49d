import logging
import math
import os
import typing
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from dualstream import errors
from dualstream.autograd import Tensor
from dualstream.data.pnm import PNM_SUFFIXES, read_pnm, resize_bilinear
from dualstream.utils import derive_rng

logger = logging.getLogger(__name__)

DEFAULT_IMAGE_SIZE = 192
DEFAULT_TRAIN_FRACTION = 0.8
DEFAULT_MAX_ROTATION = 15.0
DEFAULT_MAX_SHIFT = 8

OnError = typing.Literal["abort", "skip"]


@dataclass(frozen=True)
class LabeledSample:
    """One image with its class id."""

    pixels: np.ndarray
    """[3,H,W] float values in [0,1]."""

    label: int
    source_id: str
    """Stable key, ``<class_name>/<file name>`` for ingested images."""


@dataclass
class Dataset:
    """Ordered samples with dense class ids 0..K-1 named by `class_names`."""

    samples: list[LabeledSample]
    class_names: list[str]

    def __post_init__(self):
        k = len(self.class_names)
        for sample in self.samples:
            if not 0 <= sample.label < k:
                raise errors.ConfigurationError(
                    f"Label {sample.label} of {sample.source_id} outside [0, {k})"
                )

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    @property
    def source_ids(self) -> list[str]:
        return [s.source_id for s in self.samples]

    def images(self) -> np.ndarray:
        """All pixels stacked to [N,3,H,W]."""
        return np.stack([s.pixels for s in self.samples])

    def subset(self, indices: typing.Iterable[int]) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], list(self.class_names))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def load_dataset(
    root: str | os.PathLike,
    image_size: int = DEFAULT_IMAGE_SIZE,
    on_error: OnError = "abort",
) -> Dataset:
    """Load ``<root>/<class_name>/*.ppm|*.pgm`` into a `Dataset`.

    Class ids follow the lexicographic order of the subdirectory names and
    files are read in lexicographic order, so the result only depends on the
    directory contents. Every image is resized bilinearly to
    `image_size` × `image_size`.

    Args:
        root: Corpus directory.
        image_size: Output side in pixels.
        on_error: ``"abort"`` re-raises the first unreadable image, ``"skip"``
            logs a warning and leaves it out.

    Raises:
        IngestionError: On a missing root, no class directories, an empty
            class directory, or (with ``on_error="abort"``) a malformed image.
    """
    root = os.fspath(root)
    if not os.path.isdir(root):
        raise errors.IngestionError("Dataset root is not a directory", path=root)
    class_names = sorted(
        entry.name
        for entry in os.scandir(root)
        if entry.is_dir() and not entry.name.startswith(".")
    )
    if not class_names:
        raise errors.IngestionError("No class directories found", path=root)
    samples: list[LabeledSample] = []
    skipped = 0
    for label, name in enumerate(class_names):
        class_dir = os.path.join(root, name)
        files = sorted(
            f for f in os.listdir(class_dir) if f.lower().endswith(PNM_SUFFIXES)
        )
        if not files:
            raise errors.IngestionError(f"Class directory {name!r} holds no images", path=class_dir)
        loaded = 0
        for fname in files:
            path = os.path.join(class_dir, fname)
            try:
                pixels = resize_bilinear(read_pnm(path), image_size)
            except errors.IngestionError as e:
                if on_error == "abort":
                    raise
                logger.warning(f"Skipping {path}: {e}")
                skipped += 1
                continue
            samples.append(LabeledSample(pixels, label, f"{name}/{fname}"))
            loaded += 1
        if not loaded:
            raise errors.IngestionError(
                f"Class directory {name!r} holds no readable images", path=class_dir
            )
    logger.info(
        f"Loaded {len(samples)} images in {len(class_names)} classes from {root}"
        + (f" ({skipped} skipped)" if skipped else "")
    )
    return Dataset(samples, class_names)


def train_size(n: int, train_fraction: float) -> int:
    """floor(train_fraction · n), evaluated exactly on the decimal value of the fraction."""
    return math.floor(Fraction(repr(float(train_fraction))) * n)


def _stratified_counts(counts: np.ndarray, n_train: int) -> np.ndarray:
    total = int(counts.sum())
    shares = [Fraction(int(c) * n_train, total) for c in counts]
    alloc = [math.floor(s) for s in shares]
    # Largest remainder; ties go to the lower class id.
    order = sorted(range(len(shares)), key=lambda k: (-(shares[k] - alloc[k]), k))
    for k in order[: n_train - sum(alloc)]:
        alloc[k] += 1
    return np.array(alloc, dtype=np.int64)


def split(
    ds: Dataset,
    train_fraction: float = DEFAULT_TRAIN_FRACTION,
    seed: int = 0,
    *,
    stratified: bool = False,
) -> tuple[Dataset, Dataset]:
    """Seeded partition into (train, test) with exactly floor(f·N) training samples.

    With `stratified` each class contributes its largest-remainder share of
    the training quota. Both partitions keep the source order.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.data import Dataset, LabeledSample, split

        pixels = np.zeros((3, 4, 4))
        ds = Dataset([LabeledSample(pixels, i % 2, str(i)) for i in range(10)], ["a", "b"])
        train, test = split(ds, 0.8, seed=3)
        assert (len(train), len(test)) == (8, 2)
        assert not set(train.source_ids) & set(test.source_ids)
        ```
    """
    if not 0.0 <= train_fraction <= 1.0:
        raise errors.ConfigurationError(
            f"train_fraction must be in [0, 1], got {train_fraction}"
        )
    n = len(ds)
    n_train = train_size(n, train_fraction)
    rng = np.random.default_rng(seed)
    if stratified and n:
        labels = ds.labels
        alloc = _stratified_counts(np.bincount(labels, minlength=ds.num_classes), n_train)
        chosen: list[int] = []
        for k in range(ds.num_classes):
            members = np.flatnonzero(labels == k)
            chosen.extend(rng.permutation(members)[: alloc[k]].tolist())
        train_idx = np.array(chosen, dtype=np.int64)
    else:
        train_idx = rng.permutation(n)[:n_train]
    mask = np.zeros(n, dtype=bool)
    mask[train_idx] = True
    return ds.subset(np.flatnonzero(mask)), ds.subset(np.flatnonzero(~mask))


class ChannelStats(typing.NamedTuple):
    """Per-channel mean and standard deviation used to standardize inputs."""

    mean: tuple[float, ...]
    std: tuple[float, ...]

    def apply(self, images: np.ndarray) -> np.ndarray:
        mean = np.asarray(self.mean)[None, :, None, None]
        std = np.asarray(self.std)[None, :, None, None]
        return (images - mean) / std


def compute_channel_stats(ds: Dataset) -> ChannelStats:
    """Mean and std of every channel over all pixels of `ds` (the training split)."""
    if not len(ds):
        raise errors.ConfigurationError("Cannot compute channel statistics of an empty dataset")
    images = ds.images()
    mean = images.mean(axis=(0, 2, 3))
    std = images.std(axis=(0, 2, 3))
    if np.any(std <= 0):
        raise errors.DegenerateVarianceError(f"Constant channel in training images: std {std}")
    return ChannelStats(tuple(float(m) for m in mean), tuple(float(s) for s in std))


@dataclass(frozen=True)
class AugmentFlags:
    """Optional per-sample input transforms; all off by default."""

    flip: bool = False
    rotate: bool = False
    shift: bool = False
    flip_probability: float = 0.5
    max_rotation: float = DEFAULT_MAX_ROTATION
    """Degrees; angles are drawn uniformly from ±max_rotation."""

    max_shift: int = DEFAULT_MAX_SHIFT
    """Pixels; shifts are drawn uniformly from ±max_shift per axis."""

    @property
    def enabled(self) -> bool:
        return self.flip or self.rotate or self.shift


def hflip(image: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(image[..., ::-1])


def rotate(image: np.ndarray, angle: float) -> np.ndarray:
    """Rotate [C,H,W] by `angle` degrees about the center, nearest-neighbour, edge padding."""
    if angle == 0:
        return np.array(image, copy=True)
    return ndimage.rotate(image, angle, axes=(2, 1), reshape=False, order=0, mode="nearest")


def shift(image: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Translate [C,H,W] by whole pixels, replicating the edge into vacated space."""
    if dy == 0 and dx == 0:
        return np.array(image, copy=True)
    return ndimage.shift(image, (0, dy, dx), order=0, mode="nearest")


def augment(
    images: np.ndarray, flags: AugmentFlags, rng: np.random.Generator
) -> np.ndarray:
    """Apply the enabled transforms independently to each sample of [N,C,H,W]."""
    if not flags.enabled:
        return images
    out = np.empty_like(images)
    for i, image in enumerate(images):
        if flags.flip and rng.random() < flags.flip_probability:
            image = hflip(image)
        if flags.rotate:
            image = rotate(image, float(rng.uniform(-flags.max_rotation, flags.max_rotation)))
        if flags.shift:
            dy, dx = rng.integers(-flags.max_shift, flags.max_shift + 1, size=2)
            image = shift(image, int(dy), int(dx))
        out[i] = image
    return out


@dataclass
class BatchOptions:
    """How `batches` turns samples into model input."""

    augment: AugmentFlags = field(default_factory=AugmentFlags)
    stats: ChannelStats | None = None
    dtype: typing.Any = np.float64


def batches(
    ds: Dataset,
    batch_size: int,
    shuffle: bool = False,
    seed: int = 0,
    epoch: int = 0,
    options: BatchOptions | None = None,
) -> typing.Iterator[tuple[Tensor, np.ndarray]]:
    """Yield (images [n,3,H,W], labels [n]) batches; the last one may be partial.

    With `shuffle` the order is a permutation drawn from a generator seeded by
    (`seed`, `epoch`), so every epoch has its own reproducible order.

    !!! example "Examples"
        ```python
        import numpy as np
        from dualstream.data import Dataset, LabeledSample, batches

        ds = Dataset([LabeledSample(np.zeros((3, 2, 2)), 0, str(i)) for i in range(5)], ["a"])
        assert [len(y) for _, y in batches(ds, 2)] == [2, 2, 1]
        ```
    """
    if batch_size < 1:
        raise errors.ConfigurationError(f"batch_size must be positive, got {batch_size}")
    options = options or BatchOptions()
    rng = derive_rng(seed, epoch)
    order = rng.permutation(len(ds)) if shuffle else np.arange(len(ds))
    for start in range(0, len(ds), batch_size):
        chosen = [ds.samples[i] for i in order[start : start + batch_size]]
        images = np.stack([s.pixels for s in chosen])
        images = augment(images, options.augment, rng)
        if options.stats is not None:
            images = options.stats.apply(images)
        labels = np.array([s.label for s in chosen], dtype=np.int64)
        yield Tensor(images, dtype=options.dtype), labels

"""Seeded synthetic cell-image corpus.

Each class is drawn as a textured ellipse with a darker nucleus on a noisy
light background. Radius, eccentricity, texture frequency and tint depend on
the class and are jittered per sample, so classes overlap a little but stay
learnable.
"""

import logging
import math
import os

import numpy as np

from dualstream import errors
from dualstream.data.dataset import Dataset, LabeledSample
from dualstream.data.pnm import write_pnm

logger = logging.getLogger(__name__)

DEFAULT_SYNTH_IMAGE_SIZE = 64
DEFAULT_SYNTH_CLASSES = 5
CELL_CLASS_NAMES = (
    "dyskeratotic",
    "koilocytotic",
    "metaplastic",
    "parabasal",
    "superficial_intermediate",
)
RADIAL_BINS = 8


def default_class_names(num_classes: int) -> list[str]:
    """Class names that sort in label order."""
    if num_classes == len(CELL_CLASS_NAMES):
        return list(CELL_CLASS_NAMES)
    width = len(str(num_classes - 1))
    return [f"class_{k:0{width}d}" for k in range(num_classes)]


def _class_style(k: int, num_classes: int) -> dict[str, float | np.ndarray]:
    t = k / max(num_classes - 1, 1)
    hue = 2.0 * math.pi * k / num_classes
    tint = 0.55 + 0.25 * np.cos(hue + np.array([0.0, 2.0, 4.0]) * math.pi / 3.0)
    return {
        "radius": 0.16 + 0.14 * t,
        "aspect": 1.0 + 0.8 * t,
        "frequency": 2.0 + 6.0 * t,
        "nucleus": 0.45 - 0.2 * t,
        "tint": tint,
    }


def _render(style: dict, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.meshgrid(np.arange(size) + 0.5, np.arange(size) + 0.5, indexing="ij")
    cy, cx = size * (0.5 + rng.uniform(-0.08, 0.08, size=2))
    theta = rng.uniform(0.0, math.pi)
    radius = size * style["radius"] * rng.uniform(0.9, 1.1)
    aspect = style["aspect"] * rng.uniform(0.92, 1.08)
    a, b = radius * math.sqrt(aspect), radius / math.sqrt(aspect)
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    rho = np.sqrt((u / a) ** 2 + (v / b) ** 2)

    frequency = style["frequency"] * rng.uniform(0.9, 1.1)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    texture = 0.5 + 0.5 * np.sin(2.0 * math.pi * frequency * u / (2.0 * a) + phase)

    background = 0.85 + rng.normal(0.0, 0.04, size=(3, size, size))
    tint = style["tint"] * rng.uniform(0.95, 1.05, size=3)
    cell = tint[:, None, None] * (0.8 + 0.2 * texture)[None]
    inside = (rho <= 1.0)[None]
    image = np.where(inside, cell, background)
    nucleus = (np.sqrt(dx**2 + dy**2) <= style["nucleus"] * b)[None]
    image = np.where(nucleus, tint[:, None, None] * 0.35, image)
    image = image + rng.normal(0.0, 0.02, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def synth_dataset(
    n_per_class: int,
    num_classes: int = DEFAULT_SYNTH_CLASSES,
    image_size: int = DEFAULT_SYNTH_IMAGE_SIZE,
    seed: int = 0,
) -> Dataset:
    """Generate `n_per_class` images for each of `num_classes` classes.

    Samples are produced class by class from one generator seeded with
    `seed`, so the same arguments always give the same bytes.

    !!! example "Examples"
        ```python
        from dualstream.data import synth_dataset

        ds = synth_dataset(2, num_classes=5, image_size=16, seed=7)
        assert len(ds) == 10 and ds.class_counts().tolist() == [2] * 5
        assert all(0.0 <= s.pixels.min() and s.pixels.max() <= 1.0 for s in ds.samples)
        ```
    """
    if n_per_class < 1:
        raise errors.ConfigurationError(f"n_per_class must be at least 1, got {n_per_class}")
    if num_classes < 2:
        raise errors.ConfigurationError(f"num_classes must be at least 2, got {num_classes}")
    if image_size < 4:
        raise errors.ConfigurationError(f"image_size must be at least 4, got {image_size}")
    rng = np.random.default_rng(seed)
    names = default_class_names(num_classes)
    samples = []
    for k, name in enumerate(names):
        style = _class_style(k, num_classes)
        for i in range(n_per_class):
            samples.append(LabeledSample(_render(style, image_size, rng), k, f"{name}/{i:05d}.ppm"))
    logger.debug(f"Synthesized {len(samples)} images of {image_size}x{image_size}")
    return Dataset(samples, names)


def write_corpus(ds: Dataset, root: str | os.PathLike, maxval: int = 255) -> list[str]:
    """Write `ds` as ``<root>/<class_name>/<name>.ppm`` files; returns the paths written."""
    root = os.fspath(root)
    paths = []
    for name in ds.class_names:
        os.makedirs(os.path.join(root, name), exist_ok=True)
    for sample in ds.samples:
        stem = os.path.splitext(os.path.basename(sample.source_id))[0]
        path = os.path.join(root, ds.class_names[sample.label], f"{stem}.ppm")
        write_pnm(path, sample.pixels, maxval)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} images to {root}")
    return paths


def _features(ds: Dataset) -> np.ndarray:
    images = ds.images()
    n, _, h, w = images.shape
    channel_means = images.mean(axis=(2, 3))
    gray = images.mean(axis=1)
    yy, xx = np.meshgrid(np.arange(h) + 0.5 - h / 2, np.arange(w) + 0.5 - w / 2, indexing="ij")
    radius = np.sqrt(yy**2 + xx**2) / (min(h, w) / 2)
    bins = np.minimum((radius * RADIAL_BINS).astype(np.int64), RADIAL_BINS)
    flat_bins = bins.reshape(-1)
    counts = np.bincount(flat_bins, minlength=RADIAL_BINS + 1)
    profile = np.stack(
        [np.bincount(flat_bins, weights=g.reshape(-1), minlength=RADIAL_BINS + 1) for g in gray]
    ) / np.maximum(counts, 1)
    return np.concatenate([channel_means, profile[:, :RADIAL_BINS]], axis=1).reshape(n, -1)


def centroid_baseline_accuracy(train: Dataset, test: Dataset) -> float:
    """Accuracy of a nearest-centroid classifier on channel means plus a radial profile.

    Features are standardized with the training statistics; each test sample
    takes the class of the closest training-class centroid.
    """
    if not len(train) or not len(test):
        raise errors.ConfigurationError("Baseline needs non-empty train and test sets")
    f_train, f_test = _features(train), _features(test)
    mean, std = f_train.mean(axis=0), f_train.std(axis=0)
    std[std == 0] = 1.0
    f_train, f_test = (f_train - mean) / std, (f_test - mean) / std
    labels = train.labels
    present = [k for k in range(train.num_classes) if np.any(labels == k)]
    centroids = np.stack([f_train[labels == k].mean(axis=0) for k in present])
    dist = ((f_test[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    predicted = np.asarray(present)[np.argmin(dist, axis=1)]
    return float(np.mean(predicted == test.labels))

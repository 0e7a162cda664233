"""
MNIST ingestion, the 13x13 shrink transform and temporal spike encoding.
"""
import gzip
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, NamedTuple, Optional, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from tempoforge.config import get_settings, resolve_data_path
from tempoforge.models.network import SpikeVector
from tempoforge.models.schemas import RunConfig
from tempoforge.utils.binary_io import read_container, write_container
from tempoforge.utils.errors import DatasetError, ModelFileError

logger = logging.getLogger(__name__)

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
NUM_CLASSES = 10
IMAGE_CACHE_KIND = "image-cache"


@dataclass(frozen=True)
class Dataset:
    """Images as (n, rows, cols) floats in [0, 1] plus integer labels."""

    images: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self), -1)

    def subset(self, count: Optional[int]) -> "Dataset":
        if count is None or count >= len(self):
            return self
        return Dataset(self.images[:count], self.labels[:count])

    def encoded(self, tau_in: float) -> List["EncodedSample"]:
        times = encode_batch(self.images, tau_in)
        return [EncodedSample(SpikeVector(row), int(label)) for row, label in zip(times, self.labels)]


class EncodedSample(NamedTuple):
    """One encoded input with its class index."""

    spikes: SpikeVector
    label: int


def _read_bytes(path: Union[str, Path]) -> bytes:
    path = Path(path)
    try:
        if path.suffix == ".gz":
            with gzip.open(path, "rb") as fh:
                return fh.read()
        return path.read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read {path}: {e}")


def _parse_images(buf: bytes, path) -> np.ndarray:
    if len(buf) < 16:
        raise DatasetError(f"{path}: image header is truncated")
    magic, count, rows, cols = struct.unpack_from(">IIII", buf, 0)
    if magic != IMAGES_MAGIC:
        raise DatasetError(f"{path}: bad image magic 0x{magic:08x}")
    expected = count * rows * cols
    payload = len(buf) - 16
    if payload != expected:
        raise DatasetError(
            f"{path}: image payload has {payload} bytes, header declares {expected}"
        )
    pixels = np.frombuffer(buf, dtype=np.uint8, count=expected, offset=16)
    return pixels.reshape(count, rows, cols)


def _parse_labels(buf: bytes, path) -> np.ndarray:
    if len(buf) < 8:
        raise DatasetError(f"{path}: label header is truncated")
    magic, count = struct.unpack_from(">II", buf, 0)
    if magic != LABELS_MAGIC:
        raise DatasetError(f"{path}: bad label magic 0x{magic:08x}")
    if len(buf) - 8 != count:
        raise DatasetError(f"{path}: label payload has {len(buf) - 8} bytes, header declares {count}")
    labels = np.frombuffer(buf, dtype=np.uint8, count=count, offset=8).astype(np.int64)
    if labels.size and labels.max() >= NUM_CLASSES:
        raise DatasetError(f"{path}: label {int(labels.max())} outside 0-{NUM_CLASSES - 1}")
    return labels


def load_idx(images_path: Union[str, Path], labels_path: Union[str, Path]) -> Dataset:
    """
    Read an IDX image/label pair (optionally gzipped).

    Args:
        images_path: IDX3 image file
        labels_path: IDX1 label file

    Returns:
        Dataset with pixels divided by 255

    Raises:
        DatasetError: On bad magic, truncated payloads or count mismatches
    """
    pixels = _parse_images(_read_bytes(images_path), images_path)
    labels = _parse_labels(_read_bytes(labels_path), labels_path)
    if pixels.shape[0] != labels.shape[0]:
        raise DatasetError(
            f"{images_path} holds {pixels.shape[0]} images but {labels_path} holds {labels.shape[0]} labels"
        )
    logger.info(f"Loaded {labels.shape[0]} samples of {pixels.shape[1]}x{pixels.shape[2]} from {images_path}")
    return Dataset(images=pixels.astype(np.float64) / 255.0, labels=labels)


def shrink_images(images: np.ndarray) -> np.ndarray:
    """Average 4x4 windows with stride 2: (n, 28, 28) -> (n, 13, 13)."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[-2:] != (28, 28):
        raise DatasetError(f"shrink expects 28x28 images, got {images.shape[-2:]}")
    windows = sliding_window_view(images, (4, 4), axis=(-2, -1))[..., ::2, ::2, :, :]
    return windows.sum(axis=(-2, -1)) / 16.0


def shrink_13(image: np.ndarray) -> np.ndarray:
    return shrink_images(np.asarray(image)[None, ...])[0]


def encode(pixels: np.ndarray, tau_in: float) -> SpikeVector:
    """Brighter pixels fire earlier: t = tau_in * (1 - x); x = 0 never fires."""
    x = np.asarray(pixels, dtype=np.float64).ravel()
    return SpikeVector(np.where(x > 0, tau_in * (1.0 - x), np.nan))


def encode_batch(images: np.ndarray, tau_in: float) -> np.ndarray:
    """Row-wise encode of an (n, ...) image array into an (n, N0) time matrix."""
    x = np.asarray(images, dtype=np.float64).reshape(images.shape[0], -1)
    return np.where(x > 0, tau_in * (1.0 - x), np.nan)


def jitter(spikes: SpikeVector, sigma_t: float, rng: np.random.Generator, clamp: bool = True) -> SpikeVector:
    """Add independent N(0, sigma_t) noise to every present spike."""
    if sigma_t == 0:
        return spikes
    noisy = spikes.times + rng.normal(0.0, sigma_t, size=len(spikes))
    if clamp:
        noisy = np.maximum(noisy, 0.0)
    return SpikeVector(np.where(spikes.fired, noisy, np.nan))


def save_image_cache(dataset: Dataset, path: Union[str, Path]) -> None:
    write_container(
        path,
        IMAGE_CACHE_KIND,
        {"images": dataset.images, "labels": dataset.labels.astype(np.float64)},
    )


def load_image_cache(path: Union[str, Path]) -> Dataset:
    container = read_container(path, expected_kind=IMAGE_CACHE_KIND)
    labels = container.section("labels")
    images = container.section("images")
    if images.ndim != 3 or labels.shape != (images.shape[0],):
        raise ModelFileError("image/label sections disagree", section="labels")
    return Dataset(images=images, labels=labels.astype(np.int64))


def load_split(config: RunConfig, split: str) -> Dataset:
    """
    Load the train or test split named by a run configuration.

    Shrunk splits are cached next to the IDX files on first use.
    """
    settings = get_settings()
    images_name = getattr(config, f"{split}_images") or getattr(settings, f"{split}_images")
    labels_name = getattr(config, f"{split}_labels") or getattr(settings, f"{split}_labels")
    images_path = resolve_data_path(images_name, config.data_dir)
    labels_path = resolve_data_path(labels_name, config.data_dir)
    subset = config.train_subset if split == "train" else config.test_subset

    if not config.shrink:
        return load_idx(images_path, labels_path).subset(subset)

    cache_path = images_path.with_name(images_path.name + ".shrunk13.tfc")
    if cache_path.exists():
        logger.info(f"Using shrunk image cache {cache_path}")
        return load_image_cache(cache_path).subset(subset)
    full = load_idx(images_path, labels_path)
    shrunk = Dataset(images=shrink_images(full.images), labels=full.labels)
    try:
        save_image_cache(shrunk, cache_path)
    except OSError as e:
        logger.warning(f"Could not write shrunk image cache {cache_path}: {e}")
    return shrunk.subset(subset)


def epoch_order(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n)


def batches(order: np.ndarray, batch_size: int) -> Tuple[np.ndarray, ...]:
    return tuple(order[i : i + batch_size] for i in range(0, order.shape[0], batch_size))

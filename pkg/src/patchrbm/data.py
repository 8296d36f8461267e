"""Dataset loading and batching for grey-scale image collections.

Supported containers:
  * IDX (big-endian header, unsigned-byte payload):
        0000  u32  magic (0x00000803 images, 0x00000801 labels)
        0004  u32  count
        0008  u32  rows   (images only)
        0012  u32  cols   (images only)
        ....  u8   payload
  * array archives: an .npz file or a directory of .npy files with the
    image tensor under "images" (or a single named 3-/4-D array, whose key
    becomes the dataset tag) and optional "labels",
  * CSV: one row per image, n_v pixel columns, optional trailing label.

Pixels are normalised to [0, 1] by dividing raw bytes by 255 and kept as
real intensities.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    """Not an IDX file of a supported kind (bad magic or header)."""


class IdxCorruptionError(ValueError):
    """IDX header and payload disagree (truncated or oversized file)."""


@dataclass
class ImageDataset:
    """Flattened grey-scale images in [0, 1] with optional integer labels."""

    images: np.ndarray           # (N, height*width) float64
    height: int
    width: int
    labels: np.ndarray | None = None
    tag: str = ""

    def __post_init__(self):
        self.images = np.ascontiguousarray(self.images, dtype=np.float64)
        if self.images.ndim != 2 or self.images.shape[1] != self.height * self.width:
            raise ValueError("images must be (N, height*width)")
        if self.images.size and (self.images.min() < 0 or self.images.max() > 1):
            raise ValueError("pixel values must lie in [0, 1]")
        if self.labels is not None:
            self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.images.shape[0],):
                raise ValueError("labels length must match the number of images")
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("labels must be non-negative class indices")

    def __len__(self):
        return self.images.shape[0]

    @property
    def n_pixels(self):
        return self.images.shape[1]

    @property
    def n_classes(self):
        if self.labels is None or self.labels.size == 0:
            return None
        return int(self.labels.max()) + 1

    def with_labels(self, labels):
        return replace(self, labels=np.asarray(labels))

    def subset(self, indices):
        labels = None if self.labels is None else self.labels[indices]
        return replace(self, images=self.images[indices], labels=labels)


@dataclass
class SplitSpec:
    """Counts for a train/val(/test) partition of one source dataset."""

    train_count: int
    val_count: int
    test_count: int = 0
    seed: int = 0
    shuffle: bool = False

    def __post_init__(self):
        if min(self.train_count, self.val_count, self.test_count) < 0:
            raise ValueError("split counts must be non-negative")


def _open_maybe_gzip(path, mode="rb"):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return open(path, mode)


def load_idx(path):
    """Load an IDX file: images -> ImageDataset, labels -> int vector."""
    with _open_maybe_gzip(path) as fh:
        head = fh.read(4)
        if len(head) < 4:
            raise IdxCorruptionError(f"{path}: truncated header")
        (magic,) = struct.unpack(">I", head)
        if magic == IDX_LABELS_MAGIC:
            (count,) = struct.unpack(">I", fh.read(4))
            payload = fh.read(count + 1)
            if len(payload) != count:
                raise IdxCorruptionError(f"{path}: expected {count} label bytes")
            return np.frombuffer(payload, dtype=np.uint8).astype(np.int64)
        if magic == IDX_IMAGES_MAGIC:
            count, rows, cols = struct.unpack(">III", fh.read(12))
            expected = count * rows * cols
            payload = fh.read(expected + 1)
            if len(payload) != expected:
                raise IdxCorruptionError(
                    f"{path}: expected {expected} pixel bytes, got {len(payload)}")
            raw = np.frombuffer(payload, dtype=np.uint8)
            images = raw.reshape(count, rows * cols).astype(np.float64) / 255.0
            return ImageDataset(images, height=rows, width=cols, tag=Path(path).stem)
        raise IdxFormatError(f"{path}: unsupported IDX magic 0x{magic:08x}")


def save_idx(path, data, height=None, width=None):
    """Write labels (1-D int array) or images (ImageDataset / (N,h,w) bytes)
    in IDX format; inverse of load_idx."""
    if isinstance(data, ImageDataset):
        raw = np.rint(data.images * 255.0).astype(np.uint8)
        height, width = data.height, data.width
        data = raw.reshape(len(data), height, width)
    data = np.asarray(data)
    with _open_maybe_gzip(path, "wb") as fh:
        if data.ndim == 1:
            fh.write(struct.pack(">II", IDX_LABELS_MAGIC, data.shape[0]))
            fh.write(data.astype(np.uint8).tobytes())
        elif data.ndim == 3:
            fh.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *data.shape))
            fh.write(data.astype(np.uint8).tobytes())
        else:
            raise ValueError("expected a label vector or an (N, rows, cols) tensor")


def _normalise_pixels(arr, source):
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    arr = arr.astype(np.float64)
    top = arr.max(initial=0.0)
    if top > 1.0:
        if top > 255.0 or arr.min(initial=0.0) < 0.0:
            raise ValueError(f"{source}: pixel values outside [0, 255]")
        return arr / 255.0
    return arr


def load_array_archive(path, tag=None):
    """Load an .npz archive or a directory of .npy files as an ImageDataset."""
    path = Path(path)
    if path.is_dir():
        arrays = {p.stem: np.load(p) for p in sorted(path.glob("*.npy"))}
    else:
        with np.load(path, allow_pickle=False) as npz:
            arrays = {k: npz[k] for k in npz.files}
    labels = arrays.pop("labels", None)

    if "images" in arrays:
        images = arrays["images"]
        inferred = path.stem
    else:
        candidates = [(k, v) for k, v in arrays.items() if v.ndim in (3, 4)]
        if len(candidates) != 1:
            raise ValueError(f"{path}: no unambiguous image array "
                             f"(keys: {sorted(arrays)})")
        inferred, images = candidates[0]
    if images.ndim == 4:
        if images.shape[3] != 1:
            raise ValueError(f"{path}: expected a single channel")
        images = images[..., 0]
    if images.ndim != 3:
        raise ValueError(f"{path}: image array must be (N, height, width)")
    n, height, width = images.shape
    if n < 1:
        raise ValueError(f"{path}: empty image array")
    if labels is not None and labels.shape[0] != n:
        raise ValueError(f"{path}: {labels.shape[0]} labels for {n} images")
    flat = _normalise_pixels(images, path).reshape(n, height * width)
    return ImageDataset(flat, height=height, width=width, labels=labels,
                        tag=tag if tag is not None else inferred)


def load_csv(path, height=None, width=None, with_labels=False):
    """CSV fallback: one row per image, optional trailing label column."""
    table = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    labels = None
    if with_labels:
        labels = table[:, -1].astype(np.int64)
        table = table[:, :-1]
    n_v = table.shape[1]
    if height is None or width is None:
        side = int(round(np.sqrt(n_v)))
        if side * side != n_v:
            raise ValueError(f"{path}: {n_v} pixels is not square; pass height/width")
        height = width = side
    return ImageDataset(_normalise_pixels(table, path), height=height, width=width,
                        labels=labels, tag=Path(path).stem)


def split(dataset: ImageDataset, spec: SplitSpec):
    """Partition a dataset into (train, val, test) by instance counts.

    Without shuffling the partition is contiguous in the canonical order
    (validation follows training, e.g. the last 10000 of a standard train
    file); with shuffle=True the order is first permuted under the seed.
    """
    n = len(dataset)
    total = spec.train_count + spec.val_count + spec.test_count
    if total > n:
        raise ValueError(f"split needs {total} instances but dataset has {n}")
    order = np.arange(n)
    if spec.shuffle:
        order = np.random.default_rng(spec.seed).permutation(n)
    i1 = spec.train_count
    i2 = i1 + spec.val_count
    i3 = i2 + spec.test_count
    return (dataset.subset(order[:i1]), dataset.subset(order[i1:i2]),
            dataset.subset(order[i2:i3]))


class BatchSampler:
    """Uniform with-replacement mini-batch stream over one dataset.

    Owns its RNG: with a fixed seed the batch sequence is deterministic.
    """

    def __init__(self, dataset: ImageDataset, batch_size: int, seed=0):
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(dataset) == 0:
            raise ValueError("cannot sample from an empty dataset")
        self.dataset = dataset
        self.batch_size = batch_size
        self.rng = np.random.default_rng(seed)

    def next_batch(self):
        idx = self.rng.integers(0, len(self.dataset), size=self.batch_size)
        labels = None if self.dataset.labels is None else self.dataset.labels[idx]
        return self.dataset.images[idx], labels

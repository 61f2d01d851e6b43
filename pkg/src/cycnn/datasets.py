"""Dataset loading (MNIST IDX, CIFAR-10 binary), a synthetic glyph dataset,
augmentation and normalisation."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np

from .polar import bilinear_sample, rotate_batch, translate_image

AUGMENT_MODES = ("none", "rotate", "translate", "rotate_translate")
_AUGMENT_ALIASES = {"r": "rotate", "t": "translate", "rt": "rotate_translate"}

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3 * 32 * 32

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class DatasetFormatError(ValueError):
    pass


@dataclass
class LabeledDataset:
    images: np.ndarray        # (N, C, H, W) float32 in [0, 1]
    labels: np.ndarray        # (N,) int64
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ValueError(f"images must be (N, C, H, W), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ValueError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError("labels out of range for class_count")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.images[idx], self.labels[idx], self.class_count)


# -- IDX ----------------------------------------------------------------------

def parse_idx(buf: bytes) -> np.ndarray:
    """Parse an IDX buffer of unsigned bytes into an array."""
    if len(buf) < 4:
        raise DatasetFormatError(f"IDX header truncated at byte {len(buf)}")
    zero, dtype_code, ndim = struct.unpack(">HBB", buf[:4])
    if zero != 0 or dtype_code != 0x08:
        raise DatasetFormatError(f"bad IDX magic 0x{int.from_bytes(buf[:4], 'big'):08x} at byte 0")
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise DatasetFormatError(f"IDX dimension header truncated at byte {len(buf)} (need {need})")
    dims = struct.unpack(f">{ndim}I", buf[4:need])
    size = int(np.prod(dims)) if dims else 1
    if len(buf) - need < size:
        raise DatasetFormatError(f"IDX data truncated at byte {len(buf)} "
                                 f"(need {need + size})")
    return np.frombuffer(buf, dtype=np.uint8, count=size, offset=need).reshape(dims)


def encode_idx(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype=np.uint8)
    head = struct.pack(">HBB", 0, 0x08, arr.ndim) + struct.pack(f">{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def resize_bilinear(images: np.ndarray, size: int) -> np.ndarray:
    """Resize the last two axes to ``size x size`` (pixel-centre aligned,
    edge-clamped)."""
    h, w = images.shape[-2:]
    if (h, w) == (size, size):
        return images.astype(np.float32)
    ys = np.clip((np.arange(size) + 0.5) * h / size - 0.5, 0, h - 1)
    xs = np.clip((np.arange(size) + 0.5) * w / size - 0.5, 0, w - 1)
    return bilinear_sample(images, xs[np.newaxis, :], ys[:, np.newaxis]).astype(np.float32)


def load_mnist(images_path, labels_path, size: int = 32) -> LabeledDataset:
    """Load an MNIST image/label file pair, scale to [0, 1] and resize."""
    img_buf = _read(images_path)
    lab_buf = _read(labels_path)
    for buf, magic, what in ((img_buf, IDX_IMAGES_MAGIC, "images"), (lab_buf, IDX_LABELS_MAGIC, "labels")):
        got = int.from_bytes(buf[:4], "big") if len(buf) >= 4 else None
        if got != magic:
            raise DatasetFormatError(
                f"{what}: expected magic 0x{magic:08x} at byte 0, got "
                + ("truncated header" if got is None else f"0x{got:08x}"))
    images = parse_idx(img_buf)
    labels = parse_idx(lab_buf).astype(np.int64)
    if len(images) != len(labels):
        raise DatasetFormatError(f"{len(images)} images but {len(labels)} labels")
    x = images[:, np.newaxis].astype(np.float32) / 255.0
    return LabeledDataset(resize_bilinear(x, size), labels, 10)


def load_mnist_dir(directory, split: str = "train", size: int = 32) -> LabeledDataset:
    img, lab = MNIST_FILES[split]
    return load_mnist(os.path.join(directory, img), os.path.join(directory, lab), size)


def write_mnist(directory, split: str, images_u8: np.ndarray, labels) -> None:
    os.makedirs(directory, exist_ok=True)
    img, lab = MNIST_FILES[split]
    with open(os.path.join(directory, img), "wb") as fh:
        fh.write(encode_idx(images_u8))
    with open(os.path.join(directory, lab), "wb") as fh:
        fh.write(encode_idx(np.asarray(labels, dtype=np.uint8)))


def mlxtend_mnist_subset(directory, n_test: int = 1000, seed: int = 0) -> None:
    """Write the 5000-image MNIST sample shipped with ``mlxtend`` as IDX files.

    The sample is shuffled with ``seed``; the last ``n_test`` images become
    the test split.
    """
    try:
        from mlxtend.data import mnist_data
    except ImportError as exc:  # pragma: no cover
        raise ImportError("mlxtend is needed for the bundled MNIST sample "
                          "(pip install mlxtend)") from exc
    x, y = mnist_data()
    order = np.random.default_rng(seed).permutation(len(y))
    x = x[order].reshape(-1, 28, 28).astype(np.uint8)
    y = y[order]
    write_mnist(directory, "train", x[:-n_test], y[:-n_test])
    write_mnist(directory, "test", x[-n_test:], y[-n_test:])


# -- CIFAR-10 -----------------------------------------------------------------

def parse_cifar10(buf: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(buf) % CIFAR_RECORD:
        raise DatasetFormatError(f"CIFAR-10 batch size {len(buf)} is not a multiple of "
                                 f"{CIFAR_RECORD}")
    rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    return rec[:, 1:].reshape(-1, 3, 32, 32), rec[:, 0].astype(np.int64)


def encode_cifar10(images_u8: np.ndarray, labels) -> bytes:
    images_u8 = np.asarray(images_u8, dtype=np.uint8).reshape(-1, 3 * 32 * 32)
    labels = np.asarray(labels, dtype=np.uint8).reshape(-1, 1)
    return np.concatenate([labels, images_u8], axis=1).tobytes()


def load_cifar10(batch_paths) -> LabeledDataset:
    if isinstance(batch_paths, (str, os.PathLike)):
        batch_paths = [batch_paths]
    parts = [parse_cifar10(_read(p)) for p in batch_paths]
    images = np.concatenate([p[0] for p in parts]).astype(np.float32) / 255.0
    labels = np.concatenate([p[1] for p in parts])
    if labels.size and labels.max() > 9:
        raise DatasetFormatError(f"label byte {labels.max()} out of range")
    return LabeledDataset(images, labels, 10)


def load_cifar10_dir(directory, split: str = "train") -> LabeledDataset:
    names = ([f"data_batch_{i}.bin" for i in range(1, 6)] if split == "train"
             else ["test_batch.bin"])
    return load_cifar10([os.path.join(directory, n) for n in names])


# -- synthetic glyphs ---------------------------------------------------------

def _segment_field(xx, yy, x0, y0, x1, y1, width):
    """Soft mask of a line segment of half-width ``width``."""
    dx, dy = x1 - x0, y1 - y0
    t = np.clip(((xx - x0) * dx + (yy - y0) * dy) / (dx * dx + dy * dy), 0, 1)
    d = np.hypot(xx - (x0 + t * dx), yy - (y0 + t * dy))
    return np.clip(width + 0.5 - d, 0, 1)


def synth_dataset(n: int, classes: int, seed: int = 0, size: int = 32) -> LabeledDataset:
    """Balanced dataset of centred line glyphs.

    Class ``k`` draws ``1 + k % 4`` spokes from the centre, evenly spread in
    angle, with length set by ``k // 4``; a ring is added for odd ``k // 4``.
    Spoke count and length survive rotation, so classes stay separable
    under it. Each image gets a small random orientation and width jitter.
    """
    if n < 1 or classes < 1:
        raise ValueError("n and classes must be >= 1")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % classes
    rng.shuffle(labels)
    c = (size - 1) / 2
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    images = np.zeros((n, 1, size, size), dtype=np.float32)
    for i, k in enumerate(labels):
        spokes = 1 + k % 4
        tier = k // 4
        length = size * (0.22 + 0.08 * (tier % 3))
        base = rng.uniform(-0.2, 0.2)
        width = rng.uniform(0.8, 1.3)
        img = np.zeros((size, size))
        for s in range(spokes):
            a = base + 2 * np.pi * s / spokes + (np.pi / 2 if spokes == 2 else 0)
            img = np.maximum(img, _segment_field(
                xx, yy, c, c, c + length * np.cos(a), c - length * np.sin(a), width))
        if tier % 2:
            ring = np.clip(width + 0.5 - np.abs(np.hypot(xx - c, yy - c) - length - 3), 0, 1)
            img = np.maximum(img, ring)
        images[i, 0] = img
    return LabeledDataset(images, labels, classes)


# -- augmentation -------------------------------------------------------------

@dataclass(frozen=True)
class AugmentSpec:
    mode: str = "none"
    seed: int = 0

    def __post_init__(self):
        mode = _AUGMENT_ALIASES.get(self.mode, self.mode)
        if mode not in AUGMENT_MODES:
            raise ValueError(f"augment mode must be one of {AUGMENT_MODES}, got {self.mode!r}")
        object.__setattr__(self, "mode", mode)


def draw_translations(rng: np.random.Generator, n: int, height: int, width: int) -> np.ndarray:
    """Integer (dx, dy) shifts bounded by a quarter of width and height."""
    dx = rng.integers(-(width // 4), width // 4 + 1, size=n)
    dy = rng.integers(-(height // 4), height // 4 + 1, size=n)
    return np.stack([dx, dy], axis=1)


def augment(ds: LabeledDataset, spec: AugmentSpec) -> LabeledDataset:
    """Randomly rotate and/or translate each image; labels are unchanged.

    Rotation angles are uniform in [0, 2*pi). ``rotate_translate`` rotates
    first, then translates.
    """
    if spec.mode == "none":
        return LabeledDataset(ds.images.copy(), ds.labels.copy(), ds.class_count)
    rng = np.random.default_rng(spec.seed)
    n = len(ds)
    h, w = ds.images.shape[-2:]
    angles = rng.uniform(0, 2 * np.pi, size=n)
    shifts = draw_translations(rng, n, h, w)
    images = ds.images
    if spec.mode in ("rotate", "rotate_translate"):
        images = rotate_batch(images, angles).astype(np.float32)
    if spec.mode in ("translate", "rotate_translate"):
        images = np.stack([translate_image(img, dx, dy) for img, (dx, dy) in zip(images, shifts)])
    return LabeledDataset(images, ds.labels.copy(), ds.class_count)


def rotated_test_set(ds: LabeledDataset, seed: int = 0) -> LabeledDataset:
    """The "-r" version of a test set: every image rotated by a random angle."""
    return augment(ds, AugmentSpec("rotate", seed))


# -- normalisation and label utilities -----------------------------------------

def channel_stats(images: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(images, dtype=np.float64)
    mean = x.mean(axis=(0, 2, 3))
    std = x.std(axis=(0, 2, 3))
    std = np.where(std > 0, std, 1.0)
    return mean, std


def standardize(images: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    return ((x - mean[:, None, None]) / std[:, None, None]).astype(np.float32)


def split_train_val(ds: LabeledDataset, val_fraction: float = 0.1, seed: int = 0):
    """Shuffle with ``seed`` and hold out the last ``val_fraction``."""
    order = np.random.default_rng(seed).permutation(len(ds))
    n_val = int(round(len(ds) * val_fraction))
    cut = len(ds) - n_val
    return ds.subset(order[:cut]), ds.subset(order[cut:])


def remap_labels(ds: LabeledDataset, mapping: dict) -> LabeledDataset:
    """Relabel classes (e.g. ``{9: 6}`` to merge two digits) and compact the
    label range."""
    merged = np.array([mapping.get(int(v), int(v)) for v in ds.labels])
    kept = np.unique(merged)
    lut = {int(old): new for new, old in enumerate(kept)}
    return LabeledDataset(ds.images, np.array([lut[int(v)] for v in merged]), len(kept))


def limit(ds: LabeledDataset, n: int | None, seed: int = 0) -> LabeledDataset:
    if n is None or n >= len(ds):
        return ds
    idx = np.sort(np.random.default_rng(seed).permutation(len(ds))[:n])
    return ds.subset(idx)

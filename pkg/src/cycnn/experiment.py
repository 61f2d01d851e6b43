"""Model variants and dataset selection shared by the CLI, tests and demos.

A variant name combines the input representation with the padding mode:
``base`` (Cartesian input, zero padding), ``p`` / ``lp`` (polar or log-polar
input, zero padding) and ``cy-p`` / ``cy-lp`` (polar or log-polar input,
cylindrical padding).
"""

from __future__ import annotations

import os

from .datasets import (LabeledDataset, load_cifar10_dir, load_mnist_dir, rotated_test_set,
                       synth_dataset)
from .model import Model, minivgg

VARIANTS = {
    "base": (None, "zero"),
    "p": ("polar", "zero"),
    "lp": ("logpolar", "zero"),
    "cy-p": ("polar", "cylindrical"),
    "cy-lp": ("logpolar", "cylindrical"),
}
DATASETS = ("mnist", "cifar10", "synth")
SYNTH_CLASSES = 8


class VariantError(ValueError):
    pass


def parse_variant(name: str) -> tuple[str | None, str]:
    """Return ``(polar_mode, pad_mode)`` for a variant name."""
    key = name.lower()
    if key in ("cy", "cy-base", "cybase"):
        raise VariantError("cylindrical padding is only meaningful on polar input; "
                           "use cy-p or cy-lp")
    if key not in VARIANTS:
        raise VariantError(f"unknown variant {name!r}; choose from {', '.join(VARIANTS)}")
    return VARIANTS[key]


def build_model(variant: str, in_channels: int, num_classes: int, size: int = 32, *,
                algorithm: str = "winograd", seed: int = 0) -> Model:
    polar, pad_mode = parse_variant(variant)
    model = minivgg(in_channels, num_classes, size, pad_mode=pad_mode,
                    algorithm=algorithm, seed=seed, polar=polar)
    model.meta["variant"] = variant.lower()
    return model


def load_dataset(name: str, split: str, root=None, *, synth_size: int = 2000,
                 seed: int = 0) -> LabeledDataset:
    """Load ``split`` ("train" or "test") of a named dataset.

    ``root`` is the directory holding the MNIST IDX or CIFAR-10 binary files.
    The synthetic set needs no files; its test split uses a different seed.
    """
    if name == "synth":
        n = synth_size if split == "train" else max(synth_size // 4, SYNTH_CLASSES)
        return synth_dataset(n, SYNTH_CLASSES, seed=seed if split == "train" else seed + 7919)
    if root is None:
        raise FileNotFoundError(f"dataset {name!r} needs a data directory")
    if not os.path.isdir(root):
        raise FileNotFoundError(f"data directory {root} does not exist")
    if name == "mnist":
        return load_mnist_dir(root, split)
    if name == "cifar10":
        return load_cifar10_dir(root, split)
    raise ValueError(f"unknown dataset {name!r}; choose from {', '.join(DATASETS)}")


def test_split(ds: LabeledDataset, rotate: bool, seed: int = 0) -> LabeledDataset:
    return rotated_test_set(ds, seed) if rotate else ds

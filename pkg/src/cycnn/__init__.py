"""Rotation-robust CNNs from polar inputs and cylindrically padded convolutions.

The building blocks are plain numpy: polar and log-polar resampling, a
direct convolution with zero or cylindrical padding, a Winograd F(2x2, 3x3)
path with the same two padding modes, and a small training stack.
"""

from .conv import ConvSpec, FilterBank, conv2d_backward, conv2d_direct, pad_input
from .datasets import (AugmentSpec, LabeledDataset, augment, load_cifar10, load_mnist,
                       rotated_test_set, synth_dataset)
from .model import (Model, convert_to_cycnn, count_params, load_model, minivgg, save_model,
                    tiny_model)
from .polar import PolarConfig, rotate_image, to_polar
from .receptive_field import RfLayerSpec, boundary_coverage, rf_propagate
from .tensor import ShapeError, cyclic_shift_rows
from .training import TrainConfig, evaluate, train
from .winograd import conv2d_winograd

__version__ = "0.1.0"

__all__ = [
    "AugmentSpec", "ConvSpec", "FilterBank", "LabeledDataset", "Model", "PolarConfig",
    "RfLayerSpec", "ShapeError", "TrainConfig", "augment", "boundary_coverage",
    "conv2d_backward", "conv2d_direct", "conv2d_winograd", "convert_to_cycnn", "count_params",
    "cyclic_shift_rows", "evaluate", "load_cifar10", "load_mnist", "load_model", "minivgg",
    "pad_input", "rf_propagate", "rotate_image", "rotated_test_set", "save_model",
    "synth_dataset", "tiny_model", "to_polar", "train",
]

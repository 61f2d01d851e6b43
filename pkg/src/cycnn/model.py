"""Models: layer stacks, reference architectures, CNN -> CyCNN conversion,
loss, and the binary checkpoint format."""

from __future__ import annotations

import io
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .conv import ConvSpec
from .layers import ChannelNorm, Conv, Flatten, Layer, Linear, MaxPool, ReLU
from .polar import PolarConfig, to_polar
from .tensor import ShapeError


class ConversionError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class Model:
    layers: list
    input_shape: tuple            # (C, H, W) after any polar conversion
    num_classes: int
    name: str = "model"
    polar: str | None = None      # None, "polar" or "logpolar"
    norm_mean: np.ndarray | None = None
    norm_std: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = layer.output_shape(shape)
            except ShapeError as exc:
                raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
            if isinstance(layer, Conv) and layer.spec.algorithm == "winograd":
                h, w = shape[1:]
                if h % 2 or w % 2:
                    raise ShapeError(f"layer {i} ({layer!r}): winograd needs even dims")
        if shape != (self.num_classes,):
            raise ShapeError(f"model output {shape} != ({self.num_classes},)")

    @property
    def dtype(self):
        for layer in self.layers:
            for p in layer.params.values():
                return p.dtype
        return np.dtype(np.float32)

    def parameters(self):
        """``(layer_index, name, array)`` for every learnable array."""
        for i, layer in enumerate(self.layers):
            for name in sorted(layer.params):
                yield i, name, layer.params[name]

    def astype(self, dtype) -> "Model":
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def prepare(self, images: np.ndarray) -> np.ndarray:
        """Map raw [0, 1] images to network input: optional polar resampling
        followed by per-channel standardisation."""
        x = np.asarray(images, dtype=np.float32)
        if self.polar is not None:
            c, h, w = self.input_shape
            x = to_polar(x, PolarConfig.for_image(h, w, self.polar)).astype(np.float32)
        if self.norm_mean is not None:
            x = (x - self.norm_mean[:, None, None]) / self.norm_std[:, None, None]
        return np.ascontiguousarray(x, dtype=self.dtype)

    def __repr__(self):
        body = "\n".join(f"  {layer!r}" for layer in self.layers)
        return f"Model({self.name!r}, input={self.input_shape}, polar={self.polar},\n{body}\n)"


def forward(model: Model, batch: np.ndarray, train: bool = False):
    """Return ``(logits, cache)``; ``cache`` feeds :func:`backward`."""
    x = np.asarray(batch)
    if x.shape[1:] != model.input_shape:
        raise ShapeError(f"batch shape {x.shape[1:]} != model input {model.input_shape}")
    cache = []
    for i, layer in enumerate(model.layers):
        try:
            x, c = layer.forward(x, train)
        except ShapeError as exc:
            raise ShapeError(f"layer {i} ({layer!r}): {exc}") from None
        cache.append(c)
    return x, cache


def backward(model: Model, cache: list, grad_logits: np.ndarray) -> list:
    """Per-layer gradient dicts, aligned with ``model.layers``."""
    grads = [None] * len(model.layers)
    g = grad_logits
    first_param = next((i for i, layer in enumerate(model.layers) if layer.params), 0)
    for i in range(len(model.layers) - 1, -1, -1):
        g, grads[i] = model.layers[i].backward(cache[i], g, need_input_grad=i > first_param)
        if g is None:
            break
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    loss = float(-logp[rows, labels].mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1
    return loss, grad / n


def count_params(model: Model) -> int:
    return int(sum(p.size for _, _, p in model.parameters()))


def convert_to_cycnn(model: Model) -> Model:
    """Copy of ``model`` with every convolution switched to cylindrical padding.

    Weights are shared with the source (no copy). Every convolution must
    preserve spatial size, otherwise the layers that follow would no longer
    fit.
    """
    new_layers = []
    for i, layer in enumerate(model.layers):
        if isinstance(layer, Conv):
            if not layer.spec.preserves_size:
                raise ConversionError(
                    f"layer {i} ({layer!r}) does not preserve spatial size; "
                    "only odd kernels with pad = (k - 1) / 2 and stride 1 convert")
            conv = Conv(layer.spec.replace(pad_mode="cylindrical"),
                        layer.params["weight"], layer.params["bias"])
            new_layers.append(conv)
        else:
            new_layers.append(layer)
    name = model.name if model.name.startswith("cy") else "cy" + model.name
    return Model(new_layers, model.input_shape, model.num_classes, name, model.polar,
                 model.norm_mean, model.norm_std, dict(model.meta))


# -- construction -----------------------------------------------------------

def init_params(model: Model, seed: int = 0) -> Model:
    """Uniform fan-in scaled init with zero biases.

    Convolutions draw from ``U(+-sqrt(6 / fan_in))``; linear layers from
    ``U(+-sqrt(1 / fan_in))``, which keeps the un-normalised classifier
    stable at learning rate 0.05.
    """
    rng = np.random.default_rng(seed)
    for layer in model.layers:
        if "weight" in layer.params:
            w = layer.params["weight"]
            fan_in = int(np.prod(w.shape[1:]))
            gain = 6.0 if isinstance(layer, Conv) else 1.0
            bound = np.sqrt(gain / fan_in)
            layer.params["weight"] = rng.uniform(-bound, bound, size=w.shape).astype(w.dtype)
            layer.params["bias"] = np.zeros_like(layer.params["bias"])
    return model


def _conv_block(cin, cout, pad_mode, algorithm, norm):
    layers = [Conv(ConvSpec(cin, cout, pad_mode=pad_mode, algorithm=algorithm))]
    if norm:
        layers.append(ChannelNorm(cout))
    layers.append(ReLU())
    return layers


def minivgg(in_channels: int = 1, num_classes: int = 10, size: int = 32, *,
            pad_mode: str = "zero", algorithm: str = "direct", norm: bool = True,
            widths=(32, 64, 128, 128, 128), hidden: int = 256, seed: int = 0,
            polar: str | None = None) -> Model:
    """Pairs of 3x3 convolutions, each pair followed by a 2x2 max pool, then
    two linear layers.

    With the default five stages a 32x32 input shrinks to 1x1 before the
    classifier, as in VGG19 on 32x32 images, so every feature reaching the
    linear layers has seen the whole angular axis of a polar input.
    ``widths=(32, 64, 128)`` gives the shorter three-stage network whose
    classifier sees a 4x4 map. ``norm`` inserts a :class:`ChannelNorm`
    after every convolution.
    """
    if size % 2 ** len(widths):
        raise ValueError(f"minivgg input size must be a multiple of {2 ** len(widths)}")
    layers = []
    cin = in_channels
    for width in widths:
        layers += _conv_block(cin, width, pad_mode, algorithm, norm)
        layers += _conv_block(width, width, pad_mode, algorithm, norm)
        layers.append(MaxPool())
        cin = width
    side = size // 2 ** len(widths)
    layers += [Flatten(), Linear(cin * side * side, hidden), ReLU(), Linear(hidden, num_classes)]
    name = ("cy" if pad_mode == "cylindrical" else "") + "minivgg"
    model = Model(layers, (in_channels, size, size), num_classes, name, polar)
    return init_params(model, seed)


def tiny_model(in_channels: int = 1, num_classes: int = 3, size: int = 8, *,
               pad_mode: str = "zero", channels: int = 3, seed: int = 0,
               norm: bool = False) -> Model:
    """Two convolutions and one linear layer, for gradient checks."""
    layers = _conv_block(in_channels, channels, pad_mode, "direct", norm)
    layers += [MaxPool()]
    layers += _conv_block(channels, channels, pad_mode, "direct", norm)
    layers += [Flatten(), Linear(channels * (size // 2) ** 2, num_classes)]
    model = Model(layers, (in_channels, size, size), num_classes, "tiny")
    return init_params(model, seed)


# -- checkpoint format --------------------------------------------------------
#
#   b"CYC1"
#   u8 dtype code (4 = float32, 8 = float64)
#   u32 length + UTF-8 JSON header (sorted keys)
#   u32 layer count, then per layer:
#       u8 kind tag, u32 int count, int32 spec values,
#       u32 buffer count, per buffer: u64 element count + raw little-endian data
#
# All integers are little-endian.

MAGIC = b"CYC1"
_KIND_TAGS = {"conv": 1, "relu": 2, "maxpool": 3, "flatten": 4, "linear": 5, "channelnorm": 6}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}
_PAD_CODES = {"zero": 0, "cylindrical": 1}
_ALGO_CODES = {"direct": 0, "winograd": 1}


def _layer_record(layer: Layer):
    if isinstance(layer, Conv):
        s = layer.spec
        ints = [s.in_channels, s.out_channels, s.kernel_h, s.kernel_w, s.stride_h,
                s.stride_w, s.pad, _PAD_CODES[s.pad_mode], _ALGO_CODES[s.algorithm]]
        return ints, [layer.params["weight"], layer.params["bias"]]
    if isinstance(layer, Linear):
        return [layer.in_features, layer.out_features], [layer.params["weight"], layer.params["bias"]]
    if isinstance(layer, ChannelNorm):
        extra = np.array([layer.eps, layer.momentum], dtype=np.float64)
        return [layer.channels], [layer.running_mean, layer.running_var, extra]
    return [], []


def _build_layer(kind: str, ints: list, bufs: list) -> Layer:
    if kind == "conv":
        inv_pad = {v: k for k, v in _PAD_CODES.items()}
        inv_algo = {v: k for k, v in _ALGO_CODES.items()}
        spec = ConvSpec(*ints[:7], pad_mode=inv_pad[ints[7]], algorithm=inv_algo[ints[8]])
        w = bufs[0].reshape(spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
        return Conv(spec, w, bufs[1])
    if kind == "linear":
        fin, fout = ints
        return Linear(fin, fout, bufs[0].reshape(fout, fin), bufs[1])
    if kind == "channelnorm":
        eps, momentum = (float(v) for v in bufs[2])
        return ChannelNorm(ints[0], eps, momentum, bufs[0], bufs[1])
    return {"relu": ReLU, "maxpool": MaxPool, "flatten": Flatten}[kind]()


def model_to_bytes(model: Model) -> bytes:
    dtype = np.dtype(model.dtype)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<B", dtype.itemsize))
    header = {
        "name": model.name,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "polar": model.polar,
        "norm_mean": None if model.norm_mean is None else [float(v) for v in model.norm_mean],
        "norm_std": None if model.norm_std is None else [float(v) for v in model.norm_std],
        "meta": model.meta,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    out.write(struct.pack("<I", len(blob)))
    out.write(blob)
    out.write(struct.pack("<I", len(model.layers)))
    for layer in model.layers:
        ints, bufs = _layer_record(layer)
        out.write(struct.pack("<BI", _KIND_TAGS[layer.kind], len(ints)))
        out.write(struct.pack(f"<{len(ints)}i", *ints))
        out.write(struct.pack("<I", len(bufs)))
        for buf in bufs:
            bdtype = np.float64 if buf.dtype == np.float64 else dtype
            arr = np.ascontiguousarray(buf, dtype=np.dtype(bdtype).newbyteorder("<"))
            out.write(struct.pack("<BQ", arr.itemsize, arr.size))
            out.write(arr.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (wanted {n} bytes)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def model_from_bytes(data: bytes) -> Model:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise CheckpointError("not a model checkpoint (bad magic)")
    (itemsize,) = r.unpack("<B")
    if itemsize not in (4, 8):
        raise CheckpointError(f"unknown dtype code {itemsize}")
    (hlen,) = r.unpack("<I")
    header = json.loads(r.take(hlen).decode())
    (nlayers,) = r.unpack("<I")
    layers = []
    for _ in range(nlayers):
        tag, nints = r.unpack("<BI")
        if tag not in _TAG_KINDS:
            raise CheckpointError(f"unknown layer tag {tag} at byte {r.pos - 5}")
        ints = list(r.unpack(f"<{nints}i"))
        (nbufs,) = r.unpack("<I")
        bufs = []
        for _ in range(nbufs):
            size, count = r.unpack("<BQ")
            dt = np.dtype("<f8" if size == 8 else "<f4")
            bufs.append(np.frombuffer(r.take(size * count), dtype=dt).astype(dt.newbyteorder("=")))
        layers.append(_build_layer(_TAG_KINDS[tag], ints, bufs))
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes after last layer")
    norm = [None if header[k] is None else np.asarray(header[k], dtype=np.float32)
            for k in ("norm_mean", "norm_std")]
    return Model(layers, tuple(header["input_shape"]), header["num_classes"], header["name"],
                 header["polar"], norm[0], norm[1], header.get("meta", {}))


def save_model(model: Model, path: str | os.PathLike) -> None:
    with open(path, "wb") as fh:
        fh.write(model_to_bytes(model))


def load_model(path: str | os.PathLike) -> Model:
    with open(path, "rb") as fh:
        return model_from_bytes(fh.read())

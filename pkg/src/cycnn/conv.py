"""Direct 2-D convolution with zero or cylindrical padding, and its gradients.

Cylindrical padding (CSW, cylindrically sliding windows) wraps the height axis:
the rows above the image are copied from its last rows and the rows below from
its first rows, while the left and right borders stay zero. Combined with a
polar input whose rows are angles, the filter then sweeps a closed cylinder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ShapeError

PAD_MODES = ("zero", "cylindrical")
ALGORITHMS = ("direct", "winograd")


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel_h: int = 3
    kernel_w: int = 3
    stride_h: int = 1
    stride_w: int = 1
    pad: int = 1
    pad_mode: str = "zero"
    algorithm: str = "direct"

    def __post_init__(self):
        if min(self.kernel_h, self.kernel_w, self.stride_h, self.stride_w) < 1:
            raise ValueError("kernel and stride must be >= 1")
        if min(self.in_channels, self.out_channels) < 1:
            raise ValueError("channel counts must be >= 1")
        if self.pad < 0:
            raise ValueError("pad must be >= 0")
        if self.pad_mode not in PAD_MODES:
            raise ValueError(f"pad_mode must be one of {PAD_MODES}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.pad_mode == "cylindrical" and (
            self.kernel_h % 2 == 0 or self.pad != (self.kernel_h - 1) // 2
        ):
            raise ValueError(
                "cylindrical padding needs an odd kernel height and "
                "pad == (kernel_h - 1) // 2")
        if self.algorithm == "winograd" and not self.winograd_compatible:
            raise ValueError("winograd requires a 3x3 kernel, stride 1 and pad 1")

    @property
    def winograd_compatible(self) -> bool:
        return (self.kernel_h, self.kernel_w, self.stride_h, self.stride_w, self.pad) == (3, 3, 1, 1, 1)

    @property
    def preserves_size(self) -> bool:
        return (self.stride_h == self.stride_w == 1
                and self.kernel_h == self.kernel_w == 2 * self.pad + 1)

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        ho = (h + 2 * self.pad - self.kernel_h) // self.stride_h + 1
        wo = (w + 2 * self.pad - self.kernel_w) // self.stride_w + 1
        return ho, wo

    def replace(self, **changes) -> "ConvSpec":
        from dataclasses import replace
        return replace(self, **changes)


@dataclass
class FilterBank:
    weights: np.ndarray  # (out_channels, in_channels, kh, kw)
    bias: np.ndarray = field(default=None)

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 4:
            raise ShapeError(f"filter weights must be rank 4, got {self.weights.shape}")
        if self.bias is None:
            self.bias = np.zeros(self.weights.shape[0], dtype=self.weights.dtype)
        self.bias = np.asarray(self.bias)
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(f"bias shape {self.bias.shape} does not match "
                             f"{self.weights.shape[0]} output channels")


def pad_input(x: np.ndarray, pad: int, mode: str = "zero") -> np.ndarray:
    """Pad the two spatial axes of ``x`` by ``pad`` pixels."""
    x = np.asarray(x)
    if pad == 0:
        return x.copy()
    h = x.shape[-2]
    out = np.zeros(x.shape[:-2] + (h + 2 * pad, x.shape[-1] + 2 * pad), dtype=x.dtype)
    out[..., pad:pad + h, pad:-pad] = x
    if mode == "cylindrical":
        if pad > h:
            raise ValueError(f"cylindrical pad {pad} exceeds height {h}")
        out[..., :pad, pad:-pad] = x[..., h - pad:, :]
        out[..., pad + h:, pad:-pad] = x[..., :pad, :]
    elif mode != "zero":
        raise ValueError(f"unknown pad mode {mode!r}")
    return out


def unpad_adjoint(gp: np.ndarray, pad: int, mode: str = "zero") -> np.ndarray:
    """Adjoint of :func:`pad_input`: fold a padded-shape gradient back."""
    if pad == 0:
        return gp.copy()
    h = gp.shape[-2] - 2 * pad
    g = gp[..., pad:pad + h, pad:-pad].copy()
    if mode == "cylindrical":
        g[..., h - pad:, :] += gp[..., :pad, pad:-pad]
        g[..., :pad, :] += gp[..., pad + h:, pad:-pad]
    return g


def _check(x: np.ndarray, f: FilterBank, spec: ConvSpec) -> None:
    if x.ndim != 4:
        raise ShapeError(f"conv input must be (N, C, H, W), got {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    expect = (spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w)
    if f.weights.shape != expect:
        raise ShapeError(f"filter shape {f.weights.shape} != {expect}")


def _pad_rows_first(xr: np.ndarray, pad: int, mode: str) -> np.ndarray:
    """:func:`pad_input` for (H, N, W, C) arrays."""
    if pad == 0:
        return xr
    h, n, w, c = xr.shape
    out = np.zeros((h + 2 * pad, n, w + 2 * pad, c), dtype=xr.dtype)
    out[pad:pad + h, :, pad:pad + w] = xr
    if mode == "cylindrical":
        if pad > h:
            raise ValueError(f"cylindrical pad {pad} exceeds height {h}")
        out[:pad, :, pad:pad + w] = xr[h - pad:]
        out[pad + h:, :, pad:pad + w] = xr[:pad]
    elif mode != "zero":
        raise ValueError(f"unknown pad mode {mode!r}")
    return out


def weight_matrix(weights: np.ndarray) -> np.ndarray:
    """(O, C, kh, kw) filters as an (O, kh*kw*C) matrix matching :func:`im2col`."""
    return weights.transpose(0, 2, 3, 1).reshape(weights.shape[0], -1)


def im2col(x: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Patch matrix of shape (Ho, N*Wo, kh*kw*C).

    Block ``i`` holds the receptive fields of output row ``i``: entry
    ``(i, n*Wo + j)`` is the window of output pixel ``(i, j)`` of image ``n``,
    ordered by kernel row, kernel column, then channel.
    """
    n, c, h, w = x.shape
    ho, wo = spec.output_size(h, w)
    kh, kw, sh, sw = spec.kernel_h, spec.kernel_w, spec.stride_h, spec.stride_w
    xp = _pad_rows_first(x.transpose(2, 0, 3, 1), spec.pad, spec.pad_mode)
    cols = np.empty((ho, n, wo, kh * kw, c), dtype=x.dtype)
    for u in range(kh):
        for v in range(kw):
            cols[:, :, :, u * kw + v] = xp[u:u + sh * (ho - 1) + 1:sh, :, v:v + sw * (wo - 1) + 1:sw]
    return cols.reshape(ho, n * wo, kh * kw * c)


def conv2d_direct(x: np.ndarray, f: FilterBank, spec: ConvSpec, *, return_cols: bool = False):
    """``out[n, o, i, j] = b[o] + sum_{c,u,v} xpad[n, c, i*sh + u, j*sw + v] * w[o, c, u, v]``.

    Each output row is its own matrix product of identical shape. A BLAS
    kernel may round a row differently depending on where it sits inside a
    larger matrix, so one product per row is what makes cylindrical
    convolution commute with cyclic row shifts bit for bit.
    """
    x = np.asarray(x)
    _check(x, f, spec)
    n = x.shape[0]
    ho, wo = spec.output_size(*x.shape[2:])
    cols = im2col(x, spec)
    wt = np.ascontiguousarray(weight_matrix(f.weights).T)
    out = np.empty((ho, n * wo, spec.out_channels), dtype=np.result_type(cols, wt))
    for i in range(ho):
        np.matmul(cols[i], wt, out=out[i])
    out += f.bias
    out = np.ascontiguousarray(out.reshape(ho, n, wo, spec.out_channels).transpose(1, 3, 0, 2))
    if return_cols:
        return out, cols
    return out


def col2im(gcols: np.ndarray, x_shape, spec: ConvSpec) -> np.ndarray:
    """Adjoint of :func:`im2col` (including the padding step)."""
    n, c, h, w = x_shape
    ho, wo = spec.output_size(h, w)
    kh, kw, sh, sw = spec.kernel_h, spec.kernel_w, spec.stride_h, spec.stride_w
    g = gcols.reshape(ho, n, wo, kh * kw, c)
    gp = np.zeros((h + 2 * spec.pad, n, w + 2 * spec.pad, c), dtype=gcols.dtype)
    for u in range(kh):
        for v in range(kw):
            gp[u:u + sh * (ho - 1) + 1:sh, :, v:v + sw * (wo - 1) + 1:sw] += g[:, :, :, u * kw + v]
    return np.ascontiguousarray(unpad_adjoint(gp.transpose(1, 3, 0, 2), spec.pad, spec.pad_mode))


def conv2d_backward(x: np.ndarray, f: FilterBank, grad_out: np.ndarray, spec: ConvSpec,
                    *, cols: np.ndarray | None = None, need_input_grad: bool = True):
    """Return ``(grad_x, grad_w, grad_b)`` for :func:`conv2d_direct`.

    ``cols`` may carry the patch matrix saved by the forward pass. With
    ``need_input_grad=False`` the first element is ``None``.
    """
    x = np.asarray(x)
    _check(x, f, spec)
    ho, wo = spec.output_size(*x.shape[2:])
    expect = (x.shape[0], spec.out_channels, ho, wo)
    if grad_out.shape != expect:
        raise ShapeError(f"grad_out shape {grad_out.shape} != {expect}")
    if cols is None:
        cols = im2col(x, spec)
    o, c, kh, kw = f.weights.shape
    go = grad_out.transpose(2, 0, 3, 1).reshape(-1, o)
    grad_b = go.sum(axis=0)
    grad_w = (go.T @ cols.reshape(go.shape[0], -1)).reshape(o, kh, kw, c).transpose(0, 3, 1, 2)
    grad_w = np.ascontiguousarray(grad_w)
    grad_x = None
    if need_input_grad:
        grad_x = col2im(go @ weight_matrix(f.weights), x.shape, spec)
    return grad_x, grad_w, grad_b

"""Cartesian to polar / log-polar resampling, plus rotation and translation.

Conventions
-----------
Images are arrays whose last two axes are (height, width); any leading axes
(channels, batch) are carried along. The origin of the Cartesian frame is the
image centre ``((W - 1) / 2, (H - 1) / 2)`` in pixel units, ``x`` grows to the
right and ``y`` grows *upwards*, so pixel ``(row, col)`` sits at
``x = col - cx``, ``y = cy - row``.

A polar image has one row per angle and one column per radius. Row ``r``
holds ``phi = 2*pi*r / out_height`` and row 0 is ``phi = 0``; the array is
stored with row 0 first. Rotating the source image counter-clockwise by
``2*pi*k / out_height`` therefore rolls the polar image down by ``k`` rows,
which is exactly :func:`cycnn.tensor.cyclic_shift_rows`. Use
:func:`display_flip` to put ``phi = 0`` at the bottom, so that the origin ends
up in the bottom-left corner as in the usual drawings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MODES = ("polar", "logpolar")


class PolarOriginError(ValueError):
    """The angle of the origin is undefined."""


@dataclass(frozen=True)
class PolarConfig:
    mode: str = "polar"
    out_height: int = 32
    out_width: int = 32
    rho_max: float = 16.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.out_height < 1 or self.out_width < 1:
            raise ValueError("output dimensions must be >= 1")
        if not self.rho_max > 0:
            raise ValueError("rho_max must be positive")

    @classmethod
    def for_image(cls, height: int, width: int, mode: str = "polar", rho_max=None):
        """Config whose output matches the input size and whose bounding
        circle is the largest one that fits in the image."""
        if rho_max is None:
            rho_max = min(height, width) / 2
        return cls(mode, height, width, float(rho_max))


def cartesian_to_polar_point(x: float, y: float) -> tuple[float, float]:
    """Return ``(rho, phi)`` with ``phi`` in ``[0, 2*pi)``.

    Raises :class:`PolarOriginError` for ``(0, 0)``.
    """
    rho = math.sqrt(x * x + y * y)
    if x > 0 and y >= 0:
        phi = math.atan(y / x)
    elif x == 0 and y > 0:
        phi = math.pi / 2
    elif x < 0:
        phi = math.pi + math.atan(y / x)
    elif x == 0 and y < 0:
        phi = 3 * math.pi / 2
    elif x > 0 and y < 0:
        phi = 2 * math.pi + math.atan(y / x)
    else:
        raise PolarOriginError("phi is undefined at the origin")
    return rho, phi


def bilinear_sample(img: np.ndarray, x, y) -> np.ndarray:
    """Sample ``img`` at fractional pixel coordinates.

    ``x`` is the column coordinate and ``y`` the row coordinate, both in
    pixel units with pixel centres on integers. Neighbours that fall outside
    the image contribute 0. ``x`` and ``y`` broadcast against each other; the
    result has shape ``img.shape[:-2] + broadcast(x, y).shape``.
    """
    img = np.asarray(img)
    h, w = img.shape[-2:]
    x, y = np.broadcast_arrays(np.asarray(x, dtype=np.float64),
                               np.asarray(y, dtype=np.float64))
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = x - x0
    fy = y - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)

    out = np.zeros(img.shape[:-2] + x.shape, dtype=np.result_type(img.dtype, np.float32))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        yi = y0 + dy
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            weight = np.where(inside, wy * wx, 0.0)
            vals = img[..., np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += (vals * weight).astype(out.dtype, copy=False)
    return out


def _batched_sample(imgs: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear sampling with one coordinate grid per image.

    ``imgs`` is (N, C, H, W); ``xs`` and ``ys`` are (N, Ho, Wo).
    """
    n, _, h, w = imgs.shape
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    fx = xs - x0
    fy = ys - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    nidx = np.arange(n)[:, np.newaxis, np.newaxis]
    out = np.zeros(xs.shape + imgs.shape[1:2], dtype=np.result_type(imgs.dtype, np.float32))
    for dy, wy in ((0, 1.0 - fy), (1, fy)):
        yi = y0 + dy
        for dx, wx in ((0, 1.0 - fx), (1, fx)):
            xi = x0 + dx
            inside = (xi >= 0) & (xi < w) & (yi >= 0) & (yi < h)
            weight = np.where(inside, wy * wx, 0.0)[..., np.newaxis]
            # advanced indices separated by a slice -> result is (N, Ho, Wo, C)
            vals = imgs[nidx, :, np.clip(yi, 0, h - 1), np.clip(xi, 0, w - 1)]
            out += (vals * weight).astype(out.dtype, copy=False)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def image_center(height: int, width: int) -> tuple[float, float]:
    return (width - 1) / 2.0, (height - 1) / 2.0


def radii(cfg: PolarConfig) -> np.ndarray:
    """Sampling radius of every output column."""
    t = (np.arange(cfg.out_width) + 0.5) / cfg.out_width
    if cfg.mode == "polar":
        return cfg.rho_max * t
    # ln(1 + rho) is spaced evenly; t = 0 maps to the centre, t = 1 to rho_max
    return np.expm1(np.log1p(cfg.rho_max) * t)


def angles(cfg: PolarConfig) -> np.ndarray:
    """Sampling angle of every output row."""
    return 2 * np.pi * np.arange(cfg.out_height) / cfg.out_height


def polar_grid(height: int, width: int, cfg: PolarConfig) -> tuple[np.ndarray, np.ndarray]:
    """Source pixel coordinates ``(cols, rows)`` for every polar output pixel."""
    cx, cy = image_center(height, width)
    rho = radii(cfg)[np.newaxis, :]
    phi = angles(cfg)[:, np.newaxis]
    cols = cx + rho * np.cos(phi)
    rows = cy - rho * np.sin(phi)
    return cols, rows


def to_polar(img: np.ndarray, cfg: PolarConfig | None = None, mode: str = "polar") -> np.ndarray:
    """Resample ``img`` (``(..., H, W)``) onto a polar or log-polar grid.

    When ``cfg`` is omitted, the output keeps the input size and the bounding
    circle is the largest inscribed one.
    """
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if h < 2 or w < 2:
        raise ValueError(f"image must be at least 2x2, got {h}x{w}")
    if cfg is None:
        cfg = PolarConfig.for_image(h, w, mode)
    cols, rows = polar_grid(h, w, cfg)
    return bilinear_sample(img, cols, rows)


def display_flip(polar_img: np.ndarray) -> np.ndarray:
    """Flip rows so ``phi = 0`` is the bottom row (origin bottom-left)."""
    return np.ascontiguousarray(np.asarray(polar_img)[..., ::-1, :])


def _rotation_grid(height: int, width: int, angle) -> tuple[np.ndarray, np.ndarray]:
    cx, cy = image_center(height, width)
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    x = cols - cx
    y = cy - rows
    angle = np.asarray(angle, dtype=np.float64)[..., np.newaxis, np.newaxis]
    c, s = np.cos(angle), np.sin(angle)
    # inverse map: rotate each output point by -angle
    xs = x * c + y * s
    ys = -x * s + y * c
    return cx + xs, cy - ys


def rotate_image(img: np.ndarray, angle: float) -> np.ndarray:
    """Rotate ``img`` counter-clockwise by ``angle`` radians about its centre.

    Uncovered pixels are filled with 0.
    """
    img = np.asarray(img)
    h, w = img.shape[-2:]
    if angle == 0:
        return img.astype(np.result_type(img.dtype, np.float32), copy=True)
    cols, rows = _rotation_grid(h, w, angle)
    return bilinear_sample(img, cols, rows)


def rotate_batch(imgs: np.ndarray, angles_: np.ndarray) -> np.ndarray:
    """Rotate each image of an (N, C, H, W) batch by its own angle."""
    imgs = np.asarray(imgs)
    h, w = imgs.shape[-2:]
    cols, rows = _rotation_grid(h, w, np.asarray(angles_))
    return _batched_sample(imgs, cols, rows)


def translate_image(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift ``img`` by ``dx`` columns (right positive) and ``dy`` rows
    (down positive). The vacated band is zero."""
    img = np.asarray(img)
    dx, dy = int(round(dx)), int(round(dy))
    h, w = img.shape[-2:]
    out = np.zeros_like(img)
    if abs(dx) >= w or abs(dy) >= h:
        return out
    src_r = slice(max(0, -dy), h - max(0, dy))
    dst_r = slice(max(0, dy), h - max(0, -dy))
    src_c = slice(max(0, -dx), w - max(0, dx))
    dst_c = slice(max(0, dx), w - max(0, -dx))
    out[..., dst_r, dst_c] = img[..., src_r, src_c]
    return out


def bounding_circle_columns(cfg: PolarConfig, height: int, width: int) -> np.ndarray:
    """Boolean mask of polar columns whose radius lies inside the image's
    inscribed circle (where rotation loses no content)."""
    return radii(cfg) <= min(height, width) / 2 - 0.5

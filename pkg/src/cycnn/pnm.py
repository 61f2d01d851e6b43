"""Binary PGM (P5) and PPM (P6) reading and writing.

Images are returned as float arrays of shape (C, H, W) with values in [0, 1].
"""

from __future__ import annotations

import os

import numpy as np


class PNMError(ValueError):
    pass


def _tokens(buf: bytes, count: int, pos: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise PNMError(f"truncated header at byte {pos}")
        out.append(buf[start:pos])
    return out, pos


def parse_pnm(buf: bytes) -> np.ndarray:
    if buf[:2] not in (b"P5", b"P6"):
        raise PNMError(f"unsupported magic {buf[:2]!r}; expected P5 or P6")
    channels = 1 if buf[:2] == b"P5" else 3
    toks, pos = _tokens(buf, 3, 2)
    try:
        width, height, maxval = (int(t) for t in toks)
    except ValueError:
        raise PNMError(f"malformed header values {toks!r}") from None
    if width < 1 or height < 1 or not 0 < maxval < 256:
        raise PNMError(f"unsupported geometry/maxval {width}x{height}/{maxval}")
    pos += 1  # single whitespace byte after maxval
    size = width * height * channels
    if len(buf) - pos < size:
        raise PNMError(f"pixel data truncated: need {size} bytes at offset {pos}, "
                       f"have {len(buf) - pos}")
    data = np.frombuffer(buf, dtype=np.uint8, count=size, offset=pos)
    img = data.reshape(height, width, channels).transpose(2, 0, 1)
    return img.astype(np.float32) / maxval


def read_pnm(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pnm(fh.read())


def encode_pnm(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[np.newaxis]
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise PNMError(f"expected (1|3, H, W) image, got shape {img.shape}")
    c, h, w = img.shape
    q = np.rint(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode() + q.transpose(1, 2, 0).tobytes()


def write_pnm(path: str | os.PathLike, img: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(encode_pnm(img))

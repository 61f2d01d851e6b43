"""Winograd F(2x2, 3x3) convolution with zero or cylindrical tiling.

The algorithm runs in five steps:

1. fetch 4x4 input tiles at stride 2 from the padded input,
2. fetch the 3x3 filters,
3. transform both into the 4x4 Winograd domain (``B^T d B`` and ``G g G^T``),
4. multiply element-wise, summing over input channels,
5. map every 4x4 product back to a 2x2 output block (``A^T m A``).

The cylindrical variant differs only in step 1: tiles are cut from a
cylindrically padded input instead of a zero-padded one.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided, sliding_window_view

from . import _wino_kernels as _kernels
from .conv import ConvSpec, FilterBank, pad_input, _check

# Lavin & Gray minimal filtering constants for F(2x2, 3x3)
B_T = np.array([
    [1, 0, -1, 0],
    [0, 1, 1, 0],
    [0, -1, 1, 0],
    [0, 1, 0, -1],
], dtype=np.float64)

G = np.array([
    [1.0, 0.0, 0.0],
    [0.5, 0.5, 0.5],
    [0.5, -0.5, 0.5],
    [0.0, 0.0, 1.0],
])

A_T = np.array([
    [1, 1, 1, 0],
    [0, 1, -1, -1],
], dtype=np.float64)

_STD = (B_T.copy(), G.copy(), A_T.copy())

TILE = 4
_PLANE_PAD = 64
OUT_TILE = 2
# multiplications per 2x2 output block, per (input channel, output channel)
MULS_DIRECT = OUT_TILE * OUT_TILE * 9
MULS_WINOGRAD = TILE * TILE


class WinogradGeometryError(ValueError):
    """Raised for shapes the Winograd path does not handle; use conv2d_direct."""


def transforms():
    """Return the ``(B_T, G, A_T)`` matrices in use (module globals)."""
    return B_T, G, A_T


def tile_input(x: np.ndarray, mode: str = "zero") -> np.ndarray:
    """Cut the 1-padded input into 4x4 tiles at stride 2.

    Returns an array of shape (N, C, H/2, W/2, 4, 4); tile ``(i, j)`` covers
    padded rows ``2i..2i+3`` and columns ``2j..2j+3``.
    """
    x = np.asarray(x)
    if x.ndim != 4:
        raise WinogradGeometryError(f"expected (N, C, H, W), got {x.shape}")
    h, w = x.shape[-2:]
    if h % 2 or w % 2:
        raise WinogradGeometryError(
            f"winograd tiling needs even H and W, got {h}x{w}; use conv2d_direct")
    xp = pad_input(x, 1, mode)
    win = sliding_window_view(xp, (TILE, TILE), axis=(2, 3))
    return win[:, :, ::OUT_TILE, ::OUT_TILE]


def transform_filter(g: np.ndarray) -> np.ndarray:
    """``G g G^T`` for a single 3x3 filter or a stack of shape (..., 3, 3)."""
    _, g_mat, _ = transforms()
    g = np.asarray(g)
    return g_mat @ g @ g_mat.T


def transform_tiles(d: np.ndarray) -> np.ndarray:
    """``B^T d B`` over the trailing 4x4 axes."""
    b_t, _, _ = transforms()
    return b_t @ d @ b_t.T


def inverse_transform(m: np.ndarray) -> np.ndarray:
    """``A^T m A`` over the trailing 4x4 axes."""
    _, _, a_t = transforms()
    return a_t @ m @ a_t.T


def _combine(mat: np.ndarray, items: list, out: list | None = None) -> list:
    """``out[r] = sum_k mat[r, k] * items[k]`` with zero terms skipped.

    ``out`` optionally supplies destination arrays.
    """
    res = []
    for r, row in enumerate(mat):
        dest = None if out is None else out[r]
        terms = [(coef, item) for coef, item in zip(row, items) if coef != 0]
        if not terms:
            acc = np.zeros_like(items[0]) if dest is None else dest
            if dest is not None:
                dest[...] = 0
            res.append(acc)
            continue
        (c0, i0), (c1, i1) = terms[0], terms[1] if len(terms) > 1 else (0, None)
        if i1 is not None and c0 == 1 and c1 in (1, -1):
            acc = (np.add if c1 == 1 else np.subtract)(i0, i1, out=dest)
            rest = terms[2:]
        else:
            acc = np.multiply(i0, c0, out=dest)
            rest = terms[1:]
        for coef, item in rest:
            if coef == 1:
                acc += item
            elif coef == -1:
                acc -= item
            else:
                acc += coef * item
        res.append(acc)
    return res


def _transform_2d(mat: np.ndarray, grid: list, out: list | None = None) -> list:
    """Apply ``mat @ D @ mat.T`` where ``D[i][j]`` are arrays (a nested list)."""
    k = len(grid[0])
    rows = [_combine(mat, [grid[i][j] for i in range(len(grid))]) for j in range(k)]
    # rows[j][a] = (mat @ D)[a][j]
    return [_combine(mat, [rows[j][a] for j in range(k)], None if out is None else out[a])
            for a in range(mat.shape[0])]


def _staggered(shape, dtype) -> np.ndarray:
    """C-ordered array whose leading-axis stride is padded off a power of two.

    The transforms stream 16 planes at once; with power-of-two plane strides
    those streams collide in the same cache sets.
    """
    plane = int(np.prod(shape[1:]))
    stride = plane + _PLANE_PAD
    buf = np.empty(shape[0] * stride, dtype=dtype)
    itemsize = buf.itemsize
    inner = np.empty(shape[1:], dtype=dtype).strides
    return as_strided(buf, shape, (stride * itemsize,) + inner)


def _flat_planes(a: np.ndarray) -> np.ndarray:
    """(K, d1, d2, ...) view of a staggered array as (K, d1, d2*...)."""
    k, d1 = a.shape[:2]
    rest = int(np.prod(a.shape[2:]))
    return as_strided(a, (k, d1, rest), (a.strides[0], a.strides[1], a.itemsize))


def _standard_constants() -> bool:
    b_t, g_mat, a_t = transforms()
    return np.array_equal(b_t, _STD[0]) and np.array_equal(a_t, _STD[2])


def _input_transform_numpy(xp: np.ndarray, v16: np.ndarray, b_t: np.ndarray) -> None:
    th, tw = v16.shape[3:]
    # split columns by parity so every slice below has a unit inner stride
    parity = [np.ascontiguousarray(xp[..., k::OUT_TILE]) for k in range(OUT_TILE)]
    rows = [_combine(b_t, [half[:, :, i:i + OUT_TILE * th:OUT_TILE] for i in range(TILE)])
            for half in parity]
    for a in range(TILE):
        cols = [rows[j % OUT_TILE][a][..., j // OUT_TILE:j // OUT_TILE + tw] for j in range(TILE)]
        _combine(b_t, cols, out=[v16[a * TILE + b] for b in range(TILE)])


def _output_transform_numpy(m16: np.ndarray, bias: np.ndarray, a_t: np.ndarray) -> np.ndarray:
    _, o, n, th, tw = m16.shape
    y = np.empty((OUT_TILE, OUT_TILE, o, n, th, tw), dtype=m16.dtype)
    m = [[m16[a * TILE + b] for b in range(TILE)] for a in range(TILE)]
    _transform_2d(a_t, m, out=[[y[i, j] for j in range(OUT_TILE)] for i in range(OUT_TILE)])
    out = np.ascontiguousarray(y.transpose(3, 2, 4, 0, 5, 1)).reshape(n, o, OUT_TILE * th, OUT_TILE * tw)
    out += bias[:, None, None]
    return out


def conv2d_winograd(x: np.ndarray, f: FilterBank, spec: ConvSpec, mode: str | None = None,
                    *, accelerate: bool = True) -> np.ndarray:
    """3x3 / stride 1 / pad 1 convolution via F(2x2, 3x3).

    ``mode`` defaults to ``spec.pad_mode``. The result equals
    :func:`cycnn.conv.conv2d_direct` up to rounding. With ``accelerate`` the
    input and output transforms run as compiled kernels when numba is
    installed and the standard constants are in place.
    """
    x = np.asarray(x)
    _check(x, f, spec)
    if not spec.winograd_compatible:
        raise WinogradGeometryError(
            "winograd supports only 3x3 kernels with stride 1 and pad 1; use conv2d_direct")
    mode = mode or spec.pad_mode
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise WinogradGeometryError(
            f"winograd tiling needs even H and W, got {h}x{w}; use conv2d_direct")
    dtype = np.result_type(x.dtype, f.weights.dtype)
    o = spec.out_channels
    th, tw = h // OUT_TILE, w // OUT_TILE
    b_t, g_mat, a_t = transforms()
    fast = accelerate and _kernels.AVAILABLE and _standard_constants()

    # step 1: data tiling. Working in (C, N, H, W) makes every tile element
    # a plain strided slice of the padded input; the padding mode is the
    # only difference between the two variants.
    xp = pad_input(np.ascontiguousarray(x.transpose(1, 0, 2, 3), dtype=dtype), 1, mode)

    # step 3, input side: B^T d B into a (16, C, N, th, tw) buffer
    v16 = _staggered((TILE * TILE, c, n, th, tw), dtype)
    if fast:
        _kernels.input_transform(xp, v16)
    else:
        _input_transform_numpy(xp, v16, b_t.astype(dtype))

    # steps 2-3, filter side: G g G^T
    u = (g_mat @ f.weights.astype(np.float64) @ g_mat.T).astype(dtype)   # O,C,4,4
    u16 = np.ascontiguousarray(u.transpose(2, 3, 0, 1).reshape(TILE * TILE, o, c))

    # step 4: element-wise products, reduced over input channels
    m16 = _staggered((TILE * TILE, o, n, th, tw), dtype)
    np.matmul(u16, _flat_planes(v16), out=_flat_planes(m16))

    # step 5: A^T m A back to 2x2 output blocks
    bias = f.bias.astype(dtype)
    if fast:
        out = np.empty((n, o, h, w), dtype=dtype)
        _kernels.output_transform(m16, bias, out)
        return out
    return _output_transform_numpy(m16, bias, a_t.astype(dtype))


def multiply_counts() -> dict:
    """Multiplications per 2x2 output block for one channel pair."""
    return {
        "direct": MULS_DIRECT,
        "winograd": MULS_WINOGRAD,
        "reduction": MULS_DIRECT / MULS_WINOGRAD,
    }

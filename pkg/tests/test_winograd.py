from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cycnn import winograd
from cycnn.conv import ConvSpec, FilterBank, conv2d_direct
from cycnn.tensor import cyclic_shift_rows
from cycnn.winograd import (A_T, B_T, G, WinogradGeometryError, conv2d_winograd, inverse_transform,
                            multiply_counts, tile_input, transform_filter, transform_tiles)


def frac_matmul(a, b):
    return [[sum((a[i][k] * b[k][j] for k in range(len(b))), Fraction(0)) for j in range(len(b[0]))]
            for i in range(len(a))]


def transpose(a):
    return [list(r) for r in zip(*a)]


def as_frac(m):
    return [[Fraction(v).limit_denominator(4) for v in row] for row in np.asarray(m)]


def valid_conv_2x2(d, g):
    return [[sum((d[i + u][j + v] * g[u][v] for u in range(3) for v in range(3)), Fraction(0))
             for j in range(2)] for i in range(2)]


@given(st.lists(st.integers(-9, 9), min_size=16, max_size=16),
       st.lists(st.integers(-9, 9), min_size=9, max_size=9))
def test_identity_is_exact_in_rational_arithmetic(dvals, gvals):
    d = [[Fraction(dvals[4 * i + j]) for j in range(4)] for i in range(4)]
    g = [[Fraction(gvals[3 * i + j]) for j in range(3)] for i in range(3)]
    bt, gm, at = as_frac(B_T), as_frac(G), as_frac(A_T)
    u = frac_matmul(frac_matmul(gm, g), transpose(gm))
    v = frac_matmul(frac_matmul(bt, d), transpose(bt))
    m = [[u[i][j] * v[i][j] for j in range(4)] for i in range(4)]
    y = frac_matmul(frac_matmul(at, m), transpose(at))
    assert y == valid_conv_2x2(d, g)


def test_float_identity_against_direct_valid_conv(rng):
    for _ in range(50):
        d = rng.standard_normal((4, 4))
        g = rng.standard_normal((3, 3))
        y = inverse_transform(transform_filter(g) * transform_tiles(d))
        ref = [[np.sum(d[i:i + 3, j:j + 3] * g) for j in range(2)] for i in range(2)]
        assert np.abs(y - ref).max() < 1e-12


def test_transform_filter_zero():
    assert not transform_filter(np.zeros((3, 3))).any()


def test_tile_input_zero_mode():
    x = np.arange(16.0).reshape(1, 1, 4, 4) + 1
    t = tile_input(x, "zero")
    assert t.shape == (1, 1, 2, 2, 4, 4)
    np.testing.assert_array_equal(t[0, 0, 0, 0, 0], [0, 0, 0, 0])
    np.testing.assert_array_equal(t[0, 0, 0, 0, 1:, 1:], x[0, 0, :3, :3])
    np.testing.assert_array_equal(t[0, 0, 1, 1, :3, :3], x[0, 0, 1:, 1:])


def test_tile_input_cylindrical_mode():
    x = np.arange(16.0).reshape(1, 1, 4, 4) + 1
    t = tile_input(x, "cylindrical")
    np.testing.assert_array_equal(t[0, 0, 0, 0, 0], [0, x[0, 0, 3, 0], x[0, 0, 3, 1], x[0, 0, 3, 2]])


def test_tile_input_constant():
    t = tile_input(np.ones((1, 1, 4, 4)), "zero")[0, 0]
    for i in range(2):
        for j in range(2):
            p = np.zeros((6, 6))
            p[1:5, 1:5] = 1
            np.testing.assert_array_equal(t[i, j], p[2 * i:2 * i + 4, 2 * j:2 * j + 4])


def test_odd_dims_rejected():
    with pytest.raises(WinogradGeometryError):
        tile_input(np.zeros((1, 1, 5, 4)))
    with pytest.raises(WinogradGeometryError):
        conv2d_winograd(np.zeros((1, 1, 4, 3)), FilterBank(np.zeros((1, 1, 3, 3))), ConvSpec(1, 1))


@pytest.mark.parametrize("mode", ["zero", "cylindrical"])
def test_identity_filter_reproduces_input(mode, rng):
    x = rng.standard_normal((2, 3, 6, 8))
    w = np.zeros((3, 3, 3, 3))
    for k in range(3):
        w[k, k, 1, 1] = 1
    np.testing.assert_allclose(conv2d_winograd(x, FilterBank(w), ConvSpec(3, 3, pad_mode=mode)), x,
                               rtol=0, atol=1e-14)


@pytest.mark.parametrize("mode", ["zero", "cylindrical"])
@pytest.mark.parametrize("accelerate", [True, False])
@pytest.mark.parametrize("dtype, tol", [(np.float64, 1e-10), (np.float32, 1e-4)])
def test_matches_direct(mode, accelerate, dtype, tol, rng):
    for h, w, c, o in ((4, 4, 1, 1), (8, 16, 3, 8), (32, 8, 8, 3)):
        x = rng.standard_normal((2, c, h, w)).astype(dtype)
        f = FilterBank(rng.standard_normal((o, c, 3, 3)).astype(dtype), rng.standard_normal(o).astype(dtype))
        spec = ConvSpec(c, o, pad_mode=mode)
        y = conv2d_winograd(x, f, spec, accelerate=accelerate)
        assert y.dtype == dtype
        assert np.abs(y - conv2d_direct(x, f, spec)).max() <= tol


def test_mode_isolation(rng):
    x = rng.standard_normal((1, 2, 8, 8))
    f = FilterBank(rng.standard_normal((2, 2, 3, 3)))
    z = conv2d_winograd(x, f, ConvSpec(2, 2))
    c = conv2d_winograd(x, f, ConvSpec(2, 2, pad_mode="cylindrical"))
    np.testing.assert_array_equal(z[:, :, 1:-1], c[:, :, 1:-1])
    assert np.all(z[:, :, [0, -1]] != c[:, :, [0, -1]])


def test_even_shift_equivariance_is_exact(rng):
    x = rng.standard_normal((2, 3, 12, 8))
    f = FilterBank(rng.standard_normal((4, 3, 3, 3)), rng.standard_normal(4))
    spec = ConvSpec(3, 4, pad_mode="cylindrical")
    y = conv2d_winograd(x, f, spec)
    for k in range(2, 12, 2):
        assert np.array_equal(conv2d_winograd(cyclic_shift_rows(x, k), f, spec), cyclic_shift_rows(y, k))
    # odd shifts move the tile grid; equivalence then holds up to rounding
    for k in range(1, 12, 2):
        diff = conv2d_winograd(cyclic_shift_rows(x, k), f, spec) - cyclic_shift_rows(y, k)
        assert np.abs(diff).max() < 1e-12


def test_perturbed_constants_are_detected(rng, monkeypatch):
    x = rng.standard_normal((1, 2, 8, 8))
    f = FilterBank(rng.standard_normal((2, 2, 3, 3)))
    spec = ConvSpec(2, 2)
    g = G.copy()
    g[1, 1] += 1e-3
    monkeypatch.setattr(winograd, "G", g)
    assert np.abs(conv2d_winograd(x, f, spec) - conv2d_direct(x, f, spec)).max() > 1e-6


def test_multiply_counts_follow_from_transform_shapes():
    out_tile, tile = A_T.shape
    k = G.shape[1]
    counts = multiply_counts()
    assert counts["direct"] == out_tile * out_tile * k * k == 36
    assert counts["winograd"] == tile * tile == 16
    assert counts["reduction"] == 2.25

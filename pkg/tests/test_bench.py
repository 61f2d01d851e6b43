import numpy as np
import pytest

from cycnn import bench, winograd
from cycnn.bench import (ALGORITHMS, CSV_FIELDS, BenchMismatchError, bench_conv, conv_flops,
                         parse_geometry, thread_count)

SMALL = [(1, 4, 8, 8, 4)]


def test_small_bench_report():
    rep = bench_conv(SMALL, repeats=3)
    assert {r.algorithm for r in rep.rows} == set(ALGORITHMS)
    assert all(r.median_ms > 0 and len(r.times_ms) == 3 for r in rep.rows)
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_FIELDS)
    assert len(lines) == 1 + len(ALGORITHMS)
    assert lines[1].startswith("1x4x8x8x4,")
    assert rep.ratio(SMALL[0]) > 0
    assert "36" in rep.summary() and "16" in rep.summary()


def test_multiply_counts():
    m = winograd.multiply_counts()
    assert m["direct"] == 36 and m["winograd"] == 16
    assert m["reduction"] == pytest.approx(2.25)


def test_mismatch_gate(monkeypatch):
    g = winograd.G.copy()
    g[1, 1] += 1e-3
    monkeypatch.setattr(winograd, "G", g)
    with pytest.raises(BenchMismatchError, match="winograd-zero"):
        bench_conv(SMALL, algorithms=("direct-zero", "winograd-zero"), repeats=3)


def test_rejects_few_repeats():
    with pytest.raises(ValueError, match="repeats"):
        bench_conv(SMALL, repeats=2)


def test_unknown_algorithm():
    with pytest.raises(ValueError):
        bench_conv(SMALL, algorithms=("fft-zero",), repeats=3)


def test_double_precision_gate_passes():
    rep = bench_conv(SMALL, algorithms=("winograd-cylindrical",), repeats=3, dtype=np.float64)
    assert rep.rows[0].algorithm == "winograd-cylindrical"


def test_helpers(monkeypatch):
    assert conv_flops((1, 1, 2, 2, 1)) == 72
    assert parse_geometry("8x64x32x32x64") == (8, 64, 32, 32, 64)
    assert parse_geometry("1,2,3,4,5") == (1, 2, 3, 4, 5)
    with pytest.raises(ValueError):
        parse_geometry("1,2,3")
    monkeypatch.setenv("OMP_NUM_THREADS", "1")
    assert thread_count() == 1


def test_check_equivalence_scales_with_magnitude():
    ref = np.full(4, 1000.0)
    bench.check_equivalence(ref + 0.05, ref, "x", 1e-4)
    with pytest.raises(BenchMismatchError):
        bench.check_equivalence(ref + 0.2, ref, "x", 1e-4)

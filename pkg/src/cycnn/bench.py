"""Timing harness for the convolution paths.

Every algorithm is first checked against the direct convolution with the
same padding mode on the benchmark inputs; a mismatch aborts the run, since
timings of code that computes something else mean nothing.
"""

from __future__ import annotations

import csv
import io
import os
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .conv import ConvSpec, FilterBank, conv2d_direct
from .winograd import conv2d_winograd, multiply_counts

ALGORITHMS = ("direct-zero", "direct-cylindrical", "winograd-zero", "winograd-cylindrical")
CSV_FIELDS = ("geometry", "algorithm", "median_ms", "gflops", "threads")
DEFAULT_GEOMETRIES = ((8, 64, 32, 32, 64), (8, 32, 32, 32, 32), (8, 128, 8, 8, 128))


class BenchMismatchError(AssertionError):
    pass


@dataclass
class BenchRow:
    geometry: tuple
    algorithm: str
    median_ms: float
    gflops: float
    threads: int
    times_ms: list = field(default_factory=list)

    @property
    def geometry_label(self) -> str:
        return "x".join(str(v) for v in self.geometry)


@dataclass
class BenchReport:
    rows: list
    multiplies: dict

    def median(self, geometry, algorithm) -> float:
        for r in self.rows:
            if tuple(r.geometry) == tuple(geometry) and r.algorithm == algorithm:
                return r.median_ms
        raise KeyError((geometry, algorithm))

    def ratio(self, geometry, pad_mode: str = "zero") -> float:
        """Direct time divided by Winograd time (above 1 means Winograd is faster)."""
        return self.median(geometry, f"direct-{pad_mode}") / self.median(geometry, f"winograd-{pad_mode}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            w.writerow([r.geometry_label, r.algorithm, f"{r.median_ms:.4f}", f"{r.gflops:.3f}", r.threads])
        return buf.getvalue()

    def summary(self) -> str:
        m = self.multiplies
        lines = [f"multiplies per 2x2 output tile: direct {m['direct']}, winograd {m['winograd']} "
                 f"({m['reduction']:.2f}x fewer)"]
        for geom in dict.fromkeys(tuple(r.geometry) for r in self.rows):
            algs = {r.algorithm for r in self.rows if tuple(r.geometry) == geom}
            for mode in ("zero", "cylindrical"):
                if {f"direct-{mode}", f"winograd-{mode}"} <= algs:
                    lines.append(f"{'x'.join(map(str, geom))} {mode}: direct/winograd time ratio "
                                 f"{self.ratio(geom, mode):.2f}")
            if {"direct-zero", "direct-cylindrical"} <= algs:
                r = self.median(geom, "direct-cylindrical") / self.median(geom, "direct-zero")
                lines.append(f"{'x'.join(map(str, geom))}: cylindrical/zero direct time ratio {r:.2f}")
        return "\n".join(lines)


def thread_count() -> int:
    """CPUs available to this process, capped by the usual BLAS thread variables."""
    n = len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        v = os.environ.get(var, "")
        if v.isdigit() and int(v) > 0:
            n = min(n, int(v))
    return n


def conv_flops(geometry) -> int:
    n, c, h, w, o = geometry
    return 2 * n * o * c * 9 * h * w


def _runner(algorithm: str, x, f, c, o):
    kind, _, mode = algorithm.partition("-")
    if kind not in ("direct", "winograd") or mode not in ("zero", "cylindrical"):
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    spec = ConvSpec(c, o, pad_mode=mode, algorithm=kind)
    if kind == "direct":
        return lambda: conv2d_direct(x, f, spec), spec
    return lambda: conv2d_winograd(x, f, spec), spec


def check_equivalence(out: np.ndarray, ref: np.ndarray, label: str, tol: float) -> None:
    diff = np.abs(out.astype(np.float64) - ref.astype(np.float64))
    scale = max(1.0, float(np.abs(ref).max()))
    if not np.all(np.isfinite(diff)) or diff.max() > tol * scale:
        idx = np.unravel_index(int(np.nanargmax(diff)), diff.shape)
        raise BenchMismatchError(
            f"{label}: output differs from direct convolution "
            f"(max abs diff {diff.max():.3e} at {idx}, mean {diff.mean():.3e}, "
            f"tolerance {tol * scale:.3e}); benchmark aborted")


def bench_conv(geometries=DEFAULT_GEOMETRIES, algorithms=ALGORITHMS, repeats: int = 5,
               warmup: int = 1, dtype=np.float32, seed: int = 0, tol: float | None = None) -> BenchReport:
    """Median wall time of each algorithm on each ``(N, C, H, W, out_channels)``
    geometry, after an equivalence check against the direct convolution."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    dtype = np.dtype(dtype)
    if tol is None:
        tol = 1e-10 if dtype == np.float64 else 1e-4
    rng = np.random.default_rng(seed)
    threads = thread_count()
    rows = []
    for geom in geometries:
        n, c, h, w, o = (int(v) for v in geom)
        x = rng.standard_normal((n, c, h, w)).astype(dtype)
        f = FilterBank(rng.standard_normal((o, c, 3, 3)).astype(dtype) / np.sqrt(9 * c),
                       rng.standard_normal(o).astype(dtype))
        refs = {}
        for alg in algorithms:
            run, spec = _runner(alg, x, f, c, o)
            mode = spec.pad_mode
            if mode not in refs:
                refs[mode] = conv2d_direct(x, f, ConvSpec(c, o, pad_mode=mode))
            check_equivalence(run(), refs[mode], f"{alg} on {geom}", tol)
            for _ in range(warmup):
                run()
            times = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                run()
                times.append((time.perf_counter() - t0) * 1e3)
            med = statistics.median(times)
            rows.append(BenchRow((n, c, h, w, o), alg, med,
                                 conv_flops((n, c, h, w, o)) / (med * 1e6), threads, times))
    return BenchReport(rows, multiply_counts())


def parse_geometry(text: str) -> tuple:
    """``"N,C,H,W,O"`` or ``"NxCxHxWxO"``."""
    parts = text.replace("x", ",").split(",")
    try:
        geom = tuple(int(p) for p in parts)
    except ValueError:
        raise ValueError(f"geometry {text!r} must be five integers N,C,H,W,O") from None
    if len(geom) != 5 or min(geom) < 1:
        raise ValueError(f"geometry {text!r} must be five positive integers N,C,H,W,O")
    return geom

"""Built-in consistency suites: direct convolution against a loop oracle,
cyclic equivariance of cylindrical convolution, Winograd against direct,
and analytic gradients against central finite differences.

Single precision is the default; ``double=True`` runs everything in float64
with the tighter tolerances.
"""

from __future__ import annotations

import contextlib
import copy
import time
from dataclasses import dataclass

import numpy as np

from . import winograd
from .conv import ConvSpec, FilterBank, conv2d_direct, pad_input
from .model import backward, forward, loss_and_grad, tiny_model
from .tensor import cyclic_shift_rows

SUITES = ("conv-oracle", "equivariance", "winograd", "gradients")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def loop_conv(x, w, b, spec: ConvSpec) -> np.ndarray:
    """Convolution written as explicit loops over every index."""
    xp = pad_input(x, spec.pad, spec.pad_mode)
    n_, c_, h, w_ = x.shape
    ho, wo = spec.output_size(h, w_)
    out = np.zeros((n_, w.shape[0], ho, wo), dtype=np.float64)
    for n in range(n_):
        for o in range(w.shape[0]):
            for i in range(ho):
                for j in range(wo):
                    acc = float(b[o])
                    for c in range(c_):
                        for u in range(spec.kernel_h):
                            for v in range(spec.kernel_w):
                                acc += float(xp[n, c, i * spec.stride_h + u, j * spec.stride_w + v]) * float(w[o, c, u, v])
                    out[n, o, i, j] = acc
    return out


def numeric_gradients(model, x, y, eps: float = 1e-5) -> dict:
    """Central-difference gradient of the mean loss for every parameter,
    keyed ``"layer.param"``."""
    out = {}
    for i, name, p in model.parameters():
        g = np.zeros(p.shape, dtype=np.float64)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + eps
            lp, _ = loss_and_grad(forward(model, x, train=True)[0], y)
            p[idx] = old - eps
            lm, _ = loss_and_grad(forward(model, x, train=True)[0], y)
            p[idx] = old
            g[idx] = (lp - lm) / (2 * eps)
        out[f"{i}.{name}"] = g
    return out


def gradient_errors(model, x, y, eps: float = 1e-5) -> dict:
    """Worst relative error between analytic and central-difference
    gradients, per ``"layer.param"``. Pairs where both values are below
    1e-8 in magnitude count as agreeing."""
    numeric = numeric_gradients(model, x, y, eps)
    logits, cache = forward(model, x, train=True)
    grads = backward(model, cache, loss_and_grad(logits, y)[1])
    errors = {}
    for i, name, _ in model.parameters():
        a, n = grads[i][name], numeric[f"{i}.{name}"]
        denom = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(denom > 1e-8, np.abs(a - n) / np.where(denom > 0, denom, 1), 0.0)
        errors[f"{i}.{name}"] = float(rel.max())
    return errors


def _conv_oracle(dtype, rng):
    tol = 1e-12 if dtype == np.float64 else 1e-4
    worst = 0.0
    for mode in ("zero", "cylindrical"):
        for stride in (1, 2):
            spec = ConvSpec(2, 3, 3, 3, stride, stride, 1, mode)
            x = rng.standard_normal((2, 2, 6, 5)).astype(dtype)
            f = FilterBank(rng.standard_normal((3, 2, 3, 3)).astype(dtype), rng.standard_normal(3).astype(dtype))
            worst = max(worst, float(np.abs(conv2d_direct(x, f, spec) - loop_conv(x, f.weights, f.bias, spec)).max()))
    return worst <= tol, f"max abs error {worst:.2e} (tolerance {tol:.0e})"


def _equivariance(dtype, rng):
    bad = 0
    for trial in range(5):
        h = 8 + 2 * trial
        spec = ConvSpec(3, 4, pad_mode="cylindrical")
        x = rng.standard_normal((2, 3, h, 7)).astype(dtype)
        f = FilterBank(rng.standard_normal((4, 3, 3, 3)).astype(dtype), rng.standard_normal(4).astype(dtype))
        y = conv2d_direct(x, f, spec)
        for k in range(1, h):
            if not np.array_equal(conv2d_direct(cyclic_shift_rows(x, k), f, spec), cyclic_shift_rows(y, k)):
                bad += 1
    return bad == 0, f"{bad} shifted cases differ"


def _winograd(dtype, rng):
    tol = 1e-10 if dtype == np.float64 else 1e-4
    worst = 0.0
    for h, w in ((4, 4), (8, 6), (16, 16)):
        for mode in ("zero", "cylindrical"):
            spec = ConvSpec(3, 5, pad_mode=mode)
            x = rng.standard_normal((2, 3, h, w)).astype(dtype)
            f = FilterBank(rng.standard_normal((5, 3, 3, 3)).astype(dtype), rng.standard_normal(5).astype(dtype))
            diff = winograd.conv2d_winograd(x, f, spec) - conv2d_direct(x, f, spec)
            worst = max(worst, float(np.abs(diff).max()))
    return worst <= tol, f"max abs error {worst:.2e} (tolerance {tol:.0e})"


def _gradients(dtype, rng):
    model = tiny_model(1, 3, 8, pad_mode="cylindrical", seed=int(rng.integers(1 << 31))).astype(np.float64)
    x = rng.standard_normal((2, 1, 8, 8))
    y = np.array([0, 2])
    if dtype == np.float64:
        errors = gradient_errors(model, x, y)
        worst_name = max(errors, key=errors.get)
        return errors[worst_name] <= 1e-4, (f"worst relative error {errors[worst_name]:.2e} "
                                            f"in {worst_name} (tolerance 1e-04)")
    # single precision: float32 analytic gradients against float64 differences,
    # compared as whole tensors since float32 rounding swamps tiny entries
    ref = numeric_gradients(model, x, y)
    single = copy.deepcopy(model).astype(np.float32)
    logits, cache = forward(single, x.astype(np.float32), train=True)
    grads = backward(single, cache, loss_and_grad(logits, y)[1].astype(np.float32))
    worst, worst_name = 0.0, ""
    for i, name, _ in single.parameters():
        a, n = grads[i][name].astype(np.float64), ref[f"{i}.{name}"]
        err = float(np.linalg.norm(a - n) / max(np.linalg.norm(n), 1e-12))
        if err >= worst:
            worst, worst_name = err, f"{i}.{name}"
    return worst <= 1e-3, f"worst tensor relative error {worst:.2e} in {worst_name} (tolerance 1e-03)"


_RUNNERS = {"conv-oracle": _conv_oracle, "equivariance": _equivariance,
            "winograd": _winograd, "gradients": _gradients}


@contextlib.contextmanager
def perturbed_winograd(delta: float = 1e-3):
    """Temporarily nudge one entry of the Winograd filter transform ``G``."""
    saved = winograd.G
    g = saved.copy()
    g[1, 1] += delta
    winograd.G = g
    try:
        yield
    finally:
        winograd.G = saved


def run_selftest(double: bool = False, suites=SUITES, seed: int = 0,
                 perturb_winograd: bool = False) -> list[SuiteResult]:
    dtype = np.float64 if double else np.float32
    ctx = perturbed_winograd() if perturb_winograd else contextlib.nullcontext()
    results = []
    with ctx:
        for name in suites:
            rng = np.random.default_rng([seed, SUITES.index(name)])
            t0 = time.perf_counter()
            try:
                ok, detail = _RUNNERS[name](dtype, rng)
            except Exception as exc:  # a crash is a failure of that suite
                ok, detail = False, f"{type(exc).__name__}: {exc}"
            results.append(SuiteResult(name, bool(ok), detail, time.perf_counter() - t0))
    return results


def format_results(results: list[SuiteResult]) -> str:
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name:<13} {r.detail}  [{r.seconds:.2f}s]"
             for r in results]
    failed = [r.name for r in results if not r.passed]
    lines.append("all suites passed" if not failed else f"failed suites: {', '.join(failed)}")
    return "\n".join(lines)

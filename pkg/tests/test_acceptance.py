"""Acceptance criteria 1-9. Each test prints one PASS/FAIL line (collected
again in the terminal summary) and fails when the criterion is not met.

Criteria 7 and 8 train MiniVGG on a 5000-image MNIST sample and are marked
``slow``; deselect them with ``-m "not slow"``.
"""

import time

import numpy as np
import pytest

from cycnn.bench import bench_conv
from cycnn.conv import ConvSpec, FilterBank, conv2d_direct
from cycnn.experiment import build_model
from cycnn.model import convert_to_cycnn, count_params, minivgg, tiny_model
from cycnn.polar import PolarConfig, bounding_circle_columns, rotate_image, to_polar
from cycnn.receptive_field import RfLayerSpec, rf_propagate
from cycnn.selftest import gradient_errors
from cycnn.tensor import cyclic_shift_rows
from cycnn.winograd import conv2d_winograd, multiply_counts

from imagesets import eight_bit_images
from oracles import brute_polar, brute_rotate

# Criterion 3 tolerance on the per-(image, shift) mean abs difference inside
# the bounding circle. Calibrated with the scalar oracles on 8-bit images
# (10 glyphs + 10 smooth images for each of seeds 1, 2, 3; shifts 1..31):
#   polar     mean 0.012, worst 0.0379
#   logpolar  mean 0.018, worst 0.0489
# The test below uses a different seed, so it is not fitted to its own data.
ROTATION_TOL = {"polar": 0.045, "logpolar": 0.06}

# Training budget for criteria 7 and 8: 4000 train / 1000 test MNIST images,
# batch 64, at most this many epochs per model (early stopping still applies).
# Rotation-augmented training converges more slowly: in a pilot the base
# network was at 0.88 rotated-test accuracy after 10 epochs and 0.95 after 30.
MAX_EPOCHS = 10
AUGMENTED_MAX_EPOCHS = 30


def test_criterion_1_winograd_matches_direct(verdict):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = {np.float64: 0.0, np.float32: 0.0}
    for _ in range(100):
        h, w = (int(v) for v in rng.choice([4, 8, 16, 32], size=2))
        cin, cout = (int(v) for v in rng.choice([1, 3, 8], size=2))
        mode = str(rng.choice(["zero", "cylindrical"]))
        spec = ConvSpec(cin, cout, pad_mode=mode)
        x = rng.standard_normal((2, cin, h, w))
        f = FilterBank(rng.standard_normal((cout, cin, 3, 3)), rng.standard_normal(cout))
        for dtype in worst:
            xd = x.astype(dtype)
            fd = FilterBank(f.weights.astype(dtype), f.bias.astype(dtype))
            diff = np.abs(conv2d_winograd(xd, fd, spec).astype(np.float64)
                          - conv2d_direct(xd, fd, spec).astype(np.float64)).max()
            worst[dtype] = max(worst[dtype], float(diff))
    seconds = time.perf_counter() - t0
    ok = worst[np.float64] <= 1e-10 and worst[np.float32] <= 1e-4 and seconds < 60
    verdict(1, "winograd oracle equivalence", ok,
            f"100 cases, max abs error double {worst[np.float64]:.2e} (<= 1e-10), "
            f"single {worst[np.float32]:.2e} (<= 1e-4), {seconds:.1f}s")


def test_criterion_2_exact_cyclic_equivariance(verdict):
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    cases = mismatches = 0
    for _ in range(50):
        h = int(rng.integers(3, 17))
        w = int(rng.integers(3, 13))
        cin, cout = (int(v) for v in rng.integers(1, 5, size=2))
        spec = ConvSpec(cin, cout, pad_mode="cylindrical")
        x = rng.standard_normal((1, cin, h, w))
        f = FilterBank(rng.standard_normal((cout, cin, 3, 3)), rng.standard_normal(cout))
        y = conv2d_direct(x, f, spec)
        for k in range(1, h):
            cases += 1
            if not np.array_equal(conv2d_direct(cyclic_shift_rows(x, k), f, spec), cyclic_shift_rows(y, k)):
                mismatches += 1
    seconds = time.perf_counter() - t0
    verdict(2, "exact cyclic equivariance", mismatches == 0 and seconds < 30,
            f"{mismatches} of {cases} shifted cases differ bitwise, {seconds:.1f}s")


@pytest.mark.parametrize("mode", ["polar", "logpolar"])
def test_criterion_3_rotation_becomes_translation(mode, verdict):
    images = eight_bit_images(seed=7)
    cfg = PolarConfig.for_image(32, 32, mode)
    inside = bounding_circle_columns(cfg, 32, 32)
    # the vectorised path agrees with the scalar oracles on a sample
    for img in (images[0], images[-1]):
        np.testing.assert_allclose(to_polar(img, cfg), brute_polar(img, cfg), atol=1e-12)
        np.testing.assert_allclose(rotate_image(img, 0.9), brute_rotate(img, 0.9), atol=1e-12)
    errs = []
    for img in images:
        base = to_polar(img, cfg)
        for k in range(1, 32):
            rotated = to_polar(rotate_image(img, 2 * np.pi * k / 32), cfg)
            errs.append(float(np.abs(rotated - cyclic_shift_rows(base, k))[:, inside].mean()))
    tol = ROTATION_TOL[mode]
    verdict(3, f"rotation to translation, {mode}", max(errs) <= tol,
            f"{len(images)} images x 31 shifts, mean {np.mean(errs):.4f}, "
            f"worst {max(errs):.4f} (<= calibrated {tol})")


def test_criterion_4_parameter_preservation(verdict):
    counts = []
    for in_ch, classes in ((1, 10), (3, 10)):
        model = minivgg(in_ch, classes)
        counts.append((count_params(model), count_params(convert_to_cycnn(model))))
    ok = all(a == b for a, b in counts)
    verdict(4, "parameter preservation", ok,
            "; ".join(f"MiniVGG {a} -> CyMiniVGG {b}" for a, b in counts))


def test_criterion_5_gradients(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst, where = 0.0, ""
    for mode in ("zero", "cylindrical"):
        model = tiny_model(1, 3, 8, pad_mode=mode, seed=5).astype(np.float64)
        errors = gradient_errors(model, rng.standard_normal((3, 1, 8, 8)), np.array([0, 1, 2]))
        name = max(errors, key=errors.get)
        if errors[name] >= worst:
            worst, where = errors[name], f"{mode} {name}"
    seconds = time.perf_counter() - t0
    verdict(5, "gradient correctness", worst <= 1e-4 and seconds < 120,
            f"worst relative error {worst:.2e} in {where} (<= 1e-4), {seconds:.1f}s")


def test_criterion_6_receptive_field(verdict):
    rf = rf_propagate([RfLayerSpec(3, 3, stride_w=3, stride_h=2)], seed_rf=(3, 3))[-1]
    verdict(6, "receptive-field recurrence", rf == (9, 7), f"3x3 through 3x3 kernel, strides (3,2) -> {rf[0]}x{rf[1]}")


def test_criterion_9_winograd_reduction(verdict):
    m = multiply_counts()
    geom = (8, 64, 32, 32, 64)
    report = bench_conv([geom], algorithms=("direct-zero", "winograd-zero",
                                            "direct-cylindrical", "winograd-cylindrical"), repeats=5)
    ratios = {mode: report.ratio(geom, mode) for mode in ("zero", "cylindrical")}
    ok = (m["direct"], m["winograd"]) == (36, 16) and min(ratios.values()) > 1
    verdict(9, "winograd arithmetic reduction", ok,
            f"{m['direct']} -> {m['winograd']} multiplies per tile ({m['reduction']:.2f}x); "
            f"direct/winograd time ratio zero {ratios['zero']:.2f}, cylindrical {ratios['cylindrical']:.2f}")


# -- criteria 7 and 8: training experiments ---------------------------------------

@pytest.fixture(scope="module")
def mnist(tmp_path_factory):
    pytest.importorskip("mlxtend")
    from cycnn.datasets import load_mnist_dir, mlxtend_mnist_subset, rotated_test_set

    root = tmp_path_factory.mktemp("mnist")
    mlxtend_mnist_subset(root)
    test = load_mnist_dir(root, "test")
    return load_mnist_dir(root, "train"), test, rotated_test_set(test, seed=0)


def _train_and_score(variant, data, augment, epochs):
    from cycnn.training import TrainConfig, evaluate, train

    train_ds, test, test_r = data
    model = build_model(variant, 1, 10, seed=0)
    model, metrics = train(model, train_ds, TrainConfig(max_epochs=epochs, augment=augment, seed=0))
    return evaluate(model, test)[1], evaluate(model, test_r)[1], len(metrics)


@pytest.mark.slow
def test_criterion_7_accuracy_gap(mnist, verdict):
    t0 = time.perf_counter()
    scores = {v: _train_and_score(v, mnist, "none", MAX_EPOCHS) for v in ("base", "p", "cy-p")}
    rot = {v: s[1] for v, s in scores.items()}
    gap = rot["cy-p"] - rot["base"]
    ok = gap >= 0.15 and rot["base"] < rot["p"] < rot["cy-p"]
    detail = ", ".join(f"{v} {s[0]:.3f}/{s[1]:.3f} ({s[2]} ep)" for v, s in scores.items())
    verdict(7, "rotated-test accuracy gap", ok,
            f"test/rotated-test accuracy: {detail}; cy-p minus base {100 * gap:.1f} points "
            f"(>= 15), {(time.perf_counter() - t0) / 60:.0f} min")


@pytest.mark.slow
def test_criterion_8_augmentation_closes_gap(mnist, verdict):
    t0 = time.perf_counter()
    scores = {v: _train_and_score(v, mnist, "rotate", AUGMENTED_MAX_EPOCHS) for v in ("base", "cy-p")}
    base, cy = scores["base"][1], scores["cy-p"][1]
    verdict(8, "rotation augmentation closes the gap", base >= cy - 0.05,
            f"rotated-test accuracy base {base:.3f} ({scores['base'][2]} ep), cy-p {cy:.3f} "
            f"({scores['cy-p'][2]} ep); base minus cy-p {100 * (base - cy):.1f} points (>= -5), "
            f"{(time.perf_counter() - t0) / 60:.0f} min")

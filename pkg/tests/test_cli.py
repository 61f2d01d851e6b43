import subprocess
import sys

import numpy as np
import pytest

from cycnn.cli import main, read_config
from cycnn.pnm import read_pnm, write_pnm

SMALL_TRAIN = ["--dataset", "synth", "--synth-size", "48", "--batch-size", "16", "--epochs", "3",
               "--quiet"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_polar_constant_image(tmp_path, capsys):
    src, dst = tmp_path / "c.pgm", tmp_path / "p.pgm"
    write_pnm(src, np.full((32, 32), 77 / 255))
    code, out, _ = run(capsys, "polar", "--in", src, "--out", dst, "--mode", "polar")
    assert code == 0 and "wrote" in out
    img = np.rint(read_pnm(dst) * 255)
    assert img.shape == (1, 32, 32)
    # every column strictly inside the bounding circle stays at the input value
    assert np.all(img[..., :-1] == 77)


def test_polar_logpolar_and_size(tmp_path, capsys):
    src, dst = tmp_path / "c.ppm", tmp_path / "p.ppm"
    write_pnm(src, np.random.default_rng(0).random((3, 20, 24)))
    assert run(capsys, "polar", "--in", src, "--out", dst, "--mode", "logpolar", "--size", "16x12")[0] == 0
    assert read_pnm(dst).shape == (3, 16, 12)


def test_polar_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "polar", "--in", tmp_path / "nope.pgm", "--out", tmp_path / "o.pgm")
    assert code == 2 and "nope.pgm" in err


def test_missing_required_flag(capsys):
    code, _, err = run(capsys, "polar", "--out", "x.pgm")
    assert code == 2 and "--in" in err


def test_unknown_subcommand(capsys):
    assert run(capsys, "frobnicate")[0] == 2


def test_train_eval_and_determinism(tmp_path, capsys):
    ckpts = []
    for tag in ("a", "b"):
        ckpt = tmp_path / f"{tag}.ckpt"
        code, out, _ = run(capsys, "train", *SMALL_TRAIN, "--seed", "3", "--out", ckpt)
        assert code == 0 and ckpt.exists()
        ckpts.append(ckpt)
    a = (tmp_path / "a.metrics.csv").read_text().splitlines()
    b = (tmp_path / "b.metrics.csv").read_text().splitlines()
    assert a[0] == "epoch,train_loss,val_loss,val_acc,lr"
    assert len(a) == 4 and a == b
    assert ckpts[0].read_bytes() == ckpts[1].read_bytes()

    code, out, _ = run(capsys, "eval", "--ckpt", ckpts[0], "--dataset", "synth", "--synth-size", "48",
                       "--rotate-test")
    assert code == 0 and out.startswith("accuracy ")
    per_class = list(tmp_path.glob("a.*.per_class.csv"))
    assert len(per_class) == 1
    assert per_class[0].read_text().splitlines()[0] == "class,count,correct,accuracy"


def test_train_cy_variant_needs_polar(tmp_path, capsys):
    code, _, err = run(capsys, "train", *SMALL_TRAIN, "--variant", "cy", "--out", tmp_path / "m")
    assert code == 2 and "polar" in err.lower()
    assert not (tmp_path / "m").exists()


def test_config_file_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# small run\ndataset = synth\nsynth-size = 48\nbatch-size = 16\n"
                   "epochs = 1\nquiet = true\nvariant = cy-p\n")
    ckpt = tmp_path / "m.ckpt"
    code, _, _ = run(capsys, "train", "--config", cfg, "--out", ckpt, "--epochs", "2")
    assert code == 0
    assert len((tmp_path / "m.metrics.csv").read_text().splitlines()) == 3
    assert read_config(cfg)["batch_size"] == "16"


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("learning_speed = 3\n")
    code, _, err = run(capsys, "train", "--config", cfg, "--out", tmp_path / "m")
    assert code == 2 and "learning_speed" in err


def test_eval_missing_checkpoint(tmp_path, capsys):
    assert run(capsys, "eval", "--ckpt", tmp_path / "none.ckpt")[0] == 2


def test_rf_table_and_csv(capsys):
    code, out, _ = run(capsys, "rf", "--stack", "3x3/3x2", "--seed-rf", "3x3")
    assert code == 0
    last = out.strip().splitlines()[-1].split()
    assert last[3:5] == ["9", "7"]
    code, out, _ = run(capsys, "rf", "--stack", "3x3,3x3", "--input-h", "16", "--csv")
    lines = out.splitlines()
    assert lines[0] == "layer,kernel,stride,rf_w,rf_h,zero_min,zero_max,cylindrical_min,cylindrical_max"
    assert lines[2] == "2,3x3,1x1,5,5,3,5,5,5"


def test_bench_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code, _, _ = run(capsys, "bench", "--geometry", "1,2,8,8,2", "--repeats", "3", "--out", out)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "geometry,algorithm,median_ms,gflops,threads" and len(lines) == 5


def test_bench_bad_geometry(capsys):
    assert run(capsys, "bench", "--geometry", "1,2,3")[0] == 2


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0 and "all suites passed" in out


def test_selftest_detects_perturbed_winograd(capsys):
    code, out, _ = run(capsys, "selftest", "--perturb-winograd", "--suite", "winograd",
                       "--suite", "conv-oracle")
    assert code == 1
    assert "FAIL  winograd" in out and "PASS  conv-oracle" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "cycnn", "rf", "--stack", "3x3"],
                         capture_output=True, text=True, timeout=120)
    assert res.returncode == 0 and "rf_w" in res.stdout

import json
import os

import numpy as np
import pytest

from conftest import structured_image
from tcgan.cli import main
from tcgan.imgio import load_image, save_image
from tcgan.metrics import ssim


def write_cfg(path, **kv):
    lines = [f"{k} = {v}" for k, v in kv.items()]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


TINY = dict(stages=2, iters=6, gen_steps=3, min_size=12, channels=8, heads=2,
            latent_dim=64, seed=7)


def test_train_cli_writes_outputs(tmp_path):
    img_path = tmp_path / "train.png"
    save_image(str(img_path), structured_image(28))
    cfg = write_cfg(tmp_path / "t.cfg", image=str(img_path),
                    out=str(tmp_path / "run"), **TINY)
    assert main(["train", "--config", cfg]) == 0
    out = tmp_path / "run"
    for fname in ("stage1.ckpt", "stage2.ckpt", "manifest.json", "losses.csv",
                  "losses.png", "train_report.json"):
        assert (out / fname).exists(), fname
    report = json.loads((out / "train_report.json").read_text())
    assert report["task"] == "train"
    assert report["duration_seconds"] == 0.0  # deterministic mode


def test_train_cli_missing_image(tmp_path):
    cfg = write_cfg(tmp_path / "t.cfg", image=str(tmp_path / "nope.png"),
                    out=str(tmp_path / "run"), **TINY)
    assert main(["train", "--config", cfg]) == 2


def test_sample_cli_deterministic_and_diverse(tiny_run, tmp_path):
    ckpt = tiny_run["checkpoint"]
    out1, out2 = str(tmp_path / "s1"), str(tmp_path / "s2")
    assert main(["sample", "--checkpoint", ckpt, "--count", "4",
                 "--seed", "11", "--out", out1]) == 0
    assert main(["sample", "--checkpoint", ckpt, "--count", "4",
                 "--seed", "11", "--out", out2]) == 0
    names = sorted(os.listdir(out1))
    assert sum(n.endswith(".png") for n in names) == 4
    for n in names:
        a = open(os.path.join(out1, n), "rb").read()
        b = open(os.path.join(out2, n), "rb").read()
        assert a == b, f"{n} differs under a fixed seed"
    # diversity: any two samples differ in >= 1% of pixels by > 0.05
    imgs = [load_image(os.path.join(out1, n)) for n in names if n.endswith(".png")]
    for i in range(len(imgs)):
        for j in range(i + 1, len(imgs)):
            frac = np.mean(np.abs(imgs[i] - imgs[j]).max(axis=2) > 0.05)
            assert frac >= 0.01, f"samples {i} and {j} nearly identical"


def test_sample_cli_zero_count(tiny_run, tmp_path):
    out = str(tmp_path / "zero")
    assert main(["sample", "--checkpoint", tiny_run["checkpoint"],
                 "--count", "0", "--seed", "1", "--out", out]) == 0
    assert [f for f in os.listdir(out) if f.endswith(".png")] == []


def test_sample_cli_bad_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    assert main(["sample", "--checkpoint", str(bad), "--count", "1",
                 "--seed", "1", "--out", str(tmp_path / "o")]) == 2


def test_eval_cli_identity_and_mean(tiny_run, tmp_path):
    # a directory against itself: every pair scores 1
    src = tmp_path / "imgs"
    src.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        save_image(str(src / f"im{i}.png"),
                   np.clip(rng.standard_normal((16, 16, 3)) * 0.5, -1, 1))
    out = tmp_path / "ev"
    assert main(["eval", "--dir-a", str(src), "--dir-b", str(src),
                 "--out", str(out)]) == 0
    rows = (out / "eval.csv").read_text().strip().split("\n")
    assert rows[0] == "pair,ssim,rmse"
    vals = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(abs(v - 1.0) < 1e-9 for v in vals)
    report = json.loads((out / "eval_report.json").read_text())
    assert report["metrics"]["mean_ssim"] == pytest.approx(sum(vals) / len(vals))
    assert (out / "eval.png").exists()


def test_eval_cli_empty_dirs(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    out = tmp_path / "ev"
    assert main(["eval", "--dir-a", str(a), "--dir-b", str(b),
                 "--out", str(out)]) == 0
    assert (out / "eval.csv").read_text() == "pair,ssim,rmse\n"


def test_eval_cli_unpaired_listed(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    save_image(str(a / "only_here.png"), np.zeros((8, 8, 3)))
    out = tmp_path / "ev"
    assert main(["eval", "--dir-a", str(a), "--dir-b", str(b),
                 "--out", str(out)]) == 2


def test_schedule_cli_stdout(capsys):
    assert main(["schedule", "--base", "25", "--r", "0.72", "--stages", "6",
                 "--methods", "tcgan"]) == 0
    got = capsys.readouterr().out.strip().split("\n")
    assert got[1] == "tcgan,1,25,25"
    assert got[-1] == "tcgan,6,250,250"


def test_schedule_cli_minimum_two_stages(capsys):
    assert main(["schedule", "--base", "25", "--stages", "2",
                 "--methods", "tcgan"]) == 0


def test_schedule_cli_unknown_method():
    assert main(["schedule", "--methods", "fractal"]) == 2


def test_schedule_cli_writes_files_and_figure(tmp_path):
    out = tmp_path / "sch"
    assert main(["schedule", "--base", "25x20", "--out", str(out)]) == 0
    text = (out / "schedule.csv").read_text()
    assert "tcgan,6,250,200" in text
    assert (out / "schedule.png").exists()
    assert (out / "schedule_report.json").exists()


def test_schedule_cli_byte_reproducible(tmp_path):
    outs = []
    for d in ("r1", "r2"):
        out = tmp_path / d
        assert main(["schedule", "--base", "25", "--out", str(out)]) == 0
        outs.append(out)
    for f in ("schedule.csv", "schedule.png"):
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_harmonize_cli_self_injection(tiny_run, tmp_path):
    # the training image pushed through any stage reproduces itself
    n_stages = tiny_run["cfg"].stages
    for k in range(1, n_stages + 1):
        out = tmp_path / f"h{k}"
        assert main(["harmonize", "--checkpoint", tiny_run["checkpoint"],
                     "--composite", tiny_run["image_path"],
                     "--inject-stage", str(k), "--out", str(out)]) == 0
        report = json.loads((out / "harmonize_report.json").read_text())
        assert report["metrics"]["ssim_vs_composite"] >= 0.7, f"stage {k}"


def test_harmonize_cli_stage_out_of_range(tiny_run, tmp_path):
    assert main(["harmonize", "--checkpoint", tiny_run["checkpoint"],
                 "--composite", tiny_run["image_path"],
                 "--inject-stage", "9", "--out", str(tmp_path / "h")]) == 2


def test_harmonize_cli_mask_blending(tiny_run, tmp_path):
    mask = np.full((28, 28, 3), -1.0)
    mask[8:20, 8:20] = 1.0
    mask_path = str(tmp_path / "mask.png")
    save_image(mask_path, mask)
    out = tmp_path / "hm"
    assert main(["harmonize", "--checkpoint", tiny_run["checkpoint"],
                 "--composite", tiny_run["image_path"], "--inject-stage", "2",
                 "--mask", mask_path, "--feather", "--out", str(out)]) == 0
    assert (out / "harmonized.png").exists()


def test_sr_cli_identity_target(tmp_path):
    # target == input size: the pipeline reduces to reconstruction, which
    # must stay close to the input
    img_path = tmp_path / "in.png"
    save_image(str(img_path), structured_image(28))
    cfg = write_cfg(tmp_path / "s.cfg", **{**TINY, "iters": 120})
    out = tmp_path / "sr"
    assert main(["sr", "--image", str(img_path), "--target-max", "28",
                 "--config", cfg, "--out", str(out)]) == 0
    got = load_image(str(out / "sr.png"))
    ref = load_image(str(img_path))
    assert got.shape == ref.shape
    assert ssim(got, ref) >= 0.7


def test_sr_cli_target_below_input(tmp_path):
    img_path = tmp_path / "in.png"
    save_image(str(img_path), structured_image(28))
    cfg = write_cfg(tmp_path / "s.cfg", **TINY)
    assert main(["sr", "--image", str(img_path), "--target-max", "20",
                 "--config", cfg, "--out", str(tmp_path / "sr")]) == 2

"""Application tasks behind the CLI subcommands.

Each task writes its outputs plus a TaskReport JSON (atomically, next to
the outputs) and, wherever a CSV is produced, a rendered figure
alongside it.
"""

import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import plots
from .config import ConfigError
from .grad import Tensor, no_trace, ops
from .imgio import load_image, save_image
from .metrics import rmse, run_external_metric, ssim
from .schedule import (
    build_schedule,
    consingan_schedule,
    emit_schedule_table,
    resample_image,
    singan_schedule,
)
from .training import Trainer, load_checkpoint, train_all


@dataclass
class TaskReport:
    task: str
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    duration_seconds: float = 0.0


def write_report(report, path):
    # outputs are recorded by basename: they sit next to the report, and
    # identical runs into different directories stay byte-identical
    report.outputs = [os.path.basename(p) for p in report.outputs]
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(json.dumps(asdict(report), sort_keys=True, indent=2) + "\n")
    os.replace(tmp, path)
    return path


def _finish(report, t0, deterministic, out_dir, name):
    report.duration_seconds = 0.0 if deterministic else time.monotonic() - t0
    return write_report(report, os.path.join(out_dir, name))


# ---------------------------------------------------------------------------
# train

def run_train(image_path, cfg, out_dir):
    t0 = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    image = load_image(image_path)
    manifest, trainer = train_all(image, cfg, out_dir=out_dir)
    fig = plots.save_loss_figure(manifest, os.path.join(out_dir, "losses.png"))
    report = TaskReport(
        task="train",
        inputs={"image": str(image_path), "seed": cfg.seed},
        outputs=[r["checkpoint_path"] for r in manifest.stages]
        + [os.path.join(out_dir, "manifest.json"),
           os.path.join(out_dir, "losses.csv"), fig],
        metrics={
            "final_rec_loss": manifest.stages[-1]["losses"]["rec"][-1],
            "final_size": list(manifest.stages[-1]["size"]),
        },
    )
    _finish(report, t0, cfg.deterministic, out_dir, "train_report.json")
    return manifest


# ---------------------------------------------------------------------------
# sample

def run_sample(checkpoint_path, count, seed, out_dir, deterministic=True):
    t0 = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    stack, _, cfg = load_checkpoint(checkpoint_path)
    rng = np.random.default_rng(seed)
    paths = []
    with no_trace():
        for k in range(count):
            z = Tensor(rng.standard_normal(cfg.latent_dim).astype(cfg.dtype))
            img = stack.generate(z=z, mode="random", rng=rng)
            paths.append(
                save_image(os.path.join(out_dir, f"sample_{k:03d}.png"), img.data)
            )
    report = TaskReport(
        task="sample",
        inputs={"checkpoint": str(checkpoint_path), "count": count, "seed": seed},
        outputs=paths,
    )
    _finish(report, t0, deterministic, out_dir, "sample_report.json")
    return paths


# ---------------------------------------------------------------------------
# super-resolution

def run_sr(image_path, target_max, cfg, out_dir):
    """Train a pyramid whose final stage lands on target_max (long side),
    then emit the final-stage reconstruction."""
    t0 = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    image = load_image(image_path)
    if target_max < max(image.shape[0], image.shape[1]):
        raise ValueError(
            f"target {target_max} is below the input's long side "
            f"{max(image.shape[0], image.shape[1])}"
        )
    cfg.max_size = int(target_max)
    manifest, trainer = train_all(image, cfg, out_dir=out_dir)
    out = trainer.reconstruct(cfg.stages)
    sr_path = save_image(os.path.join(out_dir, "sr.png"), out)
    fig = plots.save_loss_figure(manifest, os.path.join(out_dir, "losses.png"))
    reference = resample_image(image, out.shape[:2], "up")
    report = TaskReport(
        task="sr",
        inputs={"image": str(image_path), "target_max": int(target_max),
                "seed": cfg.seed},
        outputs=[sr_path, os.path.join(out_dir, "manifest.json"),
                 os.path.join(out_dir, "losses.csv"), fig],
        metrics={
            "output_size": list(out.shape[:2]),
            "ssim_vs_upsampled_input": ssim(out, reference),
        },
    )
    _finish(report, t0, cfg.deterministic, out_dir, "sr_report.json")
    return sr_path, report


# ---------------------------------------------------------------------------
# harmonization

def reconstruction_features_at(stack, k):
    """Features block k sees on the reconstruction path, upsampled to the
    stage-k resolution (bit-equal to the normal chain, which upsamples
    them itself)."""
    size_k = stack.schedule.sizes[k - 1]
    with no_trace():
        if k == 1:
            f = stack.global_net.forward(Tensor(stack.noise.z_rec))
        else:
            f = stack.features(Tensor(stack.noise.z_rec), k - 1)
        if f.shape[:2] != tuple(size_k):
            f = ops.upsample_bilinear(f, size_k)
    return f.data


def fit_feature_lift(stack, k, recon):
    """Fixed linear lift RGB -> C for stage k, fitted by least squares on
    the frozen model: reconstruction pixels against the features block k
    receives. Nothing is trained; the map is a per-checkpoint constant."""
    size_k = stack.schedule.sizes[k - 1]
    feats = reconstruction_features_at(stack, k)
    x_k = resample_image(recon, size_k, "down")
    ones = np.ones((size_k[0] * size_k[1], 1))
    design = np.concatenate([x_k.reshape(-1, 3).astype(np.float64), ones], axis=1)
    target = feats.reshape(-1, feats.shape[2]).astype(np.float64)
    lift, *_ = np.linalg.lstsq(design, target, rcond=None)
    return lift, feats, x_k


def run_harmonize(checkpoint_path, composite_path, inject_stage, out_dir,
                  mask_path=None, feather=False, deterministic=True):
    """Re-render a naive composite: its deviation from the model's own
    reconstruction is lifted into feature space at the injection stage and
    carried through the remaining (frozen) blocks. A zero deviation
    reproduces the reconstruction exactly."""
    t0 = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    stack, _, cfg = load_checkpoint(checkpoint_path)
    n = stack.num_stages
    if not 1 <= inject_stage <= n:
        raise ValueError(f"inject stage {inject_stage} out of range 1..{n}")
    composite = load_image(composite_path)
    ch, cw = composite.shape[:2]
    th, tw = stack.schedule.sizes[-1]
    if abs(ch / cw - th / tw) > 0.05:
        raise ValueError(
            f"composite aspect {ch}x{cw} does not match the trained aspect {th}x{tw}"
        )
    k = inject_stage
    with no_trace():
        recon = stack.generate(mode="reconstruction").data
    lift, feats, x_k = fit_feature_lift(stack, k, recon)
    comp_k = resample_image(composite, stack.schedule.sizes[k - 1], "down")
    delta = (comp_k - x_k).reshape(-1, 3).astype(np.float64) @ lift[:3]
    injected = feats + delta.reshape(feats.shape).astype(feats.dtype)

    with no_trace():
        f = stack.continue_features(Tensor(injected), k, n)
        out = stack.heads[n - 1](f).data

    if mask_path:
        with no_trace():
            background = stack.generate(mode="reconstruction").data
        mask = (load_image(mask_path).mean(axis=2) + 1.0) / 2.0
        mask = np.clip(resample_image(mask[..., None] * 2 - 1, out.shape[:2], "down"), -1, 1)
        mask = (mask[:, :, 0] + 1.0) / 2.0
        if feather:
            small_m = resample_image(mask[..., None] * 2 - 1,
                                     (max(2, out.shape[0] // 8), max(2, out.shape[1] // 8)), "down")
            mask = (np.clip(resample_image(small_m, out.shape[:2], "up"), -1, 1)[:, :, 0] + 1) / 2.0
        out = mask[..., None] * out + (1.0 - mask[..., None]) * background

    out_path = save_image(os.path.join(out_dir, "harmonized.png"), out)
    comp_ref = resample_image(composite, out.shape[:2], "down")
    report = TaskReport(
        task="harmonize",
        inputs={"checkpoint": str(checkpoint_path),
                "composite": str(composite_path), "inject_stage": inject_stage,
                "mask": str(mask_path or ""), "feather": bool(feather)},
        outputs=[out_path],
        metrics={"ssim_vs_composite": ssim(out, comp_ref)},
    )
    _finish(report, t0, deterministic, out_dir, "harmonize_report.json")
    return out_path, report


# ---------------------------------------------------------------------------
# eval

_IMAGE_EXTS = (".png", ".jpg", ".jpeg")


def _image_names(d):
    return sorted(
        f for f in os.listdir(d) if f.lower().endswith(_IMAGE_EXTS)
    )


def run_eval(dir_a, dir_b, out_dir, ext_name="", ext_cmd="", deterministic=True):
    """Pairwise SSIM over same-named files; CSV + figure + report."""
    t0 = time.monotonic()
    os.makedirs(out_dir, exist_ok=True)
    names_a = _image_names(dir_a)
    names_b = _image_names(dir_b)
    unpaired = sorted(set(names_a) ^ set(names_b))
    if unpaired:
        raise ValueError(
            "unpaired files across directories: " + ", ".join(unpaired)
        )
    rows = []
    for name in names_a:
        a = load_image(os.path.join(dir_a, name))
        b = load_image(os.path.join(dir_b, name))
        row = {"pair": name, "ssim": ssim(a, b), "rmse": rmse(a, b)}
        if ext_name and ext_cmd:
            row[ext_name] = run_external_metric(
                ext_name, ext_cmd, os.path.join(dir_a, name), os.path.join(dir_b, name)
            ).value
        rows.append(row)

    csv_path = os.path.join(out_dir, "eval.csv")
    cols = ["pair", "ssim", "rmse"] + ([ext_name] if ext_name and ext_cmd else [])
    with open(csv_path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fh.write(",".join(
                row["pair"] if c == "pair" else f"{row[c]:.8g}" for c in cols
            ) + "\n")
    fig = plots.save_eval_figure(
        [r["pair"] for r in rows], [r["ssim"] for r in rows],
        os.path.join(out_dir, "eval.png"),
    )
    metrics = {}
    if rows:
        metrics["mean_ssim"] = sum(r["ssim"] for r in rows) / len(rows)
        metrics["mean_rmse"] = sum(r["rmse"] for r in rows) / len(rows)
        if ext_name and ext_cmd:
            metrics[f"mean_{ext_name}"] = sum(r[ext_name] for r in rows) / len(rows)
    report = TaskReport(
        task="eval",
        inputs={"dir_a": str(dir_a), "dir_b": str(dir_b), "pairs": len(rows)},
        outputs=[csv_path, fig],
        metrics=metrics,
    )
    _finish(report, t0, deterministic, out_dir, "eval_report.json")
    return rows, report


# ---------------------------------------------------------------------------
# schedule comparison

SCHEDULE_METHODS = ("tcgan", "singan", "consingan")


def run_schedule(base, r, stages, methods, out_dir=None):
    """Schedule table for the requested methods; geometric methods anchor
    their final stage at the native schedule's endpoint."""
    for m in methods:
        if m not in SCHEDULE_METHODS:
            raise ConfigError(
                f"unknown schedule method {m!r}; valid: {', '.join(SCHEDULE_METHODS)}"
            )
    native = build_schedule(base, r, stages)
    named = []
    for m in methods:
        if m == "tcgan":
            named.append((m, native))
        elif m == "singan":
            named.append((m, singan_schedule(native.sizes[-1], r, stages)))
        else:
            named.append((m, consingan_schedule(native.sizes[-1], r, stages)))
    csv_text = emit_schedule_table(named)
    outputs = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, "schedule.csv")
        with open(csv_path, "w", newline="") as fh:
            fh.write(csv_text)
        fig = plots.save_schedule_figure(named, os.path.join(out_dir, "schedule.png"))
        outputs = [csv_path, fig]
        write_report(
            TaskReport(
                task="schedule",
                inputs={"base": list(base), "r": r, "stages": stages,
                        "methods": list(methods)},
                outputs=outputs,
            ),
            os.path.join(out_dir, "schedule_report.json"),
        )
    return csv_text, outputs

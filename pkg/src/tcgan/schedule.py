"""Stage-resolution schedules and the training-image pyramid.

The native schedule grows the base size by 1 + r*(i+1)*ln(i)/(1+e^-i) at
stage i, applied per dimension with round-half-up. Geometric (SinGAN) and
log-warped geometric (ConSinGAN) schedules are provided for comparison
tables; both anchor the final stage at the maximum size instead.
"""

import io
import math
from dataclasses import dataclass, field

import numpy as np


class ScheduleError(ValueError):
    """Invalid scaling parameters or a degenerate schedule."""


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def scale_factor(i, r):
    """Multiplier applied to the base size at stage ``i`` (1-indexed)."""
    if i < 1:
        raise ScheduleError(f"stage index must be >= 1, got {i}")
    if r <= 0:
        raise ScheduleError(f"scale scalar must be positive, got {r}")
    return 1.0 + r * (i + 1) * math.log(i) / (1.0 + math.exp(-i))


@dataclass
class ScaleSchedule:
    """Per-stage (height, width) targets for one training run."""

    base: tuple
    r: float
    sizes: list = field(default_factory=list)
    method: str = "tcgan"

    @property
    def num_stages(self):
        return len(self.sizes)

    def __post_init__(self):
        self.base = (int(self.base[0]), int(self.base[1]))
        self.sizes = [(int(h), int(w)) for h, w in self.sizes]


def build_schedule(base, r, num_stages):
    """Grow ``base`` (h, w) through ``num_stages`` stages via the scaling
    formula, per dimension, round-half-up."""
    h0, w0 = int(base[0]), int(base[1])
    if h0 < 4 or w0 < 4:
        raise ScheduleError(f"base dimensions must be >= 4, got {base}")
    if num_stages < 2:
        raise ScheduleError(f"need at least 2 stages, got {num_stages}")
    sizes = []
    for i in range(1, num_stages + 1):
        f = scale_factor(i, r)
        sizes.append((_round_half_up(h0 * f), _round_half_up(w0 * f)))
    for a, b in zip(sizes, sizes[1:]):
        if a == b:
            raise ScheduleError(
                f"degenerate schedule: consecutive stages both sized {a}"
            )
    return ScaleSchedule(base=(h0, w0), r=r, sizes=sizes, method="tcgan")


def schedule_for_target(target, r, num_stages):
    """Schedule whose final stage lands exactly on ``target`` (h, w).

    The base is target / scale_factor(N) per dimension; because of double
    rounding the recomputed endpoint can miss by a pixel, so the final
    stage is pinned to the requested size.
    """
    th, tw = int(target[0]), int(target[1])
    f = scale_factor(num_stages, r)
    base = (max(4, _round_half_up(th / f)), max(4, _round_half_up(tw / f)))
    sched = build_schedule(base, r, num_stages)
    sched.sizes[-1] = (th, tw)
    if sched.sizes[-1] == sched.sizes[-2]:
        raise ScheduleError(
            f"degenerate schedule: target {target} too small for {num_stages} stages"
        )
    return sched


def singan_schedule(max_size, r, num_stages):
    """Geometric schedule size_i = max * r^(N-i), endpoint anchored at max."""
    mh, mw = int(max_size[0]), int(max_size[1])
    sizes = [
        (_round_half_up(mh * r ** (num_stages - i)), _round_half_up(mw * r ** (num_stages - i)))
        for i in range(1, num_stages + 1)
    ]
    return ScaleSchedule(base=sizes[0], r=r, sizes=sizes, method="singan")


def consingan_schedule(max_size, r, num_stages):
    """Log-warped geometric schedule: exponent ((N-1)/ln N) * ln(N-i) + 1
    for i < N, endpoint anchored at max."""
    mh, mw = int(max_size[0]), int(max_size[1])
    sizes = []
    for i in range(1, num_stages):
        e = (num_stages - 1) / math.log(num_stages) * math.log(num_stages - i) + 1.0
        sizes.append((_round_half_up(mh * r**e), _round_half_up(mw * r**e)))
    sizes.append((mh, mw))
    return ScaleSchedule(base=sizes[0], r=r, sizes=sizes, method="consingan")


def emit_schedule_table(named_schedules):
    """CSV text (method, stage, height, width) for one or more schedules."""
    if not named_schedules:
        raise ScheduleError("need at least one schedule")
    buf = io.StringIO()
    buf.write("method,stage,height,width\n")
    for name, sched in named_schedules:
        if not name:
            raise ScheduleError("schedule name must be non-empty")
        for idx, (h, w) in enumerate(sched.sizes, start=1):
            buf.write(f"{name},{idx},{h},{w}\n")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# resampling (plain numpy, not differentiated; the generator's internal
# upsampling lives in grad.ops)

def _cubic_kernel(x):
    # Keys cubic, a = -0.5
    ax = np.abs(x)
    ax2 = ax * ax
    ax3 = ax2 * ax
    out = np.where(
        ax <= 1.0,
        1.5 * ax3 - 2.5 * ax2 + 1.0,
        np.where(ax < 2.0, -0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0, 0.0),
    )
    return out


def _linear_kernel(x):
    ax = np.abs(x)
    return np.where(ax < 1.0, 1.0 - ax, 0.0)


def _weight_matrix(n_in, n_out, kernel, support):
    """Separable resampling matrix with edge replication; when shrinking,
    the kernel is widened by the inverse scale (antialiasing)."""
    scale = n_out / n_in
    if scale < 1.0:
        kscale = scale
        width = support / scale
    else:
        kscale = 1.0
        width = support
    m = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        center = (i + 0.5) / scale - 0.5
        lo = int(math.floor(center - width + 0.5))
        idx = np.arange(lo, lo + int(math.ceil(2 * width)) + 1)
        w = kernel((idx - center) * kscale)
        s = w.sum()
        if s != 0:
            w = w / s
        np.add.at(m[i], np.clip(idx, 0, n_in - 1), w)
    return m


def resize(img, target, kernel="cubic"):
    """Separable resize of an (H, W, C) or (H, W) float array."""
    th, tw = int(target[0]), int(target[1])
    arr = np.asarray(img, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[:, :, None]
    h, w, _ = arr.shape
    if (h, w) == (th, tw):
        out = arr.copy()
    else:
        kfn, support = (
            (_cubic_kernel, 2.0) if kernel == "cubic" else (_linear_kernel, 1.0)
        )
        rh = _weight_matrix(h, th, kfn, support)
        rw = _weight_matrix(w, tw, kfn, support)
        out = np.tensordot(rh, arr, (1, 0))          # (th, W, C)
        out = np.tensordot(rw, out, (1, 1))          # (tw, th, C)
        out = out.transpose(1, 0, 2)
    if squeeze:
        out = out[:, :, 0]
    return out


def resample_image(img, target, mode):
    """Resample an image in [-1, 1]: bicubic when shrinking the training
    image, bilinear when growing; output clamped back to [-1, 1]."""
    if mode not in ("down", "up"):
        raise ValueError(f"mode must be 'down' or 'up', got {mode!r}")
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ScheduleError(f"target dimensions must be >= 1, got {target}")
    arr = np.asarray(img)
    if arr.shape[:2] == (th, tw):
        return arr.astype(np.float32, copy=True)
    out = resize(arr, (th, tw), kernel="cubic" if mode == "down" else "linear")
    return np.clip(out, -1.0, 1.0).astype(np.float32)


def build_pyramid(img, sched):
    """Training image resampled to every stage size, values in [-1, 1].

    Each level comes straight from the full-resolution image; levels
    larger than the source (super-resolution schedules) are upsampled.
    """
    arr = np.asarray(img, dtype=np.float32)
    src = arr.shape[0] * arr.shape[1]
    levels = []
    for h, w in sched.sizes:
        mode = "down" if h * w <= src else "up"
        levels.append(resample_image(arr, (h, w), mode))
    return levels

"""Image quality metrics.

SSIM follows the canonical formulation: luminance conversion, 11x11
Gaussian window (sigma 1.5), stability constants (0.01*R)^2 and
(0.03*R)^2, local statistics at every pixel with symmetric edge padding,
and the mean of the local index map. SIFID/LPIPS need large pretrained
feature extractors and are delegated to external tools through a command
template.
"""

import shlex
import subprocess
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass
class SsimConfig:
    window_size: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 2.0  # images live in [-1, 1]


def gaussian_window(size=11, sigma=1.5):
    """Normalized 2-D Gaussian window (sums to 1)."""
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def to_luminance(img):
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            return arr[:, :, 0]
        if arr.shape[2] == 3:
            return arr @ LUMA
        raise ValueError(f"expected 1 or 3 channels, got {arr.shape[2]}")
    return arr


def _local_windows(x, size):
    pad = size // 2
    padded = np.pad(x, pad, mode="symmetric")
    return sliding_window_view(padded, (size, size))


def ssim(a, b, config=None):
    """Mean local SSIM between two same-size images in [-1, 1]."""
    cfg = config or SsimConfig()
    xa = to_luminance(a)
    xb = to_luminance(b)
    if xa.shape != xb.shape:
        raise ValueError(f"image dimensions differ: {xa.shape} vs {xb.shape}")
    w = gaussian_window(cfg.window_size, cfg.sigma)
    wa = _local_windows(xa, cfg.window_size)
    wb = _local_windows(xb, cfg.window_size)
    mu_a = np.einsum("ijkl,kl->ij", wa, w)
    mu_b = np.einsum("ijkl,kl->ij", wb, w)
    m_aa = np.einsum("ijkl,ijkl,kl->ij", wa, wa, w)
    m_bb = np.einsum("ijkl,ijkl,kl->ij", wb, wb, w)
    m_ab = np.einsum("ijkl,ijkl,kl->ij", wa, wb, w)
    var_a = m_aa - mu_a * mu_a
    var_b = m_bb - mu_b * mu_b
    cov = m_ab - mu_a * mu_b
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def rmse(a, b):
    """Root mean squared difference over all elements."""
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if xa.shape != xb.shape:
        raise ValueError(f"image dimensions differ: {xa.shape} vs {xb.shape}")
    return float(np.sqrt(np.mean((xa - xb) ** 2)))


@dataclass
class ExternalMetricResult:
    name: str
    value: float
    provenance: str


class ExternalMetricError(RuntimeError):
    pass


def run_external_metric(name, cmd_template, path_a, path_b, timeout=600):
    """Run an out-of-process metric tool; its stdout must be one real.

    The template uses {a} and {b} placeholders for the two image paths.
    """
    cmd = [
        part.format(a=str(path_a), b=str(path_b))
        for part in shlex.split(cmd_template)
    ]
    try:
        proc = subprocess.run(
            cmd, capture_output=True, text=True, timeout=timeout, check=False
        )
    except FileNotFoundError:
        raise ExternalMetricError(
            f"{name}: tool {cmd[0]!r} is not installed"
        ) from None
    if proc.returncode != 0:
        raise ExternalMetricError(
            f"{name}: {' '.join(cmd)} exited {proc.returncode}: {proc.stderr.strip()}"
        )
    text = proc.stdout.strip()
    try:
        value = float(text)
    except ValueError:
        raise ExternalMetricError(
            f"{name}: could not parse a real number from output {text!r}"
        ) from None
    if not np.isfinite(value):
        raise ExternalMetricError(f"{name}: non-finite value {value}")
    return ExternalMetricResult(name=name, value=value, provenance=" ".join(cmd))

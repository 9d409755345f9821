"""PNG/JPEG loading and saving; pixel values live in [-1, 1] in memory."""

import numpy as np
from PIL import Image


def from_uint8(arr):
    return (arr.astype(np.float32) / 255.0) * 2.0 - 1.0


def to_uint8(arr):
    """[-1, 1] float to 8-bit, round-half-up."""
    v = (np.asarray(arr, dtype=np.float64) + 1.0) / 2.0 * 255.0
    return np.clip(np.floor(v + 0.5), 0, 255).astype(np.uint8)


def load_image(path):
    """Read an image as (H, W, 3) float32 in [-1, 1]."""
    with Image.open(path) as im:
        rgb = im.convert("RGB")
        return from_uint8(np.asarray(rgb))


def save_image(path, arr):
    """Write a [-1, 1] float image as 8-bit PNG."""
    Image.fromarray(to_uint8(arr), mode="RGB").save(path, format="PNG")
    return path

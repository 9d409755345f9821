import numpy as np
import pytest

from tcgan.imgio import save_image
from tcgan.training import TrainConfig, train_all


def structured_image(n=28, m=None):
    """Deterministic test image: gradients, a disc, and stripes."""
    m = m or n
    y, x = np.mgrid[0:n, 0:m]
    y = y / n
    x = x / m
    r = np.sqrt((x - 0.55) ** 2 + (y - 0.4) ** 2)
    img = np.stack(
        [
            0.8 * np.cos(3 * x) - 0.3 + 0.9 * (r < 0.25),
            0.6 * y * 2 - 0.7 + 0.5 * np.sin(12 * x),
            np.where(r < 0.25, 0.8, -0.5) + 0.2 * np.sin(9 * y),
        ],
        axis=-1,
    )
    return np.clip(img, -1, 1).astype(np.float32)


def tiny_config(**overrides):
    """Small but trainable config: 12 -> 28 px, 2 stages."""
    base = dict(
        stages=2, iters=120, gen_steps=3, min_size=12, channels=8, heads=2,
        latent_dim=64, seed=7,
    )
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def tiny_run(tmp_path_factory):
    """One tiny trained model shared by CLI/task tests."""
    out = tmp_path_factory.mktemp("tiny_run")
    img = structured_image(28)
    img_path = str(out / "train.png")
    save_image(img_path, img)
    cfg = tiny_config()
    manifest, trainer = train_all(img, cfg, out_dir=str(out))
    return {
        "out": str(out),
        "image": img,
        "image_path": img_path,
        "manifest": manifest,
        "trainer": trainer,
        "checkpoint": str(out / "stage2.ckpt"),
        "cfg": cfg,
    }

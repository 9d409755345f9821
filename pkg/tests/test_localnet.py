import numpy as np
import pytest

from tcgan.globalnet import GlobalNetConfig
from tcgan.grad import Tensor
from tcgan.localnet import GeneratorStack, LocalBlock, RgbHead
from tcgan.schedule import build_schedule


def small_stack(seed=0, channels=4):
    cfg = GlobalNetConfig(latent_dim=16, tokens=6, channels=channels, heads=2, blocks=1)
    sched = build_schedule((6, 6), 0.72, 3)
    return GeneratorStack.build(cfg, sched, np.random.default_rng(seed))


def zero_block(block):
    for layer in (block.conv1, block.conv2, block.conv3):
        layer.w.data[:] = 0
        layer.b.data[:] = 0


def test_block_zero_trunk_is_identity_on_upsample():
    rng = np.random.default_rng(1)
    block = LocalBlock(4, rng)
    zero_block(block)
    f = Tensor(rng.standard_normal((6, 6, 4)).astype(np.float32))
    out = block(f, (14, 14))
    from tcgan.grad import ops

    up = ops.upsample_bilinear(f, (14, 14))
    assert np.array_equal(out.data, up.data)


def test_block_output_size_follows_schedule():
    sched = build_schedule((25, 25), 0.72, 6)
    rng = np.random.default_rng(2)
    block = LocalBlock(24, rng)
    f = Tensor(rng.standard_normal((25, 25, 24)).astype(np.float32))
    out = block(f, sched.sizes[1])
    assert out.shape == (58, 58, 24)


def test_block_deterministic():
    rng = np.random.default_rng(3)
    block = LocalBlock(4, rng)
    f = Tensor(rng.standard_normal((6, 6, 4)).astype(np.float32))
    noise = Tensor(rng.standard_normal((9, 9, 4)).astype(np.float32))
    a = block(f, (9, 9), noise, 0.5).data
    b = block(f, (9, 9), noise, 0.5).data
    assert np.array_equal(a, b)


def test_block_noise_shape_mismatch():
    rng = np.random.default_rng(4)
    block = LocalBlock(4, rng)
    f = Tensor(rng.standard_normal((6, 6, 4)).astype(np.float32))
    bad = Tensor(rng.standard_normal((6, 6, 4)).astype(np.float32))
    with pytest.raises(ValueError, match="noise shape"):
        block(f, (9, 9), bad, 1.0)


def test_rgb_head_zero_weights_mid_gray():
    head = RgbHead(4, np.random.default_rng(5))
    head.conv.w.data[:] = 0
    head.conv.b.data[:] = 0
    f = Tensor(np.random.default_rng(6).standard_normal((7, 7, 4)).astype(np.float32))
    out = head(f)
    assert out.shape == (7, 7, 3)
    assert np.array_equal(out.data, np.zeros((7, 7, 3), dtype=np.float32))


def test_rgb_head_bounded():
    head = RgbHead(4, np.random.default_rng(7))
    f = Tensor(np.random.default_rng(8).standard_normal((7, 7, 4)).astype(np.float32) * 50)
    out = head(f).data
    assert out.min() >= -1.0 and out.max() <= 1.0


# -- GeneratorStack -----------------------------------------------------------

def test_generate_stage1_size():
    stack = small_stack()
    rng = np.random.default_rng(9)
    img = stack.generate(
        z=Tensor(rng.standard_normal(16).astype(np.float32)),
        upto_stage=1, mode="random", rng=rng,
    )
    assert img.shape == (6, 6, 3)


def test_generate_stage_out_of_range():
    stack = small_stack()
    with pytest.raises(ValueError, match="out of range"):
        stack.features(Tensor(np.zeros(16, dtype=np.float32)), 5)


def test_generate_reconstruction_deterministic():
    stack = small_stack(seed=10)
    a = stack.generate(upto_stage=1, mode="reconstruction").data
    b = stack.generate(upto_stage=1, mode="reconstruction").data
    assert np.array_equal(a, b)


def test_generate_distinct_latents_differ():
    stack = small_stack(seed=11)
    rng = np.random.default_rng(12)
    z1 = Tensor(rng.standard_normal(16).astype(np.float32))
    z2 = Tensor(rng.standard_normal(16).astype(np.float32))
    a = stack.generate(z=z1, upto_stage=1, mode="random", rng=np.random.default_rng(1)).data
    b = stack.generate(z=z2, upto_stage=1, mode="random", rng=np.random.default_rng(1)).data
    frac = np.mean(np.abs(a - b) > 0.05)
    assert frac >= 0.01


def test_generate_unknown_mode():
    stack = small_stack()
    with pytest.raises(ValueError, match="unknown mode"):
        stack.generate(z=Tensor(np.zeros(16, dtype=np.float32)), mode="dream")


def test_expand_stage_requires_training():
    stack = small_stack()
    with pytest.raises(RuntimeError, match="not finished training"):
        stack.expand_stage()


def test_expand_stage_freezes_and_copies():
    stack = small_stack(seed=13)
    stack.trained_stages = 1
    prev_block_values = {n: p.data.copy() for n, p in stack.blocks[0].named("b")}
    stack.expand_stage()
    assert stack.num_stages == 2
    # existing parameters frozen, including the global net
    assert all(not p.trainable for p in stack.global_net.parameters())
    assert all(not p.trainable for _, p in stack.blocks[0].named("b"))
    # new block bit-equal to its predecessor, and trainable
    for (n, p_new), (_, old) in zip(
        stack.blocks[1].named("b"), prev_block_values.items()
    ):
        assert np.array_equal(p_new.data, prev_block_values[n.replace("b.", "b.")])
        assert p_new.trainable
    # copies do not alias the originals
    stack.blocks[1].conv1.w.data[:] = 99
    assert not np.array_equal(stack.blocks[0].conv1.w.data, stack.blocks[1].conv1.w.data)


def test_stage_parameters_include_global_only_at_stage1():
    stack = small_stack()
    n1 = len(stack.stage_parameters(1))
    stack.trained_stages = 1
    stack.expand_stage()
    n2 = len(stack.stage_parameters(2))
    assert n1 == len(stack.global_net.parameters()) + n2

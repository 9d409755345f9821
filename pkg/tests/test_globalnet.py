import numpy as np
import pytest

from tcgan.globalnet import GlobalNet, GlobalNetConfig, attention_head
from tcgan.grad import Tape, Tensor, check_function, ops


def small_cfg(**kw):
    base = dict(latent_dim=16, tokens=6, channels=4, heads=2, blocks=1)
    base.update(kw)
    return GlobalNetConfig(**base)


def make_net(cfg=None, seed=0, dtype=np.float32):
    return GlobalNet(cfg or small_cfg(), np.random.default_rng(seed), dtype)


def zero_residual_branches(net):
    for blk in net.blocks:
        blk.wo.data[:] = 0
        blk.bo.data[:] = 0
        blk.w2.data[:] = 0
        blk.b2.data[:] = 0


def test_map_latent_zero_input_zero_output():
    net = make_net()
    g = net.map_latent(Tensor(np.zeros(16, dtype=np.float32)))
    assert np.array_equal(g.data, np.zeros((6, 24), dtype=np.float32))


def test_map_latent_paper_scale_shapes():
    cfg = GlobalNetConfig(latent_dim=1024, tokens=25, channels=24, heads=6, blocks=1)
    net = GlobalNet(cfg, np.random.default_rng(0))
    g = net.map_latent(Tensor(np.zeros(1024, dtype=np.float32)))
    assert g.shape == (25, 600)


def test_map_latent_rejects_wrong_length():
    net = make_net()
    with pytest.raises(ValueError, match="length 16"):
        net.map_latent(Tensor(np.zeros(10)))


def test_map_latent_distinct_latents_distinct_outputs():
    net = make_net()
    rng = np.random.default_rng(1)
    g1 = net.map_latent(Tensor(rng.standard_normal(16).astype(np.float32)))
    g2 = net.map_latent(Tensor(rng.standard_normal(16).astype(np.float32)))
    assert not np.allclose(g1.data, g2.data)


# -- SLN ---------------------------------------------------------------------

def test_sln_pure_normalization():
    net = make_net()
    p = net.blocks[0].sln
    p.wa.data[:] = 0
    p.wb.data[:] = 0  # alpha = 0, beta = 1 -> plain layer norm
    rng = np.random.default_rng(2)
    h = Tensor(rng.standard_normal((6, 24)).astype(np.float32) * 3 + 1)
    g = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    out = net.sln(h, g, 0).data
    assert np.allclose(out.mean(axis=-1), 0.0, atol=1e-5)
    assert np.allclose(out.var(axis=-1), 1.0, atol=1e-3)


def test_sln_beta_zero_kills_input_path():
    net = make_net()
    p = net.blocks[0].sln
    p.wb.data[:] = 0
    p.bb.data[:] = 0
    rng = np.random.default_rng(3)
    g = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    h1 = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    h2 = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    assert np.allclose(net.sln(h1, g, 0).data, net.sln(h2, g, 0).data, atol=1e-6)


def test_sln_beta_zero_gives_zero_gradient_to_input():
    net = make_net()
    p = net.blocks[0].sln
    p.wb.data[:] = 0
    p.bb.data[:] = 0
    rng = np.random.default_rng(4)
    h = Tensor(rng.standard_normal((6, 24)).astype(np.float32), requires_grad=True)
    g = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    with Tape() as tape:
        loss = ops.sum_(net.sln(h, g, 0))
    (gh,) = tape.grad(loss, [h])
    assert np.allclose(gh.data, 0.0, atol=1e-7)


def test_sln_hand_case():
    # one token [1, 3] with alpha = 0.5, beta = 2: mean 2, sigma 1 -> [-1.5, 2.5]
    net = make_net(small_cfg(tokens=1, channels=2, heads=1, latent_dim=4))
    p = net.blocks[0].sln
    p.ba.data[:] = 0.5
    p.bb.data[:] = 2.0
    h = Tensor(np.array([[1.0, 3.0]], dtype=np.float32))
    g = Tensor(np.zeros((1, 2), dtype=np.float32))
    out = net.sln(h, g, 0).data
    assert np.allclose(out, [[-1.5, 2.5]], atol=1e-4)


# -- attention ----------------------------------------------------------------

def test_attention_single_token_passthrough():
    q = Tensor(np.array([[1.0, 2.0]]))
    k = Tensor(np.array([[0.3, -0.7]]))
    v = Tensor(np.array([[5.0, -4.0]]))
    out = attention_head(q, k, v)
    assert np.allclose(out.data, v.data)


def test_attention_identical_tokens_uniform_weights():
    q = Tensor(np.tile([1.0, -1.0], (5, 1)))
    k = Tensor(np.tile([0.5, 0.5], (5, 1)))
    v = Tensor(np.random.default_rng(0).standard_normal((5, 2)))
    out, w = attention_head(q, k, v, return_weights=True)
    assert np.allclose(w.data, 1.0 / 5.0, atol=1e-7)


def test_attention_two_token_brute_force():
    q = np.array([[1.0, 0.0], [0.0, 2.0]])
    k = np.array([[1.0, 1.0], [-1.0, 0.5]])
    v = np.array([[3.0, -1.0], [0.5, 2.0]])
    scores = q @ k.T / np.sqrt(2.0)
    e = np.exp(scores - scores.max(axis=1, keepdims=True))
    w = e / e.sum(axis=1, keepdims=True)
    expected = w @ v
    out = attention_head(Tensor(q), Tensor(k), Tensor(v))
    assert np.allclose(out.data, expected, atol=1e-12)


def test_msa_shape_and_row_sums():
    cfg = GlobalNetConfig(latent_dim=64, tokens=25, channels=24, heads=6, blocks=1)
    net = GlobalNet(cfg, np.random.default_rng(5))
    x = Tensor(np.random.default_rng(6).standard_normal((25, 600)).astype(np.float32))
    out, w = net.msa(x, 0, return_weights=True)
    assert out.shape == (25, 600)
    assert w.shape == (6, 25, 25)
    assert np.allclose(w.data.sum(axis=-1), 1.0, atol=1e-6)


def test_msa_single_head_reduces_to_attention():
    cfg = small_cfg(heads=1)
    net = make_net(cfg, seed=7)
    blk = net.blocks[0]
    blk.wo.data = np.eye(24, dtype=np.float32)
    blk.bo.data[:] = 0
    x = Tensor(np.random.default_rng(8).standard_normal((6, 24)).astype(np.float32))
    expected = attention_head(
        ops.matmul(x, blk.wq), ops.matmul(x, blk.wk), ops.matmul(x, blk.wv)
    )
    assert np.allclose(net.msa(x, 0).data, expected.data, atol=1e-6)


def test_heads_must_divide_embed_dim():
    with pytest.raises(ValueError, match="divisible"):
        small_cfg(heads=5).validate()


# -- encoder block / full forward ---------------------------------------------

def test_encoder_block_identity_when_residual_branches_zero():
    net = make_net(seed=9)
    zero_residual_branches(net)
    rng = np.random.default_rng(10)
    h = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    g = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    out = net.encoder_block(h, g, 0)
    assert np.array_equal(out.data, h.data)


def test_encoder_block_deterministic():
    net = make_net(seed=11)
    rng = np.random.default_rng(12)
    h = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    g = Tensor(rng.standard_normal((6, 24)).astype(np.float32))
    assert np.array_equal(net.encoder_block(h, g, 0).data, net.encoder_block(h, g, 0).data)


def test_encoder_block_gradient_fd():
    net = make_net(seed=13, dtype=np.float64)
    g0 = np.random.default_rng(14).standard_normal((6, 24))

    def f(h):
        return net.encoder_block(h, Tensor(g0), 0)

    h0 = np.random.default_rng(15).standard_normal((6, 24))
    assert check_function(f, [h0]) < 1e-5


def test_global_forward_grid_shape_and_determinism():
    net = make_net(seed=16)
    z = Tensor(np.random.default_rng(17).standard_normal(16).astype(np.float32))
    grid1 = net.forward(z)
    grid2 = net.forward(z)
    assert grid1.shape == (6, 6, 4)
    assert np.array_equal(grid1.data, grid2.data)


def test_global_forward_single_block_default():
    net = make_net()
    assert len(net.blocks) == 1  # default encoder depth


def test_global_forward_zero_residuals_returns_epos_for_any_z():
    net = make_net(seed=18)
    zero_residual_branches(net)
    rng = np.random.default_rng(19)
    expected = net.epos.data.reshape(6, 6, 4)
    for _ in range(5):
        z = Tensor(rng.standard_normal(16).astype(np.float32))
        assert np.array_equal(net.forward(z).data, expected)

"""Transformer global network: Gaussian latent -> spatial feature grid.

The encoder sequence starts from the learned position embeddings alone;
the latent reaches the blocks only through the modulated layer norm,
whose affine maps are per-block linear functions of the mapped latent.
Block k computes

    h_k = h_{k-1} + Drop(MSA(SLN(h_{k-1}, g)))
                  + Drop(MLP(SLN(h_{k-1} + Drop(MSA(...)), g)))

with the MSA term evaluated once and reused in both places.
"""

import math
from dataclasses import dataclass

import numpy as np

from .grad import Parameter, Tensor, ops

LN_EPS = 1e-5


@dataclass
class GlobalNetConfig:
    latent_dim: int = 1024      # z length
    tokens: int = 25            # sequence length == min size == grid side
    channels: int = 24          # grid channels; embed dim = tokens * channels
    heads: int = 6
    blocks: int = 1
    ffn_ratio: float = 2.0
    dropout: float = 0.0

    @property
    def embed_dim(self):
        return self.tokens * self.channels

    def validate(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed dim {self.embed_dim} not divisible by {self.heads} heads"
            )
        for name in ("latent_dim", "tokens", "channels", "heads", "blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def xavier_uniform(rng, fan_in, fan_out, shape=None, dtype=np.float32):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape or (fan_in, fan_out)).astype(dtype)


class SlnParams:
    """Affine modulation of a layer norm by the mapped latent. The weight
    maps get the usual Xavier init so the latent shapes the output from
    the first step; the biases start at (0, 1), centering the modulation
    on a plain layer norm."""

    def __init__(self, dim, rng, dtype=np.float32):
        self.wa = Parameter(xavier_uniform(rng, dim, dim, dtype=dtype))
        self.ba = Parameter(np.zeros(dim, dtype=dtype))
        self.wb = Parameter(xavier_uniform(rng, dim, dim, dtype=dtype))
        self.bb = Parameter(np.ones(dim, dtype=dtype))

    def named(self, prefix):
        return [
            (f"{prefix}.wa", self.wa),
            (f"{prefix}.ba", self.ba),
            (f"{prefix}.wb", self.wb),
            (f"{prefix}.bb", self.bb),
        ]


class EncoderBlockParams:
    def __init__(self, cfg, rng, dtype=np.float32):
        d = cfg.embed_dim
        hidden = int(round(cfg.ffn_ratio * d))
        self.sln = SlnParams(d, rng, dtype)
        self.wq = Parameter(xavier_uniform(rng, d, d, dtype=dtype))
        self.wk = Parameter(xavier_uniform(rng, d, d, dtype=dtype))
        self.wv = Parameter(xavier_uniform(rng, d, d, dtype=dtype))
        self.wo = Parameter(xavier_uniform(rng, d, d, dtype=dtype))
        self.bo = Parameter(np.zeros(d, dtype=dtype))
        self.w1 = Parameter(xavier_uniform(rng, d, hidden, dtype=dtype))
        self.b1 = Parameter(np.zeros(hidden, dtype=dtype))
        self.w2 = Parameter(xavier_uniform(rng, hidden, d, dtype=dtype))
        self.b2 = Parameter(np.zeros(d, dtype=dtype))

    def named(self, prefix):
        out = self.sln.named(f"{prefix}.sln")
        out += [
            (f"{prefix}.wq", self.wq),
            (f"{prefix}.wk", self.wk),
            (f"{prefix}.wv", self.wv),
            (f"{prefix}.wo", self.wo),
            (f"{prefix}.bo", self.bo),
            (f"{prefix}.w1", self.w1),
            (f"{prefix}.b1", self.b1),
            (f"{prefix}.w2", self.w2),
            (f"{prefix}.b2", self.b2),
        ]
        return out


def attention_head(q, k, v, return_weights=False):
    """Scaled dot-product attention for one head (or a stack of heads)."""
    dh = q.shape[-1]
    scores = ops.mul(ops.matmul(q, ops.mT(k)), 1.0 / math.sqrt(dh))
    weights = ops.softmax(scores, axis=-1)
    out = ops.matmul(weights, v)
    if return_weights:
        return out, weights
    return out


class GlobalNet:
    """The full latent -> grid network."""

    def __init__(self, cfg, rng, dtype=np.float32):
        cfg.validate()
        self.cfg = cfg
        d = cfg.embed_dim
        self.mlp1_w = Parameter(
            xavier_uniform(rng, cfg.latent_dim, cfg.tokens * d, dtype=dtype)
        )
        self.mlp1_b = Parameter(np.zeros(cfg.tokens * d, dtype=dtype))
        self.epos = Parameter(
            (0.02 * rng.standard_normal((cfg.tokens, d))).astype(dtype)
        )
        self.blocks = [EncoderBlockParams(cfg, rng, dtype) for _ in range(cfg.blocks)]

    def named_parameters(self):
        out = [("gt.mlp1_w", self.mlp1_w), ("gt.mlp1_b", self.mlp1_b), ("gt.epos", self.epos)]
        for i, blk in enumerate(self.blocks):
            out += blk.named(f"gt.block{i}")
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def set_trainable(self, flag):
        for p in self.parameters():
            p.trainable = flag

    def map_latent(self, z):
        """One linear layer + leaky-relu; (S,) -> (tokens, embed_dim)."""
        cfg = self.cfg
        if z.shape != (cfg.latent_dim,):
            raise ValueError(
                f"latent must have length {cfg.latent_dim}, got shape {z.shape}"
            )
        zrow = ops.reshape(z, (1, cfg.latent_dim))
        g = ops.add(ops.matmul(zrow, self.mlp1_w), self.mlp1_b)
        g = ops.leaky_relu(g, 0.2)
        return ops.reshape(g, (cfg.tokens, cfg.embed_dim))

    def sln(self, h, g, k):
        """Latent-modulated layer norm for block k, per token over the
        embedding axis, variance epsilon 1e-5."""
        p = self.blocks[k].sln
        mu, var = ops.token_stats(h, eps=LN_EPS)
        normed = ops.div(ops.sub(h, mu), ops.sqrt(var))
        alpha = ops.add(ops.matmul(g, p.wa), p.ba)
        beta = ops.add(ops.matmul(g, p.wb), p.bb)
        return ops.add(alpha, ops.mul(beta, normed))

    def msa(self, x, k, return_weights=False):
        """Multi-head self-attention with full-width projections; heads are
        column slices, recombined by the output projection."""
        cfg = self.cfg
        p = self.blocks[k]
        t, d = cfg.tokens, cfg.embed_dim
        nh = cfg.heads
        dh = d // nh
        q = ops.matmul(x, p.wq)
        key = ops.matmul(x, p.wk)
        v = ops.matmul(x, p.wv)
        q3 = ops.permute(ops.reshape(q, (t, nh, dh)), (1, 0, 2))
        k3 = ops.permute(ops.reshape(key, (t, nh, dh)), (1, 0, 2))
        v3 = ops.permute(ops.reshape(v, (t, nh, dh)), (1, 0, 2))
        heads, weights = attention_head(q3, k3, v3, return_weights=True)
        merged = ops.reshape(ops.permute(heads, (1, 0, 2)), (t, d))
        out = ops.add(ops.matmul(merged, p.wo), p.bo)
        if return_weights:
            return out, weights
        return out

    def ffn(self, x, k):
        p = self.blocks[k]
        hidden = ops.gelu(ops.add(ops.matmul(x, p.w1), p.b1))
        return ops.add(ops.matmul(hidden, p.w2), p.b2)

    def encoder_block(self, h_prev, g, k, rng=None, training=False):
        rate = self.cfg.dropout
        attn = ops.dropout(
            self.msa(self.sln(h_prev, g, k), k), rate, rng=rng, training=training
        )
        mid = ops.add(h_prev, attn)
        mlp = ops.dropout(self.ffn(self.sln(mid, g, k), k), rate, rng=rng, training=training)
        return ops.add(mid, mlp)

    def forward(self, z, rng=None, training=False):
        """Latent -> (tokens, tokens, channels) feature grid."""
        cfg = self.cfg
        z = z if isinstance(z, Tensor) else Tensor(z)
        g = self.map_latent(z)
        h = self.epos
        for k in range(cfg.blocks):
            h = self.encoder_block(h, g, k, rng=rng, training=training)
        return ops.reshape(h, (cfg.tokens, cfg.tokens, cfg.channels))

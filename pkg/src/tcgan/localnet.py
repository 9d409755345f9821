"""Per-stage convolutional blocks and the growing generator stack.

Each stage bilinearly upsamples the incoming feature grid to its target
resolution, injects scaled Gaussian noise, and refines through three 3x3
convolutions with a residual connection from the upsampled input. Stages
exchange features; every stage owns a tanh RGB head but only the current
stage's head is driven by the losses. Opening a new stage freezes
everything built so far and seeds the new block and head from the
previous stage's values.
"""

import numpy as np

from .globalnet import GlobalNet, xavier_uniform
from .grad import Parameter, Tensor, ops

IN_EPS = 1e-5


class ConvLayer:
    def __init__(self, cin, cout, rng=None, k=3, dtype=np.float32, w=None, b=None):
        if w is None:
            fan_in = k * k * cin
            fan_out = k * k * cout
            w = xavier_uniform(rng, fan_in, fan_out, shape=(k, k, cin, cout), dtype=dtype)
            b = np.zeros(cout, dtype=dtype)
        self.w = Parameter(w)
        self.b = Parameter(b)

    def __call__(self, x, pad_mode="zeros"):
        return ops.conv2d(x, self.w, self.b, pad_mode=pad_mode)

    def named(self, prefix):
        return [(f"{prefix}.w", self.w), (f"{prefix}.b", self.b)]

    def copy(self):
        return ConvLayer(0, 0, w=self.w.data.copy(), b=self.b.data.copy())


class InstanceNorm:
    """Per-channel normalization over the spatial axes, learned affine."""

    def __init__(self, channels, dtype=np.float32, gamma=None, beta=None):
        self.gamma = Parameter(
            gamma if gamma is not None else np.ones(channels, dtype=dtype)
        )
        self.beta = Parameter(
            beta if beta is not None else np.zeros(channels, dtype=dtype)
        )

    def __call__(self, x):
        mu = ops.mean(x, axis=(0, 1), keepdims=True)
        d = ops.sub(x, mu)
        var = ops.mean(ops.mul(d, d), axis=(0, 1), keepdims=True)
        normed = ops.div(d, ops.sqrt(ops.add(var, IN_EPS)))
        return ops.add(ops.mul(normed, self.gamma), self.beta)

    def named(self, prefix):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta", self.beta)]

    def copy(self):
        return InstanceNorm(0, gamma=self.gamma.data.copy(), beta=self.beta.data.copy())


class LocalBlock:
    """Upsample + noise + three convs with a residual from the upsample."""

    def __init__(self, channels, rng=None, dtype=np.float32, parts=None):
        if parts is not None:
            self.conv1, self.n1, self.conv2, self.n2, self.conv3 = parts
        else:
            self.conv1 = ConvLayer(channels, channels, rng, dtype=dtype)
            self.n1 = InstanceNorm(channels, dtype)
            self.conv2 = ConvLayer(channels, channels, rng, dtype=dtype)
            self.n2 = InstanceNorm(channels, dtype)
            self.conv3 = ConvLayer(channels, channels, rng, dtype=dtype)
            # zero trunk output: a fresh stage starts as pure upsampling
            self.conv3.w.data[:] = 0
            self.conv3.b.data[:] = 0

    def forward(self, features, target_hw, noise=None, sigma=0.0):
        h, w = int(target_hw[0]), int(target_hw[1])
        if features.shape[0] != h or features.shape[1] != w:
            up = ops.upsample_bilinear(features, (h, w))
        else:
            up = features
        x = up
        if noise is not None and sigma != 0.0:
            if noise.shape != (h, w, up.shape[2]):
                raise ValueError(
                    f"noise shape {noise.shape} does not match features {(h, w, up.shape[2])}"
                )
            x = ops.add(up, ops.mul(float(sigma), noise))
        t = ops.leaky_relu(self.n1(self.conv1(x)), 0.2)
        t = ops.leaky_relu(self.n2(self.conv2(t)), 0.2)
        t = self.conv3(t)
        return ops.add(up, t)

    __call__ = forward

    def named(self, prefix):
        out = self.conv1.named(f"{prefix}.conv1") + self.n1.named(f"{prefix}.n1")
        out += self.conv2.named(f"{prefix}.conv2") + self.n2.named(f"{prefix}.n2")
        out += self.conv3.named(f"{prefix}.conv3")
        return out

    def copy(self):
        return LocalBlock(
            0,
            parts=(
                self.conv1.copy(),
                self.n1.copy(),
                self.conv2.copy(),
                self.n2.copy(),
                self.conv3.copy(),
            ),
        )


class RgbHead:
    """3x3 conv to RGB, tanh-bounded."""

    def __init__(self, channels, rng=None, dtype=np.float32, conv=None):
        self.conv = conv if conv is not None else ConvLayer(channels, 3, rng, dtype=dtype)

    def __call__(self, features):
        return ops.tanh(self.conv(features))

    def named(self, prefix):
        return self.conv.named(f"{prefix}.conv")

    def copy(self):
        return RgbHead(0, conv=self.conv.copy())


class NoiseSpec:
    """Fixed reconstruction latent plus per-stage noise amplitudes."""

    def __init__(self, z_rec, sigmas=None):
        self.z_rec = np.asarray(z_rec)
        self.sigmas = list(sigmas) if sigmas else []


class GeneratorStack:
    """Global network plus one local block and RGB head per built stage."""

    def __init__(self, global_net, schedule, noise, blocks=None, heads=None):
        self.global_net = global_net
        self.schedule = schedule
        self.noise = noise
        self.blocks = blocks or []
        self.heads = heads or []
        self.trained_stages = 0

    @classmethod
    def build(cls, cfg, schedule, rng, dtype=np.float32):
        """Fresh stack with stage 1 in place; draws z_rec from ``rng``."""
        gnet = GlobalNet(cfg, rng, dtype)
        z_rec = rng.standard_normal(cfg.latent_dim).astype(dtype)
        stack = cls(gnet, schedule, NoiseSpec(z_rec, [1.0]))
        stack.blocks.append(LocalBlock(cfg.channels, rng, dtype))
        stack.heads.append(RgbHead(cfg.channels, rng, dtype))
        return stack

    @property
    def num_stages(self):
        return len(self.blocks)

    @property
    def channels(self):
        return self.global_net.cfg.channels

    def named_parameters(self):
        out = list(self.global_net.named_parameters())
        for i, (blk, head) in enumerate(zip(self.blocks, self.heads), start=1):
            out += blk.named(f"local{i}")
            out += head.named(f"head{i}")
        return out

    def stage_parameters(self, stage):
        """Parameters trained while ``stage`` is open: its block and head,
        plus the global network during stage 1."""
        out = []
        if stage == 1:
            out += self.global_net.parameters()
        out += [p for _, p in self.blocks[stage - 1].named("b")]
        out += [p for _, p in self.heads[stage - 1].named("h")]
        return out

    def features(self, z, upto_stage, noises=None, rng=None, training=False):
        """Run the global net and local blocks 1..upto_stage; returns the
        feature grid at the target resolution of ``upto_stage``."""
        if upto_stage < 1 or upto_stage > self.num_stages:
            raise ValueError(
                f"stage {upto_stage} out of range 1..{self.num_stages}"
            )
        f = self.global_net.forward(z, rng=rng, training=training)
        for i in range(1, upto_stage + 1):
            noise = None
            sigma = 0.0
            if noises is not None:
                noise = noises[i - 1]
                sigma = self.noise.sigmas[i - 1]
            f = self.blocks[i - 1](f, self.schedule.sizes[i - 1], noise, sigma)
        return f

    def continue_features(self, f, from_stage, upto_stage):
        """Drive externally supplied features through blocks from_stage..upto,
        zero noise (harmonization path)."""
        if not (1 <= from_stage <= upto_stage <= self.num_stages):
            raise ValueError(
                f"stage range {from_stage}..{upto_stage} invalid for {self.num_stages} stages"
            )
        for i in range(from_stage, upto_stage + 1):
            f = self.blocks[i - 1](f, self.schedule.sizes[i - 1])
        return f

    def draw_noises(self, upto_stage, rng, dtype=np.float32):
        out = []
        for i in range(upto_stage):
            h, w = self.schedule.sizes[i]
            out.append(Tensor(rng.standard_normal((h, w, self.channels)).astype(dtype)))
        return out

    def generate(self, z=None, upto_stage=None, mode="random", rng=None,
                 noises=None, training=False):
        """Produce an image at ``upto_stage``.

        random mode: fresh per-stage noise (drawn from ``rng`` unless
        ``noises`` is given) and the caller's z. reconstruction mode: the
        fixed z_rec and zero noise. ``training`` enables encoder dropout
        (which also needs ``rng``).
        """
        if upto_stage is None:
            upto_stage = self.num_stages
        if mode == "reconstruction":
            z = Tensor(self.noise.z_rec)
            noises = None
        elif mode == "random":
            if z is None:
                raise ValueError("random mode requires a latent z")
            if noises is None:
                if rng is None:
                    raise ValueError("random mode requires an rng or explicit noises")
                noises = self.draw_noises(upto_stage, rng, dtype=self.noise.z_rec.dtype)
        else:
            raise ValueError(f"unknown mode {mode!r}")
        f = self.features(z, upto_stage, noises=noises, rng=rng, training=training)
        return self.heads[upto_stage - 1](f)

    def expand_stage(self, rng=None):
        """Freeze everything, then append a new block + head initialized
        as copies of the previous stage's values."""
        if self.trained_stages < self.num_stages:
            raise RuntimeError(
                f"stage {self.num_stages} has not finished training; cannot expand"
            )
        self.global_net.set_trainable(False)
        for blk, head in zip(self.blocks, self.heads):
            for _, p in blk.named("b") + head.named("h"):
                p.trainable = False
        new_block = self.blocks[-1].copy()
        new_head = self.heads[-1].copy()
        self.blocks.append(new_block)
        self.heads.append(new_head)
        return self

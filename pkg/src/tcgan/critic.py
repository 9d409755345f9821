"""Patch critic: a fully convolutional scorer reused at every stage.

Five 3x3 stride-1 same-padded conv layers (3->32, then 32->32 x3 with
instance norm + leaky-relu, then a linear 32->1) produce an unbounded
per-patch score map; the scalar critic value is its mean. Each new stage
starts from the previous stage's weights.
"""

import numpy as np

from .grad import ops
from .localnet import ConvLayer, InstanceNorm

MIN_INPUT = 11  # receptive field of the five 3x3 layers


class Critic:
    def __init__(self, rng=None, width=32, dtype=np.float32, normalize=True,
                 parts=None):
        if parts is not None:
            self.convs, self.norms, self.normalize = parts
        else:
            self.convs = [
                ConvLayer(3, width, rng, dtype=dtype),
                ConvLayer(width, width, rng, dtype=dtype),
                ConvLayer(width, width, rng, dtype=dtype),
                ConvLayer(width, width, rng, dtype=dtype),
                ConvLayer(width, 1, rng, dtype=dtype),
            ]
            self.norms = [InstanceNorm(width, dtype) for _ in range(4)]
            self.normalize = normalize
        self.width = self.convs[0].w.shape[3]

    def forward(self, img, pad_mode="zeros"):
        """(H, W, 3) -> (H, W, 1) real-valued patch score map.

        pad_mode "wrap" runs the convolutions circularly, which makes the
        map exactly translation-covariant on periodic inputs.
        """
        h, w = img.shape[0], img.shape[1]
        if h < MIN_INPUT or w < MIN_INPUT:
            raise ValueError(
                f"critic input must be at least {MIN_INPUT}x{MIN_INPUT}, got {h}x{w}"
            )
        x = img
        for conv, norm in zip(self.convs[:4], self.norms):
            x = conv(x, pad_mode)
            if self.normalize:
                x = norm(x)
            x = ops.leaky_relu(x, 0.2)
        return self.convs[4](x, pad_mode)

    __call__ = forward

    def score(self, img):
        """Mean of the patch map; the scalar fed to the adversarial loss."""
        return ops.mean(self.forward(img))

    def named_parameters(self):
        out = []
        for i, conv in enumerate(self.convs, start=1):
            out += conv.named(f"critic.conv{i}")
        for i, norm in enumerate(self.norms, start=1):
            out += norm.named(f"critic.n{i}")
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def set_trainable(self, flag):
        for p in self.parameters():
            p.trainable = flag

    def warm_start(self):
        """New critic whose weights are bit-equal copies of this one's."""
        convs = [c.copy() for c in self.convs]
        norms = [n.copy() for n in self.norms]
        return Critic(parts=(convs, norms, self.normalize))

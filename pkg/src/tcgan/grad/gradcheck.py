"""Finite-difference verification harness for the op catalog.

Analytic gradients from the tape are compared against central differences
in 64-bit. Kinked ops (leaky_relu, clamp_min) resample their inputs until
no element sits within a safety margin of the kink.
"""

import numpy as np

from . import ops
from .tensor import Tape, Tensor, no_trace

KINK_MARGIN = 1e-3


def relative_error(analytic, numeric):
    """max over elements of |analytic - numeric| / max(|numeric|, 1e-8)."""
    denom = np.maximum(np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def check_function(fn, arrays, eps=1e-4):
    """Max relative error of ``fn`` over all inputs.

    fn takes len(arrays) Tensors and returns a Tensor; the output is
    projected onto a fixed random direction to get a scalar.
    """
    rng = np.random.default_rng(0)
    tensors = [Tensor(a.astype(np.float64), requires_grad=True) for a in arrays]

    with Tape() as tape:
        out = fn(*tensors)
        proj = Tensor(rng.standard_normal(out.shape))
        loss = ops.sum_(ops.mul(out, proj))
    analytic = tape.grad(loss, tensors)

    def scalar_loss(datas):
        with no_trace():
            out = fn(*[Tensor(d) for d in datas])
            return float(np.sum(out.data * proj.data))

    worst = 0.0
    for i, t in enumerate(tensors):
        base = t.data.copy()
        numeric = np.zeros_like(base)
        flat = numeric.reshape(-1)
        for j in range(base.size):
            datas = [u.data for u in tensors]
            bumped = base.copy().reshape(-1)
            bumped[j] += eps
            datas[i] = bumped.reshape(base.shape)
            up = scalar_loss(datas)
            bumped[j] -= 2 * eps
            datas[i] = bumped.reshape(base.shape)
            down = scalar_loss(datas)
            flat[j] = (up - down) / (2 * eps)
        worst = max(worst, relative_error(analytic[i].data, numeric))
    return worst


def _away_from(rng, shape, kink=0.0, margin=KINK_MARGIN):
    x = rng.standard_normal(shape)
    while np.any(np.abs(x - kink) < margin):
        bad = np.abs(x - kink) < margin
        x[bad] = rng.standard_normal(int(bad.sum()))
    return x


def _case(kind, rng):
    """Build (fn, input arrays) for one gradcheck sample of ``kind``."""
    n = rng.standard_normal
    if kind == "add":
        return ops.add, [n((3, 4)), n((4,))]
    if kind == "sub":
        return ops.sub, [n((3, 4)), n((3, 4))]
    if kind == "neg":
        return ops.neg, [n((3, 4))]
    if kind == "mul":
        return ops.mul, [n((3, 4)), n((4,))]
    if kind == "div":
        num = n((3, 4))
        den = rng.uniform(0.5, 1.5, (3, 4)) * np.where(n((3, 4)) > 0, 1, -1)
        return ops.div, [num, den]
    if kind == "square":
        return ops.square, [n((3, 4))]
    if kind == "sqrt":
        return ops.sqrt, [rng.uniform(0.5, 2.0, (3, 4))]
    if kind == "exp":
        return ops.exp, [n((3, 4))]
    if kind == "tanh":
        return ops.tanh, [n((3, 4))]
    if kind == "gelu":
        return ops.gelu, [n((3, 4))]
    if kind == "leaky_relu":
        return ops.leaky_relu, [_away_from(rng, (4, 5))]
    if kind == "clamp_min":
        return (lambda x: ops.clamp_min(x, 0.25)), [_away_from(rng, (4, 5), kink=0.25)]
    if kind == "softmax":
        return ops.softmax, [n((4, 5))]
    if kind == "matmul":
        return ops.matmul, [n((4, 3)), n((3, 5))]
    if kind == "bias_add":
        return ops.bias_add, [n((4, 5, 3)), n((3,))]
    if kind == "conv2d":
        return ops.conv2d, [n((5, 6, 3)), n((3, 3, 3, 2)), n((2,))]
    if kind == "im2col":
        return (lambda x: ops.im2col(x, 3)), [n((4, 5, 2))]
    if kind == "col2im":
        return (lambda c: ops.col2im(c, 4, 5, 2, 3)), [n((20, 18))]
    if kind == "reshape":
        return (lambda x: ops.reshape(x, (6, 2))), [n((3, 4))]
    if kind == "permute":
        return (lambda x: ops.permute(x, (2, 0, 1))), [n((2, 3, 4))]
    if kind == "concat":
        return (lambda a, b: ops.concat([a, b], axis=1)), [n((3, 2)), n((3, 4))]
    if kind == "narrow":
        return (lambda x: ops.narrow(x, 1, 1, 2)), [n((3, 5))]
    if kind == "pad_axis":
        return (lambda x: ops.pad_axis(x, 0, 2, 7)), [n((3, 4))]
    if kind == "broadcast_to":
        return (lambda x: ops.broadcast_to(x, (4, 3, 5))), [n((3, 1))]
    if kind == "sum":
        return (lambda x: ops.sum_(x, axis=1)), [n((3, 4, 2))]
    if kind == "mean":
        return (lambda x: ops.mean(x, axis=(0, 1), keepdims=True)), [n((3, 4, 2))]
    if kind == "norm":
        return ops.l2_norm, [n((3, 4)) + 0.1]
    if kind == "token_stats":

        def fn(x):
            mu, var = ops.token_stats(x)
            return ops.concat([ops.reshape(mu, (-1,)), ops.reshape(var, (-1,))])

        return fn, [n((4, 6))]
    if kind == "upsample_bilinear":
        return (lambda x: ops.upsample_bilinear(x, (7, 9))), [n((4, 5, 2))]
    if kind == "upsample_nearest":
        return (lambda x: ops.upsample_nearest(x, (7, 9))), [n((4, 5, 2))]
    if kind == "dropout":

        def fn(x):
            return ops.dropout(x, 0.3, rng=np.random.default_rng(7))

        return fn, [n((4, 5))]
    raise ValueError(f"no gradcheck case for kind {kind!r}")


def grad_check(kind, eps=1e-4, samples=1, seed=0):
    """Max relative error for ``kind`` over ``samples`` random draws."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        fn, arrays = _case(kind, rng)
        worst = max(worst, check_function(fn, arrays, eps=eps))
    return worst


CHECKED_KINDS = [
    "add", "sub", "neg", "mul", "div", "square", "sqrt", "exp", "tanh",
    "gelu", "leaky_relu", "clamp_min", "softmax", "matmul", "bias_add",
    "conv2d", "im2col", "col2im", "reshape", "permute", "concat", "narrow",
    "pad_axis", "broadcast_to", "sum", "mean", "norm", "token_stats",
    "upsample_bilinear", "upsample_nearest", "dropout",
]

"""Differentiable operation catalog.

Each primitive pairs a numpy forward with a vjp written in terms of the
ops in this module, so backward passes are themselves traceable and the
gradient penalty's gradient-of-gradient needs no special casing. The
closure facts that make this work: matmul's vjps are matmuls, im2col and
col2im are mutually adjoint, sum and broadcast are mutually adjoint, and
upsampling is expressed as two matmuls with constant interpolation
matrices.

Arrays are channel-last: images (H, W, 3), features (H, W, C), conv
kernels (k, k, C_in, C_out). There is no batch axis; the training batch
size is 1 by construction.
"""

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Node, ShapeError, Tensor, active_tape, _OPS


def as_tensor(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(kind, data, inputs, vjp, ctx=None):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        node = Node(kind, tuple(inputs), out, vjp, ctx)
        out.node = node
        tape.nodes.append(node)
    return out


def _sum_to(g, shape):
    """Reduce a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = sum_(g, axis=tuple(range(extra)))
    axes = tuple(
        i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1
    )
    if axes:
        g = sum_(g, axis=axes, keepdims=True)
    if g.shape != shape:
        g = reshape(g, shape)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def vjp(ctx, inputs, out, g):
        x, y = inputs
        gx = _sum_to(g, x.shape) if x.requires_grad else None
        gy = _sum_to(g, y.shape) if y.requires_grad else None
        return gx, gy

    return _make("add", a.data + b.data, (a, b), vjp)


def sub(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def vjp(ctx, inputs, out, g):
        x, y = inputs
        gx = _sum_to(g, x.shape) if x.requires_grad else None
        gy = _sum_to(neg(g), y.shape) if y.requires_grad else None
        return gx, gy

    return _make("sub", a.data - b.data, (a, b), vjp)


def neg(a):
    a = as_tensor(a)

    def vjp(ctx, inputs, out, g):
        return (neg(g),)

    return _make("neg", -a.data, (a,), vjp)


def mul(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def vjp(ctx, inputs, out, g):
        x, y = inputs
        gx = _sum_to(mul(g, y), x.shape) if x.requires_grad else None
        gy = _sum_to(mul(g, x), y.shape) if y.requires_grad else None
        return gx, gy

    return _make("mul", a.data * b.data, (a, b), vjp)


def div(a, b):
    a = as_tensor(a, like=b if isinstance(b, Tensor) else None)
    b = as_tensor(b, like=a)

    def vjp(ctx, inputs, out, g):
        x, y = inputs
        gx = _sum_to(div(g, y), x.shape) if x.requires_grad else None
        gy = (
            _sum_to(neg(div(mul(g, x), mul(y, y))), y.shape)
            if y.requires_grad
            else None
        )
        return gx, gy

    return _make("div", a.data / b.data, (a, b), vjp)


def square(a):
    a = as_tensor(a)
    return mul(a, a)


def sqrt(a):
    a = as_tensor(a)

    def vjp(ctx, inputs, out, g):
        # forward is exact; the clamp only guards the measure-zero point
        # sqrt(0), where the true derivative is unbounded
        return (div(g, clamp_min(mul(out, 2.0), 1e-30)),)

    return _make("sqrt", np.sqrt(a.data), (a,), vjp)


def exp(a):
    a = as_tensor(a)

    def vjp(ctx, inputs, out, g):
        return (mul(g, out),)

    return _make("exp", np.exp(a.data), (a,), vjp)


def tanh(a):
    a = as_tensor(a)

    def vjp(ctx, inputs, out, g):
        return (mul(g, sub(1.0, mul(out, out))),)

    return _make("tanh", np.tanh(a.data), (a,), vjp)


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    mask = np.where(a.data >= 0, a.data.dtype.type(1), a.data.dtype.type(slope))

    def vjp(ctx, inputs, out, g):
        return (mul(g, Tensor(ctx)),)

    return _make("leaky_relu", a.data * mask, (a,), vjp, ctx=mask)


def clamp_min(a, floor):
    a = as_tensor(a)
    mask = (a.data > floor).astype(a.data.dtype)

    def vjp(ctx, inputs, out, g):
        return (mul(g, Tensor(ctx)),)

    return _make("clamp_min", np.maximum(a.data, floor), (a,), vjp, ctx=mask)


def gelu(a):
    """tanh-approximation GELU, built from traced primitives."""
    a = as_tensor(a)
    c = float(np.sqrt(2.0 / np.pi))
    inner = mul(c, add(a, mul(0.044715, mul(a, mul(a, a)))))
    return mul(mul(0.5, a), add(1.0, tanh(inner)))


# ---------------------------------------------------------------------------
# shape manipulation

def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)

    def vjp(ctx, inputs, out, g):
        return (reshape(g, ctx),)

    return _make("reshape", a.data.reshape(shape), (a,), vjp, ctx=a.shape)


def permute(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inv = tuple(int(i) for i in np.argsort(axes))

    def vjp(ctx, inputs, out, g):
        return (permute(g, ctx),)

    return _make("permute", np.transpose(a.data, axes), (a,), vjp, ctx=inv)


def mT(a):
    """Swap the last two axes."""
    a = as_tensor(a)
    axes = list(range(a.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return permute(a, axes)


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("concat: need at least one input")
    starts = []
    pos = 0
    for t in tensors:
        starts.append(pos)
        pos += t.shape[axis]

    def vjp(ctx, inputs, out, g):
        ax, starts = ctx
        return tuple(
            narrow(g, ax, s, t.shape[ax]) for s, t in zip(starts, inputs)
        )

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return _make("concat", data, tuple(tensors), vjp, ctx=(axis, starts))


def narrow(a, axis, start, length):
    a = as_tensor(a)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + length)

    def vjp(ctx, inputs, out, g):
        ax, st, total = ctx
        return (pad_axis(g, ax, st, total),)

    return _make(
        "narrow", a.data[tuple(idx)], (a,), vjp, ctx=(axis, start, a.shape[axis])
    )


def pad_axis(a, axis, start, total):
    """Embed ``a`` into a zero tensor of size ``total`` along ``axis``."""
    a = as_tensor(a)
    shape = list(a.shape)
    shape[axis] = total
    data = np.zeros(shape, dtype=a.data.dtype)
    idx = [slice(None)] * a.ndim
    idx[axis] = slice(start, start + a.shape[axis])
    data[tuple(idx)] = a.data

    def vjp(ctx, inputs, out, g):
        ax, st, length = ctx
        return (narrow(g, ax, st, length),)

    return _make("pad_axis", data, (a,), vjp, ctx=(axis, start, a.shape[axis]))


def broadcast_to(a, shape):
    a = as_tensor(a)
    shape = tuple(int(s) for s in shape)

    def vjp(ctx, inputs, out, g):
        return (_sum_to(g, ctx),)

    data = np.broadcast_to(a.data, shape).copy()
    return _make("broadcast_to", data, (a,), vjp, ctx=a.shape)


# ---------------------------------------------------------------------------
# reductions

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        axes = tuple(range(a.ndim))
    elif isinstance(axis, int):
        axes = (axis,)
    else:
        axes = tuple(axis)

    def vjp(ctx, inputs, out, g):
        in_shape, axes, kept = ctx
        if not kept:
            kshape = list(in_shape)
            for ax in axes:
                kshape[ax] = 1
            g = reshape(g, kshape)
        return (broadcast_to(g, in_shape),)

    data = np.sum(a.data, axis=axes, keepdims=keepdims)
    return _make("sum", data, (a,), vjp, ctx=(a.shape, axes, keepdims))


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    if axis is None:
        count = a.size
    elif isinstance(axis, int):
        count = a.shape[axis]
    else:
        count = int(np.prod([a.shape[ax] for ax in axis]))
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / count)


def l2_norm(a):
    """Euclidean norm over all elements (flattened)."""
    return sqrt(sum_(mul(a, a)))


def token_stats(a, eps=0.0):
    """Per-token mean and variance over the last axis (keepdims)."""
    mu = mean(a, axis=-1, keepdims=True)
    d = sub(a, mu)
    var = mean(mul(d, d), axis=-1, keepdims=True)
    if eps:
        var = add(var, eps)
    return mu, var


def softmax(a, axis=-1):
    """Softmax along ``axis``; the max-shift is a detached constant, which
    leaves the derivative exact."""
    a = as_tensor(a)
    shift = Tensor(np.max(a.data, axis=axis, keepdims=True))
    e = exp(sub(a, shift))
    return div(e, sum_(e, axis=axis, keepdims=True))


# ---------------------------------------------------------------------------
# matmul / convolution

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(
            f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}"
        )
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(
            f"matmul: inner dimensions disagree, {a.shape} x {b.shape}"
        )

    def vjp(ctx, inputs, out, g):
        x, y = inputs
        gx = _sum_to(matmul(g, mT(y)), x.shape) if x.requires_grad else None
        gy = _sum_to(matmul(mT(x), g), y.shape) if y.requires_grad else None
        return gx, gy

    return _make("matmul", np.matmul(a.data, b.data), (a, b), vjp)


def im2col(x, k, pad_mode="zeros"):
    """(H, W, C) -> (H*W, k*k*C) patch matrix, stride 1, same-padding."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"im2col: expected (H, W, C) input, got {x.shape}")
    H, W, C = x.shape
    p = k // 2
    if pad_mode == "zeros":
        padded = np.zeros((H + 2 * p, W + 2 * p, C), dtype=x.data.dtype)
        padded[p : p + H, p : p + W] = x.data
    elif pad_mode == "wrap":
        padded = np.pad(x.data, ((p, p), (p, p), (0, 0)), mode="wrap")
    else:
        raise ValueError(f"unknown pad_mode {pad_mode!r}")
    win = sliding_window_view(padded, (k, k), axis=(0, 1))  # (H, W, C, k, k)
    cols = np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(
        H * W, k * k * C
    )

    def vjp(ctx, inputs, out, g):
        H, W, C, k, mode = ctx
        return (col2im(g, H, W, C, k, pad_mode=mode),)

    return _make("im2col", cols, (x,), vjp, ctx=(H, W, C, k, pad_mode))


def col2im(cols, H, W, C, k, pad_mode="zeros"):
    """Adjoint of im2col: scatter-add patches back to an (H, W, C) array."""
    cols = as_tensor(cols)
    p = k // 2
    g6 = cols.data.reshape(H, W, k, k, C)
    padded = np.zeros((H + 2 * p, W + 2 * p, C), dtype=cols.data.dtype)
    for u in range(k):
        for v in range(k):
            padded[u : u + H, v : v + W] += g6[:, :, u, v, :]
    data = padded[p : p + H, p : p + W].copy()
    if pad_mode == "wrap":
        # fold the pad contributions back onto their wrapped sources
        data[-p:] += padded[:p, p : p + W]
        data[:p] += padded[p + H :, p : p + W]
        data[:, -p:] += padded[p : p + H, :p]
        data[:, :p] += padded[p : p + H, p + W :]
        data[-p:, -p:] += padded[:p, :p]
        data[-p:, :p] += padded[:p, p + W :]
        data[:p, -p:] += padded[p + H :, :p]
        data[:p, :p] += padded[p + H :, p + W :]

    def vjp(ctx, inputs, out, g):
        k, mode = ctx
        return (im2col(g, k, pad_mode=mode),)

    return _make("col2im", np.ascontiguousarray(data), (cols,), vjp, ctx=(k, pad_mode))


def conv2d(x, w, b=None, pad_mode="zeros"):
    """2-D convolution, stride 1, same-padding, odd square kernel.

    x: (H, W, C_in); w: (k, k, C_in, C_out); b: (C_out,) or None.
    Padding is zeros by default; "wrap" gives circular convolution.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected (H,W,C) x (k,k,Cin,Cout), got {x.shape} and {w.shape}")
    k, k2, cin, cout = w.shape
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be odd and square, got {w.shape}")
    if x.shape[2] != cin:
        raise ShapeError(
            f"conv2d: input has {x.shape[2]} channels, kernel expects {cin}"
        )
    H, W, _ = x.shape
    cols = im2col(x, k, pad_mode=pad_mode)
    y = matmul(cols, reshape(w, (k * k * cin, cout)))
    y = reshape(y, (H, W, cout))
    if b is not None:
        y = add(y, b)
    return y


def bias_add(x, b):
    """Broadcasting add of a trailing-axis bias."""
    return add(x, b)


# ---------------------------------------------------------------------------
# resampling

@lru_cache(maxsize=None)
def _linear_matrix(n_in, n_out):
    """Row-interpolation matrix for bilinear resampling (half-pixel centers)."""
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        s = (i + 0.5) * scale - 0.5
        i0 = int(np.floor(s))
        t = s - i0
        i0c = min(max(i0, 0), n_in - 1)
        i1c = min(max(i0 + 1, 0), n_in - 1)
        m[i, i0c] += 1.0 - t
        m[i, i1c] += t
    return m


@lru_cache(maxsize=None)
def _nearest_matrix(n_in, n_out):
    m = np.zeros((n_out, n_in), dtype=np.float64)
    scale = n_in / n_out
    for i in range(n_out):
        src = min(int(np.floor((i + 0.5) * scale)), n_in - 1)
        m[i, src] = 1.0
    return m


def _resample(x, size, matrix_fn):
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"upsample: expected (H, W, C) input, got {x.shape}")
    H, W, C = x.shape
    H2, W2 = int(size[0]), int(size[1])
    dt = x.data.dtype
    rh = Tensor(matrix_fn(H, H2).astype(dt))
    rw = Tensor(matrix_fn(W, W2).astype(dt))
    t = matmul(rh, reshape(x, (H, W * C)))
    t = permute(reshape(t, (H2, W, C)), (1, 0, 2))
    t = matmul(rw, reshape(t, (W, H2 * C)))
    return permute(reshape(t, (W2, H2, C)), (1, 0, 2))


def upsample_bilinear(x, size):
    return _resample(x, size, _linear_matrix)


def upsample_nearest(x, size):
    return _resample(x, size, _nearest_matrix)


# ---------------------------------------------------------------------------
# stochastic

def dropout(x, rate, rng=None, training=True):
    """Inverted dropout; identity when rate is 0 or not training."""
    x = as_tensor(x)
    if rate <= 0.0 or not training:
        return x
    if rng is None:
        raise ValueError("dropout with rate > 0 requires an rng")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype)
    return mul(x, Tensor(keep / (1.0 - rate)))


# ---------------------------------------------------------------------------
# catalog dispatch

_CATALOG = {
    "add": add,
    "sub": sub,
    "neg": neg,
    "mul": mul,
    "div": div,
    "square": square,
    "sqrt": sqrt,
    "exp": exp,
    "tanh": tanh,
    "gelu": gelu,
    "leaky_relu": leaky_relu,
    "softmax": softmax,
    "matmul": matmul,
    "bias_add": bias_add,
    "conv2d": conv2d,
    "im2col": im2col,
    "col2im": col2im,
    "reshape": reshape,
    "permute": permute,
    "concat": concat,
    "narrow": narrow,
    "pad_axis": pad_axis,
    "broadcast_to": broadcast_to,
    "sum": sum_,
    "mean": mean,
    "norm": l2_norm,
    "token_stats": token_stats,
    "upsample_bilinear": upsample_bilinear,
    "upsample_nearest": upsample_nearest,
    "dropout": dropout,
    "clamp_min": clamp_min,
}


def op_kinds():
    return sorted(_CATALOG)


def forward_op(kind, inputs, attrs=None):
    """Dispatch an operation by kind name. Raises on unknown kinds."""
    try:
        fn = _CATALOG[kind]
    except KeyError:
        raise ValueError(
            f"unknown operation kind {kind!r}; known kinds: {', '.join(op_kinds())}"
        ) from None
    attrs = attrs or {}
    if kind == "concat":
        return fn(inputs, **attrs)
    return fn(*inputs, **attrs)


# install operator sugar on Tensor
_OPS.update(
    {"add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "matmul": matmul}
)

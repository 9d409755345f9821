"""Reverse-mode autodiff over dense numpy arrays.

A ``Tape`` is a Wengert list: every traced operation appends one node in
execution order, so iterating the list backwards is already a topological
order and each node is visited exactly once during the backward sweep.
Vector-Jacobian products are themselves written in terms of traced ops,
which is what makes gradient-of-gradient (``create_graph=True``) work.
"""

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Operand shapes invalid for an operation kind."""


class Tensor:
    """Dense n-d array with an optional link into the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None   # accumulated by Tape.backward, a Tensor
        self.node = None   # Node that produced this tensor, if traced

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data.reshape(()))

    def detach(self):
        """A view of the same data with no graph history."""
        return Tensor(self.data, requires_grad=False)

    def copy(self):
        return Tensor(self.data.copy(), requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # Arithmetic sugar; implementations live in ops.py and are installed
    # at import time to avoid a circular import.
    def __add__(self, other):
        return _OPS["add"](self, other)

    def __radd__(self, other):
        return _OPS["add"](other, self)

    def __sub__(self, other):
        return _OPS["sub"](self, other)

    def __rsub__(self, other):
        return _OPS["sub"](other, self)

    def __mul__(self, other):
        return _OPS["mul"](self, other)

    def __rmul__(self, other):
        return _OPS["mul"](other, self)

    def __truediv__(self, other):
        return _OPS["div"](self, other)

    def __rtruediv__(self, other):
        return _OPS["div"](other, self)

    def __neg__(self):
        return _OPS["neg"](self)

    def __matmul__(self, other):
        return _OPS["matmul"](self, other)


class Parameter(Tensor):
    """Trainable tensor. ``trainable=False`` freezes it: no gradient is
    tracked through it and the optimizer never touches it."""

    __slots__ = ("_trainable",)

    def __init__(self, data, trainable=True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self._trainable = bool(trainable)

    @property
    def trainable(self):
        return self._trainable

    @trainable.setter
    def trainable(self, flag):
        self._trainable = bool(flag)
        self.requires_grad = self._trainable


class Node:
    """One executed operation: output + inputs + its vjp."""

    __slots__ = ("kind", "inputs", "out", "vjp", "ctx")

    def __init__(self, kind, inputs, out, vjp, ctx):
        self.kind = kind
        self.inputs = inputs
        self.out = out
        self.vjp = vjp
        self.ctx = ctx


_TAPE_STACK = []


def active_tape():
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class no_trace:
    """Context that suppresses recording (inference / plain-numpy backward)."""

    def __enter__(self):
        _TAPE_STACK.append(None)
        return self

    def __exit__(self, *exc):
        _TAPE_STACK.pop()
        return False


class Tape:
    """Execution-ordered record of traced operations."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False

    def __len__(self):
        return len(self.nodes)

    def _sweep(self, loss, seed, create_graph):
        """Reverse sweep from ``loss``; returns {id(tensor): grad_tensor}."""
        if loss.size != 1:
            raise ValueError(
                f"backward requires a scalar loss, got shape {loss.shape}"
            )
        grads = {id(loss): seed}
        # Nodes appended while building higher-order graphs must not be
        # revisited by the sweep that created them.
        snapshot = self.nodes[: len(self.nodes)]
        add = _OPS["add"]
        for node in reversed(snapshot):
            gout = grads.pop(id(node.out), None)
            if gout is None:
                continue
            with self if create_graph else no_trace():
                in_grads = node.vjp(node.ctx, node.inputs, node.out, gout)
            for inp, g in zip(node.inputs, in_grads):
                if g is None or not inp.requires_grad:
                    continue
                prev = grads.get(id(inp))
                if prev is None:
                    grads[id(inp)] = g
                else:
                    with self if create_graph else no_trace():
                        grads[id(inp)] = add(prev, g)
        return grads

    def backward(self, loss, create_graph=False):
        """Accumulate gradients into ``.grad`` of every reachable leaf that
        requires one. Frozen parameters are never touched."""
        seed = Tensor(np.ones_like(loss.data))
        grads = self._sweep(loss, seed, create_graph)
        for node in self.nodes:
            for inp in node.inputs:
                if inp.requires_grad and inp.node is None:
                    g = grads.get(id(inp))
                    if g is None:
                        continue
                    if inp.grad is None:
                        inp.grad = g.detach() if not create_graph else g
                    else:
                        with no_trace():
                            inp.grad = _OPS["add"](inp.grad, g)
                    grads.pop(id(inp), None)

    def grad(self, out, wrt, create_graph=False):
        """Gradients of scalar ``out`` w.r.t. the tensors in ``wrt``,
        returned as a list and (with ``create_graph``) themselves traced."""
        seed = Tensor(np.ones_like(out.data))
        grads = self._sweep(out, seed, create_graph)
        result = []
        for t in wrt:
            g = grads.get(id(t))
            if g is None:
                g = Tensor(np.zeros_like(t.data))
            result.append(g)
        return result


# Filled in by ops.py at import time.
_OPS = {}

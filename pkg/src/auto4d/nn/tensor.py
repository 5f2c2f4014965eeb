"""Reverse-mode autodiff tensor.

Float64 only.  The recorded graph is torn down by ``backward``; gradients
accumulate into ``.grad`` across calls (callers zero them between steps).
Broadcasting is limited to what the branch code uses: scalars against arrays
and trailing-shape bias adds.
"""

import numpy as np


def _unbroadcast(g, shape):
    """Sum `g` down to `shape` after numpy broadcasting in the forward pass."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _acc(grads, t, g):
    """Add a gradient contribution for tensor `t` into the per-call map.

    Never mutates a stored array in place; stored refs may be shared with a
    sibling contribution.
    """
    if not t.requires_grad:
        return
    key = id(t)
    if key in grads:
        grads[key] = grads[key] + g
    else:
        grads[key] = g


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self._parents = ()
        self._backward = None

    # -- graph plumbing -------------------------------------------------

    @staticmethod
    def _node(data, parents, bw):
        rg_parents = tuple(p for p in parents if p.requires_grad)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.requires_grad = bool(rg_parents)
        out.grad = np.zeros_like(data) if rg_parents else None
        out._parents = rg_parents
        out._backward = bw if rg_parents else None
        return out

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward requires a scalar loss")
        if not self.requires_grad:
            raise ValueError("loss does not depend on any parameter")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad += g
            if node._backward is not None:
                node._backward(g, grads)

    # -- basics ---------------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data + b.data

        def bw(g, grads):
            _acc(grads, a, _unbroadcast(g, a.data.shape))
            _acc(grads, b, _unbroadcast(g, b.data.shape))

        return Tensor._node(out_data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def bw(g, grads):
            _acc(grads, a, -g)

        return Tensor._node(-a.data, (a,), bw)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data * b.data

        def bw(g, grads):
            _acc(grads, a, _unbroadcast(g * b.data, a.data.shape))
            _acc(grads, b, _unbroadcast(g * a.data, b.data.shape))

        return Tensor._node(out_data, (a, b), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data / b.data

        def bw(g, grads):
            _acc(grads, a, _unbroadcast(g / b.data, a.data.shape))
            _acc(grads, b, _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._node(out_data, (a, b), bw)

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only constant exponents are supported")
        a = self
        e = float(exponent)
        out_data = a.data**e

        def bw(g, grads):
            _acc(grads, a, g * e * a.data ** (e - 1.0))

        return Tensor._node(out_data, (a,), bw)

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data @ b.data

        def bw(g, grads):
            # 1-D operands lose an axis in the product, so the generic
            # swapaxes formulas need the vector cases spelled out
            if a.requires_grad:
                if a.data.ndim == 1 and b.data.ndim == 1:
                    ga = g * b.data
                elif a.data.ndim == 1:
                    ga = b.data @ g
                elif b.data.ndim == 1:
                    ga = np.multiply.outer(g, b.data)
                else:
                    ga = g @ np.swapaxes(b.data, -1, -2)
                _acc(grads, a, _unbroadcast(ga, a.data.shape))
            if b.requires_grad:
                if a.data.ndim == 1 and b.data.ndim == 1:
                    gb = g * a.data
                elif a.data.ndim == 1:
                    gb = np.multiply.outer(a.data, g)
                else:
                    gb = np.swapaxes(a.data, -1, -2) @ g
                _acc(grads, b, _unbroadcast(gb, b.data.shape))

        return Tensor._node(out_data, (a, b), bw)

    # -- elementwise functions -------------------------------------------

    def relu(self):
        a = self
        mask = a.data > 0.0

        def bw(g, grads):
            _acc(grads, a, g * mask)

        return Tensor._node(a.data * mask, (a,), bw)

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def bw(g, grads):
            _acc(grads, a, g * out_data)

        return Tensor._node(out_data, (a,), bw)

    def log(self):
        a = self

        def bw(g, grads):
            _acc(grads, a, g / a.data)

        return Tensor._node(np.log(a.data), (a,), bw)

    def sin(self):
        a = self

        def bw(g, grads):
            _acc(grads, a, g * np.cos(a.data))

        return Tensor._node(np.sin(a.data), (a,), bw)

    def cos(self):
        a = self

        def bw(g, grads):
            _acc(grads, a, -g * np.sin(a.data))

        return Tensor._node(np.cos(a.data), (a,), bw)

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def bw(g, grads):
            _acc(grads, a, g * 0.5 / out_data)

        return Tensor._node(out_data, (a,), bw)

    def clamp_min(self, lo):
        # one-sided: gradient passes only where the input is above the clamp
        a = self
        mask = a.data > lo

        def bw(g, grads):
            _acc(grads, a, g * mask)

        return Tensor._node(np.maximum(a.data, lo), (a,), bw)

    def clamp_max(self, hi):
        a = self
        mask = a.data < hi

        def bw(g, grads):
            _acc(grads, a, g * mask)

        return Tensor._node(np.minimum(a.data, hi), (a,), bw)

    # -- reductions and shape ops ----------------------------------------

    def sum(self, axis=None):
        a = self
        out_data = a.data.sum(axis=axis)

        def bw(g, grads):
            if axis is None:
                _acc(grads, a, np.broadcast_to(g, a.data.shape).copy())
            else:
                _acc(grads, a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

        return Tensor._node(out_data, (a,), bw)

    def mean(self, axis=None):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        old = a.data.shape

        def bw(g, grads):
            _acc(grads, a, g.reshape(old))

        return Tensor._node(a.data.reshape(shape), (a,), bw)

    def transpose(self, axes):
        a = self
        inv = np.argsort(axes)

        def bw(g, grads):
            _acc(grads, a, g.transpose(inv))

        return Tensor._node(a.data.transpose(axes), (a,), bw)

    def __getitem__(self, key):
        a = self
        out_data = a.data[key]
        if np.isscalar(out_data) or out_data.ndim == 0:
            out_data = np.asarray(out_data, dtype=np.float64)

        def bw(g, grads):
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            _acc(grads, a, full)

        return Tensor._node(out_data, (a,), bw)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g, grads):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            _acc(grads, t, piece)

    return Tensor._node(out_data, tuple(tensors), bw)


def stack_scalars(scalars):
    """Stack 0-d tensors (or floats) into a 1-d tensor."""
    scalars = [as_tensor(s) for s in scalars]
    out_data = np.array([float(s.data) for s in scalars], dtype=np.float64)

    def bw(g, grads):
        for i, s in enumerate(scalars):
            _acc(grads, s, np.asarray(g[i]))

    return Tensor._node(out_data, tuple(scalars), bw)

"""Reverse-mode automatic differentiation over numpy arrays.

Every backward rule is written with differentiable ``Tensor`` operations, so
a gradient computed with ``create_graph=True`` is itself a node of the graph
and can be differentiated again (double backprop for gradient penalties).
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import as_strided

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.grad = None
        self.name = name

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return mul(self, reciprocal(as_tensor(other)))

    def __rtruediv__(self, other):
        return mul(other, reciprocal(self))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def __pow__(self, k):
        if k != 2:
            raise NotImplementedError("only squaring is supported")
        return mul(self, self)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return tsum(self, axis, keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self, grad=None):
        """Accumulate ``d self / d leaf`` into ``leaf.grad`` (numpy arrays)."""
        leaves = [t for t in _toposort([self]) if t.requires_grad and not t._parents]
        grads = _backprop([self], leaves, [grad], create_graph=False)
        for leaf, g in zip(leaves, grads):
            g = np.zeros_like(leaf.data) if g is None else g.data
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data, parents, backward):
    parents = tuple(as_tensor(p) for p in parents)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _toposort(roots):
    order, seen = [], set()
    stack = [(r, False) for r in roots]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _backprop(outputs, inputs, grad_outputs, create_graph):
    ctx = contextlib.nullcontext() if create_graph else no_grad()
    with ctx:
        grads = {}
        for out, g in zip(outputs, grad_outputs):
            g = Tensor(np.ones_like(out.data)) if g is None else as_tensor(g)
            grads[id(out)] = g if id(out) not in grads else grads[id(out)] + g
        for node in reversed(_toposort(outputs)):
            g = grads.get(id(node))
            if g is None or node._backward is None:
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                grads[id(p)] = pg if id(p) not in grads else grads[id(p)] + pg
        return [grads.get(id(t)) for t in inputs]


def grad(outputs, inputs, grad_outputs=None, create_graph=False):
    """Gradients of ``outputs`` with respect to ``inputs``.

    Returns a list aligned with ``inputs``; entries are zero tensors when an
    input does not influence the outputs. With ``create_graph`` the result
    stays attached to the graph.
    """
    outputs = [outputs] if isinstance(outputs, Tensor) else list(outputs)
    inputs = [inputs] if isinstance(inputs, Tensor) else list(inputs)
    if grad_outputs is None:
        grad_outputs = [None] * len(outputs)
    elif isinstance(grad_outputs, (Tensor, np.ndarray)):
        grad_outputs = [grad_outputs]
    res = _backprop(outputs, inputs, grad_outputs, create_graph)
    return [Tensor(np.zeros_like(t.data)) if g is None else g for t, g in zip(inputs, res)]


# -- broadcasting helpers ----------------------------------------------------

def sum_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = tuple(range(lead)) + tuple(
        i + lead for i, s in enumerate(shape) if s == 1 and x.shape[i + lead] != 1
    )
    data = x.data.sum(axis=axes, keepdims=True).reshape(shape)
    return _make(data, (x,), lambda g: (broadcast_to(g, x.shape),))


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    data = np.broadcast_to(x.data, shape).copy()
    return _make(data, (x,), lambda g: (sum_to(g, x.shape),))


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data + b.data, (a, b), lambda g: (sum_to(g, a.shape), sum_to(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data - b.data, (a, b), lambda g: (sum_to(g, a.shape), sum_to(neg(g), b.shape)))


def neg(a):
    a = as_tensor(a)
    return _make(-a.data, (a,), lambda g: (neg(g),))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _make(a.data * b.data, (a, b), lambda g: (sum_to(g * b, a.shape), sum_to(g * a, b.shape)))


def reciprocal(a):
    """``1/a`` with ``1/0`` defined as 0 (used by norms at the origin)."""
    a = as_tensor(a)
    with np.errstate(divide="ignore"):
        data = np.where(a.data != 0, 1.0 / np.where(a.data != 0, a.data, 1.0), 0.0)
    out = _make(data, (a,), None)
    if out._parents:
        out._backward = lambda g: (neg(g * out * out),)
    return out


def sqrt(a):
    a = as_tensor(a)
    out = _make(np.sqrt(a.data), (a,), None)
    if out._parents:
        out._backward = lambda g: (g * reciprocal(out) * 0.5,)
    return out


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return _make(a.data * scale, (a,), lambda g: (g * Tensor(scale),))


def norm(a, axis):
    """Euclidean norm over ``axis`` (kept dims); gradient 0 where the norm is 0."""
    a = as_tensor(a)
    sq = tsum(a * a, axis=axis, keepdims=True)
    out = _make(np.sqrt(sq.data), (a,), None)
    if out._parents:
        out._backward = lambda g: (a * broadcast_to(g * reciprocal(out), a.shape),)
    return out


# -- reductions and shape ----------------------------------------------------

def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            axes = tuple(ax % a.ndim for ax in np.atleast_1d(axis))
            shp = [1 if i in axes else s for i, s in enumerate(a.shape)]
            g = reshape(g, tuple(shp))
        elif axis is None and not keepdims:
            g = reshape(g, (1,) * a.ndim)
        return (broadcast_to(g, a.shape),)

    return _make(data, (a,), back)


def reshape(a, shape):
    a = as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (reshape(g, a.shape),))


def getitem(a, idx):
    a = as_tensor(a)
    return _make(a.data[idx], (a,), lambda g: (scatter(g, idx, a.shape),))


def scatter(g, idx, shape):
    """Place ``g`` at ``idx`` of a zero array of ``shape`` (adjoint of indexing)."""
    g = as_tensor(g)
    data = np.zeros(shape)
    data[idx] = g.data
    return _make(data, (g,), lambda h: (getitem(h, idx),))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ transpose(b), transpose(a) @ g))


def transpose(a):
    a = as_tensor(a)
    return _make(a.data.T, (a,), lambda g: (transpose(g),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def back(g):
        out = []
        for k in range(len(tensors)):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(bounds[k], bounds[k + 1])
            out.append(getitem(g, tuple(idx)))
        return tuple(out)

    return _make(data, tensors, back)


# -- convolutions --------------------------------------------------------------
# C(x, w):  conv2d, x [B, Ci, H, W], w [Co, Ci, kh, kw] -> [B, Co, Ho, Wo]
# A(y, w):  adjoint of C in x (transposed convolution)
# Wg(x, g): adjoint of C in w (weight gradient)
# The three are mutually adjoint bilinear maps, so each one's derivative is
# expressed through the other two.

def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def _windows(xp, kh, kw, sh, sw, ho, wo):
    b, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    return as_strided(xp, (b, c, ho, wo, kh, kw), (s0, s1, s2 * sh, s3 * sw, s2, s3), writeable=False)


def _conv_out(n, k, s, p):
    return (n + 2 * p - k) // s + 1


def conv2d(x, w, stride=1, padding=0):
    x, w = as_tensor(x), as_tensor(w)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    _, _, kh, kw = w.shape
    h, wd = x.shape[2:]
    ho, wo = _conv_out(h, kh, sh, ph), _conv_out(wd, kw, sw, pw)
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d output would be empty for input {x.shape} and kernel {w.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    data = np.tensordot(win, w.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)

    def back(g):
        return (
            conv2d_adjoint(g, w, (sh, sw), (ph, pw), (h, wd)),
            conv2d_weight_grad(x, g, (kh, kw), (sh, sw), (ph, pw)),
        )

    return _make(np.ascontiguousarray(data), (x, w), back)


def conv2d_adjoint(y, w, stride, padding, in_hw):
    """Transposed convolution: the exact adjoint of ``conv2d(., w)``."""
    y, w = as_tensor(y), as_tensor(w)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    _, ci, kh, kw = w.shape
    b, _, ho, wo = y.shape
    h, wd = in_hw
    cols = np.tensordot(y.data, w.data, axes=([1], [0]))  # [B, Ho, Wo, Ci, kh, kw]
    cols = cols.transpose(0, 3, 1, 2, 4, 5)
    xp = np.zeros((b, ci, max(h + 2 * ph, (ho - 1) * sh + kh), max(wd + 2 * pw, (wo - 1) * sw + kw)))
    for a in range(kh):
        for c in range(kw):
            xp[:, :, a:a + sh * (ho - 1) + 1:sh, c:c + sw * (wo - 1) + 1:sw] += cols[..., a, c]
    data = xp[:, :, ph:ph + h, pw:pw + wd].copy()

    def back(g):
        return (
            conv2d(g, w, (sh, sw), (ph, pw)),
            conv2d_weight_grad(g, y, (kh, kw), (sh, sw), (ph, pw)),
        )

    return _make(data, (y, w), back)


def conv2d_weight_grad(x, g, kernel, stride, padding):
    """``d<conv2d(x, w), g>/dw``; shape ``[Co, Ci, kh, kw]``."""
    x, g = as_tensor(x), as_tensor(g)
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    h, wd = x.shape[2:]
    ho, wo = g.shape[2:]
    xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    win = _windows(xp, kh, kw, sh, sw, ho, wo)
    data = np.tensordot(g.data, win, axes=([0, 2, 3], [0, 2, 3]))

    def back(v):
        return (
            conv2d_adjoint(g, v, (sh, sw), (ph, pw), (h, wd)),
            conv2d(x, v, (sh, sw), (ph, pw)),
        )

    return _make(data, (x, g), back)


def conv_transpose2d(x, w, stride=1, padding=0):
    """Transposed convolution with ``w`` of shape ``[Ci, Co, kh, kw]``.

    Output size per axis is ``(n - 1)*stride + kernel - 2*padding``.
    """
    w = as_tensor(w)
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    kh, kw = w.shape[2:]
    h, wd = as_tensor(x).shape[2:]
    out_hw = ((h - 1) * sh + kh - 2 * ph, (wd - 1) * sw + kw - 2 * pw)
    return conv2d_adjoint(x, w, (sh, sw), (ph, pw), out_hw)

"""Layer graphs over a flat parameter vector.

A :class:`NetSpec` is a plain description (serializable to JSON); the
weights live in one flat float64 vector ``theta`` sliced per layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import tensor as T
from .tensor import Tensor

LEAKY_SLOPE = 0.2
ACTIVATIONS = ("leaky_relu", "linear")


@dataclass
class Layer:
    kind: str  # dense | conv2d | tconv2d | reshape | crop
    in_features: int = 0
    out_features: int = 0
    in_channels: int = 0
    out_channels: int = 0
    kernel: tuple = (1, 1)
    stride: tuple = (1, 1)
    padding: tuple = (0, 0)
    shape: tuple = ()
    activation: str = "linear"

    def __post_init__(self):
        self.kernel = tuple(self.kernel)
        self.stride = tuple(self.stride)
        self.padding = tuple(self.padding)
        self.shape = tuple(self.shape)
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    def weight_shape(self):
        if self.kind == "dense":
            return (self.in_features, self.out_features)
        if self.kind == "conv2d":
            return (self.out_channels, self.in_channels) + self.kernel
        if self.kind == "tconv2d":
            return (self.in_channels, self.out_channels) + self.kernel
        return None

    def bias_shape(self):
        if self.kind == "dense":
            return (self.out_features,)
        if self.kind in ("conv2d", "tconv2d"):
            return (self.out_channels,)
        return None

    def fans(self):
        kk = int(np.prod(self.kernel))
        if self.kind == "dense":
            return self.in_features, self.out_features
        return self.in_channels * kk, self.out_channels * kk

    def n_params(self):
        ws = self.weight_shape()
        return 0 if ws is None else int(np.prod(ws)) + int(np.prod(self.bias_shape()))

    def output_shape(self, in_shape):
        if self.kind == "dense":
            if in_shape != (self.in_features,):
                raise ValueError(f"dense expects ({self.in_features},), got {in_shape}")
            return (self.out_features,)
        if self.kind in ("conv2d", "tconv2d"):
            if len(in_shape) != 3 or in_shape[0] != self.in_channels:
                raise ValueError(f"{self.kind} expects {self.in_channels} channels, got {in_shape}")
            hw = []
            for n, k, s, p in zip(in_shape[1:], self.kernel, self.stride, self.padding):
                hw.append((n + 2 * p - k) // s + 1 if self.kind == "conv2d" else (n - 1) * s + k - 2 * p)
            if min(hw) < 1:
                raise ValueError(f"{self.kind} produces empty output from {in_shape}")
            return (self.out_channels, *hw)
        if self.kind == "reshape":
            if int(np.prod(in_shape)) != int(np.prod(self.shape)):
                raise ValueError(f"cannot reshape {in_shape} to {self.shape}")
            return self.shape
        if self.kind == "crop":
            if len(self.shape) != len(in_shape) or any(a > b for a, b in zip(self.shape, in_shape)):
                raise ValueError(f"cannot crop {in_shape} to {self.shape}")
            return self.shape
        raise ValueError(f"unknown layer kind {self.kind!r}")


@dataclass
class NetSpec:
    input_shape: tuple
    layers: list = field(default_factory=list)

    def __post_init__(self):
        self.input_shape = tuple(self.input_shape)
        self.layers = [l if isinstance(l, Layer) else Layer(**l) for l in self.layers]
        self.output_shape  # validates composition

    @property
    def output_shape(self):
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape

    @property
    def n_params(self):
        return sum(l.n_params() for l in self.layers)

    def offsets(self):
        out, k = [], 0
        for l in self.layers:
            out.append(k)
            k += l.n_params()
        return out

    def to_dict(self):
        return {"input_shape": list(self.input_shape), "layers": [_layer_dict(l) for l in self.layers]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["input_shape"]), [Layer(**l) for l in d["layers"]])


def _layer_dict(layer):
    d = asdict(layer)
    for k in ("kernel", "stride", "padding", "shape"):
        d[k] = list(d[k])
    return d


def init_params(spec: NetSpec, seed=0) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    theta = np.zeros(spec.n_params)
    for layer, off in zip(spec.layers, spec.offsets()):
        ws = layer.weight_shape()
        if ws is None:
            continue
        n_w = int(np.prod(ws))
        fan_in, fan_out = layer.fans()
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        theta[off:off + n_w] = rng.uniform(-bound, bound, n_w)
    return theta


def apply(spec: NetSpec, theta: Tensor, x: Tensor) -> Tensor:
    """Differentiable forward pass on a batch ``[B, *input_shape]``."""
    theta, x = T.as_tensor(theta), T.as_tensor(x)
    if x.shape[1:] != spec.input_shape:
        raise ValueError(f"input shape {x.shape[1:]} does not match {spec.input_shape}")
    batch = x.shape[0]
    for layer, off in zip(spec.layers, spec.offsets()):
        ws, bs = layer.weight_shape(), layer.bias_shape()
        if ws is not None:
            n_w = int(np.prod(ws))
            w = theta[off:off + n_w].reshape(ws)
            b = theta[off + n_w:off + n_w + int(np.prod(bs))]
        if layer.kind == "dense":
            x = x @ w + b
        elif layer.kind == "conv2d":
            x = T.conv2d(x, w, layer.stride, layer.padding) + b.reshape(1, -1, 1, 1)
        elif layer.kind == "tconv2d":
            x = T.conv_transpose2d(x, w, layer.stride, layer.padding) + b.reshape(1, -1, 1, 1)
        elif layer.kind == "reshape":
            x = x.reshape((batch,) + layer.shape)
        elif layer.kind == "crop":
            x = x[(slice(None),) + tuple(slice(0, n) for n in layer.shape)]
        if layer.activation == "leaky_relu":
            x = T.leaky_relu(x, LEAKY_SLOPE)
    return x


def forward(spec: NetSpec, theta, x) -> np.ndarray:
    with T.no_grad():
        return apply(spec, Tensor(theta), Tensor(x)).data


def backward(spec: NetSpec, theta, x, upstream):
    """Vector-Jacobian products ``(dL/dtheta, dL/dx)`` for ``dL/doutput = upstream``."""
    th = Tensor(theta, requires_grad=True)
    xt = Tensor(x, requires_grad=True)
    out = apply(spec, th, xt)
    g_th, g_x = T.grad(out, [th, xt], grad_outputs=Tensor(upstream))
    return g_th.data, g_x.data


def _fd_input_grad(spec, theta, x, h=1e-6):
    """Central-difference ``d sum(D(x)) / dx``; for debugging the exact path."""
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + h
        fp = forward(spec, theta, x).sum()
        flat[k] = old - h
        fm = forward(spec, theta, x).sum()
        flat[k] = old
        gf[k] = (fp - fm) / (2 * h)
    return g


def gradient_penalty(spec: NetSpec, theta: Tensor, x_hat) -> Tensor:
    """Differentiable batch mean of ``(||grad_x D(x_hat)||_2 - 1)^2``.

    The per-sample gradient norm is 0 at the origin and its subgradient
    there is taken to be 0.
    """
    xt = Tensor(np.asarray(x_hat, dtype=np.float64), requires_grad=True)
    out = apply(spec, theta, xt)
    if out.shape[1:] != (1,):
        raise ValueError(f"penalty needs a scalar critic, got output shape {out.shape[1:]}")
    (g,) = T.grad(out.sum(), [xt], create_graph=True)
    axes = tuple(range(1, g.ndim))
    n = T.norm(g, axis=axes).reshape(-1)
    return ((n - 1.0) ** 2).mean()


def input_grad_norm_penalty(spec: NetSpec, theta, x_hat, method="exact"):
    """Penalty value and its gradient with respect to ``theta``.

    ``method="exact"`` differentiates through the first backward pass.
    ``method="fd"`` is a slow check path: the input gradient comes from
    central differences and the theta-gradient from differences of the
    penalty value.
    """
    if method == "exact":
        th = Tensor(np.asarray(theta, dtype=np.float64), requires_grad=True)
        pen = gradient_penalty(spec, th, x_hat)
        (g_th,) = T.grad(pen, [th])
        return float(pen.data), g_th.data
    if method == "fd":
        theta = np.array(theta, dtype=np.float64)
        x_hat = np.array(x_hat, dtype=np.float64)

        def value(th):
            g = _fd_input_grad(spec, th, x_hat.copy())
            nrm = np.sqrt((g.reshape(len(g), -1) ** 2).sum(axis=1))
            return float(np.mean((nrm - 1.0) ** 2))

        h = 1e-4
        grad = np.zeros_like(theta)
        for k in range(theta.size):
            old = theta[k]
            theta[k] = old + h
            fp = value(theta)
            theta[k] = old - h
            fm = value(theta)
            theta[k] = old
            grad[k] = (fp - fm) / (2 * h)
        return value(theta), grad
    raise ValueError(f"unknown method {method!r}")

"""Layers acting on dual-valued activations.

Every activation carries a leading *slot* axis: slot 0 is the primal value,
slots ``1..T`` are forward-mode tangents. A batch therefore has shape
``(B, T + 1, *features)``. Each layer implements

``forward(params, X) -> (Y, cache)``
    propagates primal and tangents together;
``backward(params, cache, dY) -> (dX, grads)``
    reverse pass for any scalar function of *all* output slots, returning
    cotangents for all input slots and the parameter gradients.

Running ``backward`` after a tangent-carrying ``forward`` differentiates
through the Jacobian (reverse-over-forward).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def describe(self) -> str:
        return " ".join([self.kind] + [f"{k}={_fmt(v)}" for k, v in sorted(self.params.items())])


def _fmt(v) -> str:
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def conv_out_length(l_in: int, kernel: int, stride: int, padding: int) -> int:
    return (l_in + 2 * padding - kernel) // stride + 1


def convT_out_length(l_in: int, kernel: int, stride: int, padding: int,
                     output_padding: int = 0) -> int:
    return (l_in - 1) * stride - 2 * padding + kernel + output_padding


def conv_padding(l_in: int, l_out: int, kernel: int, stride: int) -> int:
    """Smallest padding that maps ``l_in`` to ``l_out``."""
    for p in range(kernel):
        if conv_out_length(l_in, kernel, stride, p) == l_out:
            return p
    raise ValueError(f"no padding maps length {l_in} to {l_out} "
                     f"(kernel={kernel}, stride={stride})")


def convT_padding(l_in: int, l_out: int, kernel: int, stride: int) -> tuple[int, int]:
    """Smallest ``(padding, output_padding)`` mapping ``l_in`` to ``l_out``."""
    for p in range(kernel):
        op = l_out - convT_out_length(l_in, kernel, stride, p)
        if 0 <= op < stride:
            return p, op
    raise ValueError(f"no padding maps length {l_in} to {l_out} "
                     f"(kernel={kernel}, stride={stride})")


class Layer:
    kind = ""

    def __init__(self, spec: LayerSpec):
        self.spec = spec

    def param_shapes(self) -> list[tuple[int, ...]]:
        return []

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes())

    def out_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def init_params(self, rng, scheme: str) -> list[np.ndarray]:
        return []

    def forward(self, params, X):
        raise NotImplementedError

    def backward(self, params, cache, dY):
        raise NotImplementedError


def _merge(X):
    """Fold batch and slot axes together for slot-agnostic linear maps."""
    return X.reshape((X.shape[0] * X.shape[1],) + X.shape[2:])


class Split(Layer):
    """Vector of length ``c*l`` to ``c`` channels of length ``l``."""

    kind = "split"

    def out_shape(self, in_shape):
        c = self.spec.params["channels"]
        if len(in_shape) != 1 or in_shape[0] % c:
            raise ValueError(f"split({c}) cannot act on shape {in_shape}")
        return (c, in_shape[0] // c)

    def forward(self, params, X):
        c = self.spec.params["channels"]
        return X.reshape(X.shape[:2] + (c, X.shape[2] // c)), X.shape

    def backward(self, params, cache, dY):
        return dY.reshape(cache), []


class Flat(Layer):
    kind = "flat"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, params, X):
        return X.reshape(X.shape[:2] + (-1,)), X.shape

    def backward(self, params, cache, dY):
        return dY.reshape(cache), []


class Scale(Layer):
    """Per-channel affine map ``(x - shift) * scale`` with frozen coefficients."""

    kind = "scale"

    def _coeffs(self):
        shift = np.asarray(self.spec.params["shift"], dtype=np.float64)[:, None]
        scale = np.asarray(self.spec.params["scale"], dtype=np.float64)[:, None]
        return shift, scale

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[0] != len(self.spec.params["shift"]):
            raise ValueError(f"{self.kind} expects {len(self.spec.params['shift'])} "
                             f"channels, got shape {in_shape}")
        return in_shape

    def forward(self, params, X):
        shift, scale = self._coeffs()
        Y = X * scale
        Y[:, 0] -= shift * scale
        return Y, None

    def backward(self, params, cache, dY):
        _, scale = self._coeffs()
        return dY * scale, []


class ScaleInverse(Scale):
    """Inverse of :class:`Scale`: ``x / scale + shift``."""

    kind = "scale_inverse"

    def forward(self, params, X):
        shift, scale = self._coeffs()
        Y = X / scale
        Y[:, 0] += shift
        return Y, None

    def backward(self, params, cache, dY):
        _, scale = self._coeffs()
        return dY / scale, []


def _init_weight(rng, shape, fan_in, fan_out, scheme):
    if scheme == "kaiming_normal":
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    if scheme == "xavier_uniform":
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=shape)
    raise ValueError(f"unknown init scheme {scheme!r}")


class Full(Layer):
    """Fully connected layer ``W x + b``; ``W`` has shape ``(n_out, n_in)``."""

    kind = "full"

    def param_shapes(self):
        p = self.spec.params
        return [(p["n_out"], p["n_in"]), (p["n_out"],)]

    def out_shape(self, in_shape):
        if in_shape != (self.spec.params["n_in"],):
            raise ValueError(f"full expects ({self.spec.params['n_in']},), got {in_shape}")
        return (self.spec.params["n_out"],)

    def init_params(self, rng, scheme):
        n_out, n_in = self.param_shapes()[0]
        return [_init_weight(rng, (n_out, n_in), n_in, n_out, scheme), np.zeros(n_out)]

    def forward(self, params, X):
        W, b = params
        Y = X @ W.T
        Y[:, 0] += b
        return Y, X

    def backward(self, params, cache, dY):
        W, _ = params
        X = cache
        dW = _merge(dY).T @ _merge(X)
        db = dY[:, 0].sum(axis=0)
        return dY @ W, [dW, db]


class Conv1d(Layer):
    """Strided cross-correlation with zero padding.

    Weights have shape ``(c_out, c_in, kernel)``.
    """

    kind = "conv1d"

    def param_shapes(self):
        p = self.spec.params
        return [(p["c_out"], p["c_in"], p["kernel"]), (p["c_out"],)]

    def out_shape(self, in_shape):
        p = self.spec.params
        if len(in_shape) != 2 or in_shape[0] != p["c_in"]:
            raise ValueError(f"conv1d expects {p['c_in']} channels, got shape {in_shape}")
        l_out = conv_out_length(in_shape[1], p["kernel"], p["stride"], p["padding"])
        if l_out < 1:
            raise ValueError(f"conv1d produces empty output from shape {in_shape}")
        return (p["c_out"], l_out)

    def init_params(self, rng, scheme):
        c_out, c_in, k = self.param_shapes()[0]
        return [_init_weight(rng, (c_out, c_in, k), c_in * k, c_out * k, scheme),
                np.zeros(c_out)]

    def _windows(self, X):
        p = self.spec.params
        Xm = _merge(X)
        pad = p["padding"]
        Xp = np.pad(Xm, ((0, 0), (0, 0), (pad, pad))) if pad else Xm
        win = sliding_window_view(Xp, p["kernel"], axis=2)[:, :, ::p["stride"]]
        return Xp.shape, win

    def forward(self, params, X):
        W, b = params
        padded_shape, win = self._windows(X)
        Y = np.einsum("mclk,ock->mol", win, W, optimize=True)
        Y = Y.reshape(X.shape[:2] + Y.shape[1:])
        Y[:, 0] += b[:, None]
        return Y, (X.shape, padded_shape, win)

    def backward(self, params, cache, dY):
        W, _ = params
        p = self.spec.params
        x_shape, padded_shape, win = cache
        dYm = _merge(dY)
        dW = np.einsum("mol,mclk->ock", dYm, win, optimize=True)
        db = dY[:, 0].sum(axis=(0, 2))
        dwin = np.einsum("mol,ock->mclk", dYm, W, optimize=True)
        dXp = np.zeros(padded_shape)
        s, l_out = p["stride"], dYm.shape[2]
        for j in range(p["kernel"]):
            dXp[:, :, j:j + s * (l_out - 1) + 1:s] += dwin[..., j]
        pad = p["padding"]
        dX = dXp[:, :, pad:padded_shape[2] - pad] if pad else dXp
        return dX.reshape(x_shape), [dW, db]


class ConvTranspose1d(Layer):
    """Transposed convolution, the adjoint of :class:`Conv1d` shape-wise.

    Weights have shape ``(c_in, c_out, kernel)``.
    """

    kind = "convT1d"

    def param_shapes(self):
        p = self.spec.params
        return [(p["c_in"], p["c_out"], p["kernel"]), (p["c_out"],)]

    def _l_out(self, l_in):
        p = self.spec.params
        return convT_out_length(l_in, p["kernel"], p["stride"], p["padding"],
                                p.get("output_padding", 0))

    def out_shape(self, in_shape):
        p = self.spec.params
        if len(in_shape) != 2 or in_shape[0] != p["c_in"]:
            raise ValueError(f"convT1d expects {p['c_in']} channels, got shape {in_shape}")
        return (p["c_out"], self._l_out(in_shape[1]))

    def init_params(self, rng, scheme):
        c_in, c_out, k = self.param_shapes()[0]
        # fan conventions follow the (c_in, c_out, k) weight layout
        return [_init_weight(rng, (c_in, c_out, k), c_out * k, c_in * k, scheme),
                np.zeros(c_out)]

    def forward(self, params, X):
        W, b = params
        p = self.spec.params
        Xm = _merge(X)
        m, _, l_in = Xm.shape
        k, s, pad = p["kernel"], p["stride"], p["padding"]
        l_full = (l_in - 1) * s + k + p.get("output_padding", 0)
        Z = np.einsum("mil,iok->mokl", Xm, W, optimize=True)
        Yf = np.zeros((m, W.shape[1], l_full))
        for j in range(k):
            Yf[:, :, j:j + s * (l_in - 1) + 1:s] += Z[:, :, j, :]
        Y = Yf[:, :, pad:pad + self._l_out(l_in)]
        Y = Y.reshape(X.shape[:2] + Y.shape[1:])
        Y[:, 0] += b[:, None]
        return Y, (X.shape, Xm, l_full)

    def backward(self, params, cache, dY):
        W, _ = params
        p = self.spec.params
        x_shape, Xm, l_full = cache
        k, s, pad = p["kernel"], p["stride"], p["padding"]
        dYm = _merge(dY)
        m, c_out, l_out = dYm.shape
        l_in = Xm.shape[2]
        dYf = np.zeros((m, c_out, l_full))
        dYf[:, :, pad:pad + l_out] = dYm
        dZ = np.empty((m, c_out, k, l_in))
        for j in range(k):
            dZ[:, :, j, :] = dYf[:, :, j:j + s * (l_in - 1) + 1:s]
        dW = np.einsum("mil,mokl->iok", Xm, dZ, optimize=True)
        db = dY[:, 0].sum(axis=(0, 2))
        dX = np.einsum("iok,mokl->mil", W, dZ, optimize=True)
        return dX.reshape(x_shape), [dW, db]


class ELU(Layer):
    """Exponential linear unit, with its dual-number extension."""

    kind = "elu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, params, X):
        x0 = X[:, 0]
        neg = x0 < 0
        ex = np.exp(np.where(neg, x0, 0.0))
        d1 = np.where(neg, ex, 1.0)
        Y = np.empty_like(X)
        Y[:, 0] = np.where(neg, np.expm1(np.minimum(x0, 0.0)), x0)
        Y[:, 1:] = d1[:, None] * X[:, 1:]
        return Y, (X, neg, ex, d1)

    def backward(self, params, cache, dY):
        X, neg, ex, d1 = cache
        dX = np.empty_like(dY)
        dX[:, 1:] = d1[:, None] * dY[:, 1:]
        dX[:, 0] = d1 * dY[:, 0]
        if X.shape[1] > 1:
            d2 = np.where(neg, ex, 0.0)
            dX[:, 0] += d2 * np.sum(X[:, 1:] * dY[:, 1:], axis=1)
        return dX, []


def elu(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.where(x >= 0, x, np.expm1(np.minimum(x, 0.0)))
    return out if out.ndim else float(out)


LAYER_TYPES = {cls.kind: cls for cls in
               (Split, Flat, Scale, ScaleInverse, Full, Conv1d, ConvTranspose1d, ELU)}
LAYER_KINDS = frozenset(LAYER_TYPES)


def make_layer(spec: LayerSpec) -> Layer:
    return LAYER_TYPES[spec.kind](spec)

"""Sequential networks, the convolutional autoencoder and its losses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..symplectic import poisson_transpose_apply
from .layers import LayerSpec, conv_padding, convT_padding, make_layer


class Sequential:
    """Layers applied in order, parameters stored in one flat vector slice."""

    def __init__(self, specs, in_shape: tuple[int, ...]):
        self.specs = list(specs)
        self.layers = [make_layer(s) for s in self.specs]
        self.shapes = [tuple(in_shape)]
        for i, layer in enumerate(self.layers):
            try:
                self.shapes.append(tuple(layer.out_shape(self.shapes[-1])))
            except ValueError as exc:
                raise ValueError(f"layer {i} ({layer.kind}): {exc}") from None
        self.offsets = [0]
        for layer in self.layers:
            self.offsets.append(self.offsets[-1] + layer.n_params())

    @property
    def in_shape(self):
        return self.shapes[0]

    @property
    def out_shape(self):
        return self.shapes[-1]

    @property
    def n_params(self) -> int:
        return self.offsets[-1]

    def unpack(self, theta):
        """Per-layer lists of parameter views into ``theta``."""
        out = []
        for i, layer in enumerate(self.layers):
            views, pos = [], self.offsets[i]
            for shape in layer.param_shapes():
                size = int(np.prod(shape))
                views.append(theta[pos:pos + size].reshape(shape))
                pos += size
            out.append(views)
        return out

    def init(self, rng, scheme: str) -> np.ndarray:
        parts = [p.ravel() for layer in self.layers for p in layer.init_params(rng, scheme)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def forward(self, theta, X):
        params = self.unpack(theta)
        caches = []
        for layer, p in zip(self.layers, params):
            X, cache = layer.forward(p, X)
            caches.append(cache)
        return X, caches

    def backward(self, theta, caches, dY):
        params = self.unpack(theta)
        grad = np.zeros(self.n_params)
        for i in reversed(range(len(self.layers))):
            dY, grads = self.layers[i].backward(params[i], caches[i], dY)
            pos = self.offsets[i]
            for g in grads:
                grad[pos:pos + g.size] = g.ravel()
                pos += g.size
        return dY, grad


@dataclass
class Scaler:
    """Per-channel ``(shift, scale)`` mapping training data into ``[0, 1]``."""

    shift: np.ndarray
    scale: np.ndarray

    def apply(self, X):
        X = np.asarray(X, dtype=np.float64)
        c = len(self.shift)
        Xc = X.reshape(X.shape[:-1] + (c, -1))
        return ((Xc - self.shift[:, None]) * self.scale[:, None]).reshape(X.shape)

    def invert(self, X):
        X = np.asarray(X, dtype=np.float64)
        c = len(self.shift)
        Xc = X.reshape(X.shape[:-1] + (c, -1))
        return (Xc / self.scale[:, None] + self.shift[:, None]).reshape(X.shape)


def fit_scaler(data, channels: int = 2) -> Scaler:
    """Per-channel min/max scaling; constant channels keep ``scale = 1``.

    ``data`` is a :class:`~symmor.linear.SnapshotSet` or an array of states
    with shape ``(M, channels * l)``.
    """
    X = data.columns.T if hasattr(data, "columns") else np.asarray(data, dtype=np.float64)
    Xc = X.reshape(X.shape[0], channels, -1)
    lo = Xc.min(axis=(0, 2))
    hi = Xc.max(axis=(0, 2))
    width = hi - lo
    scale = np.where(width > 0, 1.0 / np.where(width > 0, width, 1.0), 1.0)
    return Scaler(lo, scale)


@dataclass
class Architecture:
    """Convolutional autoencoder layout, given by its encoder half.

    ``channels``/``lengths`` list the conv-block tensor shapes starting at the
    split input ``(2, N)``; ``full`` lists the fully connected lengths
    starting at the flattened conv output and ending at ``2n``. The decoder
    mirrors the encoder. Kernels default to twice the stride; padding is the
    smallest value reproducing the requested lengths.
    """

    channels: list[int]
    lengths: list[int]
    strides: list[int]
    full: list[int]
    kernels: list[int] | None = None

    def __post_init__(self):
        n_conv = len(self.strides)
        if len(self.channels) != n_conv + 1 or len(self.lengths) != n_conv + 1:
            raise ValueError("channels and lengths need one more entry than strides")
        if self.kernels is None:
            self.kernels = [2 * s for s in self.strides]
        if self.full[0] != self.channels[-1] * self.lengths[-1]:
            raise ValueError(
                f"first full length {self.full[0]} must equal the flattened conv "
                f"output {self.channels[-1]} x {self.lengths[-1]}")

    @property
    def dims(self) -> tuple[int, int]:
        return self.channels[0] * self.lengths[0], self.full[-1]

    def specs(self, scaler: Scaler):
        c, l, s, k = self.channels, self.lengths, self.strides, self.kernels
        scale = dict(shift=list(map(float, scaler.shift)), scale=list(map(float, scaler.scale)))
        enc = [LayerSpec("split", {"channels": c[0]}), LayerSpec("scale", scale)]
        for i in range(len(s)):
            pad = conv_padding(l[i], l[i + 1], k[i], s[i])
            enc.append(LayerSpec("conv1d", dict(c_in=c[i], c_out=c[i + 1], kernel=k[i],
                                                stride=s[i], padding=pad)))
            enc.append(LayerSpec("elu"))
        enc.append(LayerSpec("flat"))
        for i in range(len(self.full) - 1):
            enc.append(LayerSpec("full", dict(n_in=self.full[i], n_out=self.full[i + 1])))
            if i < len(self.full) - 2:
                enc.append(LayerSpec("elu"))

        dec = []
        for i in reversed(range(len(self.full) - 1)):
            dec.append(LayerSpec("full", dict(n_in=self.full[i + 1], n_out=self.full[i])))
            dec.append(LayerSpec("elu"))
        dec.append(LayerSpec("split", {"channels": c[-1]}))
        for i in reversed(range(len(s))):
            pad, opad = convT_padding(l[i + 1], l[i], k[i], s[i])
            dec.append(LayerSpec("convT1d", dict(c_in=c[i + 1], c_out=c[i], kernel=k[i],
                                                 stride=s[i], padding=pad,
                                                 output_padding=opad)))
            if i > 0:
                dec.append(LayerSpec("elu"))
        dec += [LayerSpec("scale_inverse", scale), LayerSpec("flat")]
        return enc, dec


def reference_architecture(two_n: int) -> Architecture:
    """Weakly symplectic DCA layout at ``N = 2048``."""
    return Architecture(channels=[2, 2, 4, 8, 16, 32, 64],
                        lengths=[2048, 512, 256, 128, 64, 16, 2],
                        strides=[4, 2, 2, 2, 4, 8],
                        full=[128, two_n])


def desk_architecture(N: int, two_n: int) -> Architecture:
    """Small layout for desk-scale runs; ``N`` must be divisible by 16."""
    if N % 16:
        raise ValueError(f"desk architecture needs N divisible by 16, got {N}")
    flat = 8 * (N // 16)
    full = [flat, 32, two_n] if flat > 32 else [flat, two_n]
    return Architecture(channels=[2, 4, 8], lengths=[N, N // 4, N // 16],
                        strides=[4, 4], full=full)


@dataclass
class Autoencoder:
    encoder: Sequential
    decoder: Sequential
    theta: np.ndarray
    data_norm: str = "half"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.encoder.out_shape != self.decoder.in_shape:
            raise ValueError(f"encoder output {self.encoder.out_shape} does not match "
                             f"decoder input {self.decoder.in_shape}")
        if self.decoder.out_shape != self.encoder.in_shape:
            raise ValueError(f"decoder output {self.decoder.out_shape} does not match "
                             f"encoder input {self.encoder.in_shape}")
        if self.theta.size != self.n_theta:
            raise ValueError(f"parameter vector has {self.theta.size} entries, "
                             f"layout needs {self.n_theta}")
        if self.data_norm not in ("half", "full"):
            raise ValueError("data_norm must be 'half' or 'full'")

    @property
    def dims(self) -> tuple[int, int]:
        return self.encoder.in_shape[0], self.encoder.out_shape[0]

    @property
    def n_theta(self) -> int:
        return self.encoder.n_params + self.decoder.n_params

    def split_theta(self, theta=None):
        theta = self.theta if theta is None else theta
        k = self.encoder.n_params
        return theta[:k], theta[k:]

    def copy(self, theta=None) -> "Autoencoder":
        return Autoencoder(self.encoder, self.decoder,
                           np.array(self.theta if theta is None else theta, dtype=np.float64),
                           self.data_norm, dict(self.meta))

    @property
    def scaler(self) -> Scaler | None:
        for spec in self.encoder.specs:
            if spec.kind == "scale":
                return Scaler(np.asarray(spec.params["shift"], dtype=np.float64),
                              np.asarray(spec.params["scale"], dtype=np.float64))
        return None

    def loss_norm(self) -> int:
        two_N = self.dims[0]
        return two_N // 2 if self.data_norm == "half" else two_N


def build_autoencoder(encoder_specs, decoder_specs, dims, seed: int = 0,
                      init_scheme: str = "kaiming_normal", data_norm: str = "half") -> Autoencoder:
    """Instantiate an autoencoder with seeded weights and zero biases."""
    two_N, two_n = dims
    enc = Sequential(encoder_specs, (two_N,))
    dec = Sequential(decoder_specs, (two_n,))
    if enc.out_shape != (two_n,):
        raise ValueError(f"encoder maps to {enc.out_shape}, expected ({two_n},)")
    rng = np.random.default_rng(seed)
    theta = np.concatenate([enc.init(rng, init_scheme), dec.init(rng, init_scheme)])
    return Autoencoder(enc, dec, theta, data_norm,
                       {"seed": seed, "init_scheme": init_scheme})


def _lift(X, tangents=None):
    """Batch of states -> dual array ``(B, 1 + T, dim)``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if tangents is None:
        return X[:, None, :].copy()
    T = np.asarray(tangents, dtype=np.float64)
    out = np.empty((X.shape[0], 1 + T.shape[0], X.shape[1]))
    out[:, 0] = X
    out[:, 1:] = T
    return out


def encode(ae: Autoencoder, x, theta=None):
    x = np.asarray(x, dtype=np.float64)
    th_e, _ = ae.split_theta(theta)
    Z, _ = ae.encoder.forward(th_e, _lift(x))
    return Z[:, 0] if x.ndim == 2 else Z[0, 0]


def decode(ae: Autoencoder, xr, theta=None):
    xr = np.asarray(xr, dtype=np.float64)
    _, th_d = ae.split_theta(theta)
    Y, _ = ae.decoder.forward(th_d, _lift(xr))
    return Y[:, 0] if xr.ndim == 2 else Y[0, 0]


def decode_with_jacobian(ae: Autoencoder, xr, theta=None):
    """Decoder value and Jacobian ``(2N, 2n)`` via ``2n`` forward tangents."""
    xr = np.asarray(xr, dtype=np.float64)
    _, th_d = ae.split_theta(theta)
    two_n = ae.dims[1]
    Y, _ = ae.decoder.forward(th_d, _lift(xr, np.eye(two_n)))
    jac = np.swapaxes(Y[:, 1:], 1, 2)
    if xr.ndim == 2:
        return Y[:, 0], jac
    return Y[0, 0], jac[0]


def decoder_jacobian(ae: Autoencoder, xr, theta=None):
    return decode_with_jacobian(ae, xr, theta)[1]


def decoder_jvp(ae: Autoencoder, xr, v, theta=None):
    _, th_d = ae.split_theta(theta)
    Y, _ = ae.decoder.forward(th_d, _lift(xr, np.atleast_2d(v)))
    return Y[0, 1]


def decoder_vjp(ae: Autoencoder, xr, w, theta=None):
    _, th_d = ae.split_theta(theta)
    _, caches = ae.decoder.forward(th_d, _lift(xr))
    dX, _ = ae.decoder.backward(th_d, caches, np.asarray(w, dtype=np.float64)[None, None, :])
    return dX[0, 0]


def _poisson_rows(M, transpose=False):
    """Apply ``J`` (or ``J^T``) along axis 1 of a batch of matrices."""
    h = M.shape[1] // 2
    if transpose:
        return np.concatenate([-M[:, h:], M[:, :h]], axis=1)
    return np.concatenate([M[:, h:], -M[:, :h]], axis=1)


def _sympl_residual(jac):
    """``Jac^T J_2N Jac - J_2n`` for a batch of Jacobians."""
    G = np.swapaxes(jac, 1, 2) @ _poisson_rows(jac)
    n = jac.shape[2] // 2
    G[:, :n, n:] -= np.eye(n)
    G[:, n:, :n] += np.eye(n)
    return G


@dataclass
class LossValues:
    total: float
    data: float
    sympl: float


def _losses_and_grad(ae: Autoencoder, X, alpha: float, theta=None, want_grad=True):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    B = X.shape[0]
    th_e, th_d = ae.split_theta(theta)
    two_n = ae.dims[1]
    need_data = alpha > 0 or not want_grad
    need_sympl = alpha < 1 or not want_grad

    Z, enc_caches = ae.encoder.forward(th_e, _lift(X))
    tangents = np.eye(two_n) if need_sympl else None
    Y, dec_caches = ae.decoder.forward(th_d, _lift(Z[:, 0], tangents))

    err = Y[:, 0] - X
    norm = ae.loss_norm() * B
    l_data = float(np.sum(err * err)) / norm if need_data else 0.0
    l_sympl = 0.0
    if need_sympl:
        jac = np.swapaxes(Y[:, 1:], 1, 2)
        G = _sympl_residual(jac)
        l_sympl = float(np.sum(G * G)) / (two_n**2 * B)
    values = LossValues(alpha * l_data + (1 - alpha) * l_sympl, l_data, l_sympl)
    if not want_grad:
        return values, None

    dY = np.zeros_like(Y)
    if alpha > 0:
        dY[:, 0] = (2.0 * alpha / norm) * err
    if alpha < 1:
        Gt = np.swapaxes(G, 1, 2)
        d_jac = _poisson_rows(jac) @ Gt + _poisson_rows(jac, transpose=True) @ G
        d_jac *= 2.0 * (1 - alpha) / (two_n**2 * B)
        dY[:, 1:] = np.swapaxes(d_jac, 1, 2)
    dZ, g_dec = ae.decoder.backward(th_d, dec_caches, dY)
    dZ_primal = dZ[:, :1]
    _, g_enc = ae.encoder.backward(th_e, enc_caches, dZ_primal)
    return values, np.concatenate([g_enc, g_dec])


def evaluate_losses(ae: Autoencoder, X, alpha: float, theta=None) -> LossValues:
    return _losses_and_grad(ae, X, alpha, theta, want_grad=False)[0]


def loss_data(ae: Autoencoder, X, theta=None) -> float:
    return evaluate_losses(ae, X, 1.0, theta).data


def loss_sympl(ae: Autoencoder, X, theta=None) -> float:
    return evaluate_losses(ae, X, 0.0, theta).sympl


def loss_total(ae: Autoencoder, X, alpha: float, theta=None) -> float:
    return evaluate_losses(ae, X, alpha, theta).total


def grad_total(ae: Autoencoder, X, alpha: float, theta=None) -> np.ndarray:
    """Gradient of ``alpha * L_data + (1 - alpha) * L_sympl`` w.r.t. all parameters."""
    return _losses_and_grad(ae, X, alpha, theta)[1]


def value_and_grad(ae: Autoencoder, X, alpha: float, theta=None):
    return _losses_and_grad(ae, X, alpha, theta)


def linear_autoencoder(V, encoder_matrix=None) -> Autoencoder:
    """Wrap a basis ``V`` as a network with one bias-free full layer per side.

    The encoder defaults to the symplectic inverse of ``V``.
    """
    V = np.asarray(V, dtype=np.float64)
    two_N, two_n = V.shape
    if encoder_matrix is None:
        N, n = two_N // 2, two_n // 2
        encoder_matrix = poisson_transpose_apply(n, poisson_transpose_apply(N, V).T)
    enc = Sequential([LayerSpec("full", dict(n_in=two_N, n_out=two_n))], (two_N,))
    dec = Sequential([LayerSpec("full", dict(n_in=two_n, n_out=two_N))], (two_n,))
    theta = np.concatenate([np.asarray(encoder_matrix).ravel(), np.zeros(two_n),
                            V.ravel(), np.zeros(two_N)])
    return Autoencoder(enc, dec, theta)

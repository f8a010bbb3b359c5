"""Reduced models on a (possibly nonlinear) decoder manifold.

``x(t) ~ x_ref + d(x_r(t))``. Three projections are provided:

* SMG, symplectic manifold Galerkin: ``x_r' = J_2n Dd^T grad H``, a
  Hamiltonian system in the reduced coordinates;
* MG, manifold Galerkin: least-squares projection of ``X_H`` onto the
  tangent space;
* M-LSPG: per midpoint step, minimize the full-order residual over the
  manifold by Gauss-Newton.

All solvers are quasi-Newton: ``Dd`` is evaluated at the current iterate
and second derivatives of the decoder are dropped.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics
from .autonet import network as _net
from .integrators import (IMPLICIT_MIDPOINT, ROM_NEWTON, NewtonConvergenceError,
                          NewtonOptions, RKTableau, rk_stage_solve)
from .linear import RankDeficiencyError, projection_matrix
from .symplectic import poisson_apply, symplectic_inverse_apply
from .traces import RomTrace, run_steps

METHODS = ("SMG", "MG", "MLSPG")


class DecoderHandle:
    """Uniform access to ``d``, ``Dd`` and an encoder.

    Subclasses implement :meth:`_evaluate` returning ``(d(x_r), Dd(x_r))``;
    the last evaluation is memoized since solvers ask for value and
    Jacobian at the same point.
    """

    source = "abstract"

    def __init__(self, dims: tuple[int, int]):
        self.dims = tuple(dims)
        self._memo_key = None
        self._memo_val = None

    def _evaluate(self, x_r):
        raise NotImplementedError

    def value_and_jacobian(self, x_r):
        x_r = np.asarray(x_r, dtype=np.float64)
        if x_r.shape != (self.dims[1],):
            raise ValueError(f"reduced state has shape {x_r.shape}, expected ({self.dims[1]},)")
        key = x_r.tobytes()
        if key != self._memo_key:
            self._memo_val = self._evaluate(x_r)
            self._memo_key = key
        return self._memo_val

    def eval(self, x_r) -> np.ndarray:
        return self.value_and_jacobian(x_r)[0]

    def jacobian(self, x_r) -> np.ndarray:
        return self.value_and_jacobian(x_r)[1]

    def eval_batch(self, Xr) -> np.ndarray:
        """``d`` applied row-wise to ``(B, 2n)``."""
        return np.array([self._evaluate(x)[0] for x in np.atleast_2d(Xr)])

    def jvp(self, x_r, v) -> np.ndarray:
        return self.jacobian(x_r) @ v

    def vjp(self, x_r, w) -> np.ndarray:
        return self.jacobian(x_r).T @ w

    def symplectic_inverse(self, x_r, y) -> np.ndarray:
        """``Dd(x_r)^+ y``."""
        return symplectic_inverse_apply(self.jacobian(x_r), y)

    def encode(self, x) -> np.ndarray:
        raise NotImplementedError

    def initial_reduced(self) -> np.ndarray:
        raise NotImplementedError


class LinearDecoder(DecoderHandle):
    """``d(x_r) = V x_r`` with a left inverse as encoder."""

    source = "linear_basis"

    def __init__(self, V, encoder_matrix=None):
        V = numerics.as_matrix(getattr(V, "V", V))
        super().__init__(V.shape)
        self.V = V
        self.E = projection_matrix(V) if encoder_matrix is None else numerics.as_matrix(encoder_matrix)

    def _evaluate(self, x_r):
        return self.V @ x_r, self.V

    def eval_batch(self, Xr):
        return np.atleast_2d(Xr) @ self.V.T

    def jvp(self, x_r, v):
        return self.V @ v

    def vjp(self, x_r, w):
        return self.V.T @ w

    def encode(self, x):
        return np.asarray(x) @ self.E.T

    def initial_reduced(self):
        return np.zeros(self.dims[1])


class NetworkDecoder(DecoderHandle):
    """Decoder half of a trained autoencoder."""

    source = "network"

    def __init__(self, ae):
        super().__init__(ae.dims)
        self.ae = ae

    def _evaluate(self, x_r):
        return _net.decode_with_jacobian(self.ae, x_r)

    def eval_batch(self, Xr):
        return _net.decode(self.ae, np.atleast_2d(Xr))

    def jvp(self, x_r, v):
        return _net.decoder_jvp(self.ae, x_r, v)

    def vjp(self, x_r, w):
        return _net.decoder_vjp(self.ae, x_r, w)

    def encode(self, x):
        return _net.encode(self.ae, x)

    def initial_reduced(self):
        return _net.encode(self.ae, np.zeros(self.dims[0]))


@dataclass
class RomSetup:
    decoder: DecoderHandle
    x_ref: np.ndarray
    x_r0: np.ndarray
    model: object
    method: str = "SMG"

    @property
    def two_n(self) -> int:
        return self.decoder.dims[1]

    def reconstruct(self, x_r) -> np.ndarray:
        return self.x_ref + self.decoder.eval(x_r)


def make_setup(decoder: DecoderHandle, x0, model, method: str = "SMG") -> RomSetup:
    """Reference state ``x_0 - d(x_r0)`` reproducing the initial value."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    x0 = numerics.as_vector(getattr(x0, "x", x0))
    if decoder.dims[0] != model.dim or x0.shape[0] != model.dim:
        raise ValueError(f"decoder dims {decoder.dims} do not match model dimension {model.dim}")
    x_r0 = np.asarray(decoder.initial_reduced(), dtype=np.float64)
    return RomSetup(decoder, x0 - decoder.eval(x_r0), x_r0, model, method)


def _hessian(model):
    return model.A


def smg_field(setup: RomSetup, x_r) -> np.ndarray:
    """``J_2n Dd^T grad H(x_ref + d(x_r))``."""
    d, jac = setup.decoder.value_and_jacobian(x_r)
    g = setup.model.grad_hamiltonian(setup.x_ref + d)
    return poisson_apply(setup.two_n // 2, jac.T @ g)


def _smg_jacobian(setup: RomSetup, x_r) -> np.ndarray:
    jac = setup.decoder.jacobian(x_r)
    return poisson_apply(setup.two_n // 2, jac.T @ (_hessian(setup.model) @ jac))


def _gram_solve(jac, rhs):
    G = jac.T @ jac
    ev = np.linalg.eigvalsh(G)
    if ev[0] <= 1e-12 * max(ev[-1], 1e-300):
        raise RankDeficiencyError("decoder Jacobian is rank deficient")
    return numerics.solve_dense(G, rhs)


def mg_field(setup: RomSetup, x_r) -> np.ndarray:
    """``(Dd^T Dd)^{-1} Dd^T X_H(x_ref + d(x_r))``."""
    d, jac = setup.decoder.value_and_jacobian(x_r)
    return _gram_solve(jac, jac.T @ setup.model.vector_field(setup.x_ref + d))


def _mg_jacobian(setup: RomSetup, x_r) -> np.ndarray:
    jac = setup.decoder.jacobian(x_r)
    return _gram_solve(jac, jac.T @ (setup.model.field_matrix() @ jac))


def _galerkin_step(field, jacobian):
    def step(setup, x_r_prev, dt, opts=ROM_NEWTON, tab=IMPLICIT_MIDPOINT):
        sol = rk_stage_solve(lambda y: field(setup, y), x_r_prev, dt, tab, opts,
                             jacobian=lambda y: jacobian(setup, y))
        x_next = x_r_prev + dt * (tab.b @ sol.w)
        return x_next, sol
    return step


smg_step = _galerkin_step(smg_field, _smg_jacobian)
smg_step.__doc__ = "One quasi-Newton RK step of the SMG reduced system; returns ``(x_r, StageSolution)``."
mg_step = _galerkin_step(mg_field, _mg_jacobian)
mg_step.__doc__ = "One quasi-Newton RK step of the MG reduced system; returns ``(x_r, StageSolution)``."


@dataclass
class GaussNewtonResult:
    x_r: np.ndarray
    iterations: int
    optimality: float


def mlspg_step(setup: RomSetup, x_r_prev, dt: float,
               opts: NewtonOptions = ROM_NEWTON) -> GaussNewtonResult:
    """Minimize the full-order midpoint residual over ``x_ref + d(.)``.

    Gauss-Newton with ``Dd`` frozen at each iterate; converged when the
    normal-equation residual ``||Jr^T r||`` falls below the tolerance.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    dec, model = setup.decoder, setup.model
    x_r_prev = np.asarray(x_r_prev, dtype=np.float64)
    d_prev = dec.eval(x_r_prev)
    JA = model.field_matrix()
    M = -0.5 * dt * JA
    M[np.diag_indices_from(M)] += 1.0
    y = x_r_prev.copy()
    it, history = 0, []
    while True:
        d, jac = dec.value_and_jacobian(y)
        mid = setup.x_ref + 0.5 * (d + d_prev)
        r = d - d_prev - dt * model.vector_field(mid)
        Jr = M @ jac
        opt = float(np.linalg.norm(Jr.T @ r))
        history.append(opt)
        if opt <= opts.threshold(0.0):
            return GaussNewtonResult(y, it, opt)
        if it >= opts.max_iter:
            raise NewtonConvergenceError(history, it)
        delta, *_ = np.linalg.lstsq(Jr, -r, rcond=None)
        y = y + delta
        it += 1


def integrate_rom(setup: RomSetup, K: int, T: float = 1.0,
                  opts: NewtonOptions = ROM_NEWTON,
                  tab: RKTableau = IMPLICIT_MIDPOINT) -> RomTrace:
    """Run the configured reduced model; a failed step ends the trace early."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    dt = T / K if K else 0.0
    method = setup.method
    if method == "MLSPG":
        if tab.s != 1 or tab.a[0, 0] != 0.5 or tab.b[0] != 1.0:
            raise ValueError("M-LSPG is only defined for the implicit midpoint rule")

        def step(x):
            res = mlspg_step(setup, x, dt, opts)
            return res.x_r, ((res.x_r - x) / dt)[None, :], res.iterations, res.optimality
    else:
        stepper = smg_step if method == "SMG" else mg_step

        def step(x):
            x_next, sol = stepper(setup, x, dt, opts, tab)
            return x_next, sol.w, sol.iterations, float(sol.residual_norms.max())

    return run_steps(method, setup.two_n, getattr(setup.model, "mu", float("nan")), dt,
                     setup.x_r0, K, step, setup.reconstruct, setup.x_ref, tab)


__all__ = [
    "METHODS", "DecoderHandle", "GaussNewtonResult", "LinearDecoder", "NetworkDecoder",
    "RomSetup", "integrate_rom", "make_setup", "mg_field", "mg_step", "mlspg_step",
    "smg_field", "smg_step",
]

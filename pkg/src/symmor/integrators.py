"""Runge-Kutta time stepping for Hamiltonian fields.

Stage equations ``w_i = f(x + dt * sum_j a_ij w_j)`` are solved by Newton's
method. For linear fields the Newton matrix is constant and its LU factors
are reused across steps.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numerics


@dataclass(frozen=True)
class RKTableau:
    a: np.ndarray
    b: np.ndarray
    name: str = ""

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=np.float64))
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        if a.shape != (b.size, b.size):
            raise ValueError(f"a must be {b.size}x{b.size}, got {a.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("tableau entries must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def s(self) -> int:
        return self.b.size


IMPLICIT_MIDPOINT = RKTableau([[0.5]], [1.0], "implicit_midpoint")
EXPLICIT_EULER = RKTableau([[0.0]], [1.0], "explicit_euler")
HEUN = RKTableau([[0.0, 0.0], [1.0, 0.0]], [0.5, 0.5], "heun")
_r3 = np.sqrt(3.0) / 6.0
GAUSS2 = RKTableau([[0.25, 0.25 - _r3], [0.25 + _r3, 0.25]], [0.5, 0.5], "gauss2")

TABLEAUS = {t.name: t for t in (IMPLICIT_MIDPOINT, EXPLICIT_EULER, HEUN, GAUSS2)}


def symplecticity_violation(tab: RKTableau) -> float:
    """``max_ij |b_i a_ij + b_j a_ji - b_i b_j|``."""
    ba = tab.b[:, None] * tab.a
    return float(np.max(np.abs(ba + ba.T - np.outer(tab.b, tab.b))))


def is_symplectic_tableau(tab: RKTableau, tol: float = 1e-14) -> bool:
    return symplecticity_violation(tab) <= tol


@dataclass(frozen=True)
class NewtonOptions:
    abs_tol: float = 1e-12
    max_iter: int = 25
    rel_tol: float = 0.0

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.rel_tol < 0:
            raise ValueError("rel_tol must be nonnegative")

    def threshold(self, scale: float) -> float:
        return self.abs_tol + self.rel_tol * scale


# the rounding floor of J A x grows like 1/dxi^2, so the FOM also needs a relative term
FOM_NEWTON = NewtonOptions(abs_tol=1e-12, max_iter=25, rel_tol=1e-10)
ROM_NEWTON = NewtonOptions(abs_tol=1e-8, max_iter=15)


class NewtonConvergenceError(RuntimeError):
    def __init__(self, residual_norms, iterations: int, step: int | None = None):
        self.residual_norms = np.asarray(residual_norms)
        self.iterations = iterations
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(
            f"Newton iteration failed{where} after {iterations} iterations; "
            f"stage residual norms {self.residual_norms}")


@dataclass
class StageSolution:
    w: np.ndarray              # (s, dim)
    residual_norms: np.ndarray  # (s,)
    iterations: int



def _field_and_jacobian(field_fn, jacobian):
    if isinstance(field_fn, np.ndarray):
        L = field_fn
        return (lambda y: L @ y), L
    if jacobian is None:
        raise ValueError("a jacobian is required for nonlinear fields")
    return field_fn, jacobian


def newton_matrix(dt: float, tab: RKTableau, blocks) -> np.ndarray:
    """``I - dt * [a_ij L_i]`` for per-stage field Jacobians ``L_i``."""
    s = tab.s
    d = blocks[0].shape[0]
    M = np.zeros((s * d, s * d))
    for i in range(s):
        for j in range(s):
            if tab.a[i, j] != 0.0:
                M[i * d:(i + 1) * d, j * d:(j + 1) * d] = -dt * tab.a[i, j] * blocks[i]
    M[np.diag_indices_from(M)] += 1.0
    return M


def rk_stage_solve(field_fn, x_prev, dt: float, tab: RKTableau,
                   opts: NewtonOptions = FOM_NEWTON, jacobian=None,
                   cache: dict | None = None, w0=None) -> StageSolution:
    """Solve the RK stage equations for the velocities ``w_1..w_s``.

    Parameters
    ----------
    field_fn
        Either the matrix ``L`` of a linear field ``f(x) = L x`` or a callable.
    jacobian
        Matrix (constant) or callable ``y -> df/dx(y)``; may be an
        approximation, which turns the iteration into a quasi-Newton scheme.
    cache
        Optional dict holding LU factors of a constant Newton matrix, keyed
        on ``dt``; pass the same dict for every step of a run.
    w0
        Optional initial guess, shape ``(s, dim)``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    f, jac = _field_and_jacobian(field_fn, jacobian)
    x_prev = np.asarray(x_prev, dtype=np.float64)
    s, d = tab.s, x_prev.shape[0]
    W = np.tile(f(x_prev), (s, 1)) if w0 is None else np.array(w0, dtype=np.float64)
    constant = isinstance(jac, np.ndarray)

    it = 0
    while True:
        Y = x_prev + dt * (tab.a @ W)
        F = np.stack([f(y) for y in Y])
        R = W - F
        norms = np.linalg.norm(R, axis=1)
        scale = float(np.max(np.linalg.norm(W, axis=1)))
        if np.all(norms <= opts.threshold(scale)):
            return StageSolution(W, norms, it)
        if it >= opts.max_iter:
            raise NewtonConvergenceError(norms, it)
        if constant:
            key = ("newton", dt)
            factors = cache.get(key) if cache is not None else None
            if factors is None:
                factors = numerics.lu_factor(newton_matrix(dt, tab, [jac] * s))
                if cache is not None:
                    cache[key] = factors
        else:
            factors = numerics.lu_factor(newton_matrix(dt, tab, [jac(y) for y in Y]))
        W = W - numerics.lu_solve(factors, R.reshape(-1)).reshape(s, d)
        it += 1


def rk_update(x_prev, dt: float, tab: RKTableau, W) -> np.ndarray:
    return x_prev + dt * (tab.b @ W)


def rk_step(field_fn, x_prev, dt: float, tab: RKTableau,
            opts: NewtonOptions = FOM_NEWTON, jacobian=None, cache=None):
    """One RK step; returns ``(x_next, StageSolution)``."""
    sol = rk_stage_solve(field_fn, x_prev, dt, tab, opts, jacobian, cache)
    return rk_update(np.asarray(x_prev, dtype=np.float64), dt, tab, sol.w), sol


@dataclass
class Trajectory:
    states: np.ndarray                # (K+1, dim)
    dt: float
    hamiltonian_trace: np.ndarray     # (K+1,)
    stage_velocities: np.ndarray      # (K, s, dim)
    residual_norms: np.ndarray        # (K, s)
    iterations: np.ndarray            # (K,)
    tableau: RKTableau = field(default=IMPLICIT_MIDPOINT)
    mu: float = float("nan")

    @property
    def K(self) -> int:
        return self.states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.K + 1)


def integrate(model, x0, K: int, T: float = 1.0, tab: RKTableau = IMPLICIT_MIDPOINT,
              opts: NewtonOptions = FOM_NEWTON) -> Trajectory:
    """Integrate ``dx/dt = X_H(x)`` on an equidistant grid of ``K`` steps.

    ``model`` needs ``vector_field``, ``field_jacobian``, ``hamiltonian`` and
    an ``is_linear`` flag (see :class:`symmor.wave.HamiltonianModel`).
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    mu = getattr(x0, "mu", getattr(model, "mu", float("nan")))
    x = np.array(getattr(x0, "x", x0), dtype=np.float64)
    dim, s = x.shape[0], tab.s
    dt = T / K if K else 0.0

    if getattr(model, "is_linear", False):
        field_fn, jac = model.field_jacobian(), None
    else:
        field_fn, jac = model.vector_field, model.field_jacobian

    states = np.empty((K + 1, dim))
    stages = np.empty((K, s, dim))
    norms = np.empty((K, s))
    iters = np.empty(K, dtype=int)
    states[0] = x
    cache: dict = {}
    for k in range(1, K + 1):
        try:
            x, sol = rk_step(field_fn, x, dt, tab, opts, jac, cache)
        except NewtonConvergenceError as exc:
            exc.step = k
            raise
        states[k] = x
        stages[k - 1] = sol.w
        norms[k - 1] = sol.residual_norms
        iters[k - 1] = sol.iterations
    H = np.array([model.hamiltonian(xk) for xk in states])
    return Trajectory(states, dt, H, stages, norms, iters, tab, mu)

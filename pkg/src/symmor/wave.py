"""Parametric 1D linear wave equation in canonical Hamiltonian form.

The transport of a thin spline pulse with speed ``mu`` on ``(-1/2, 1/2)``
with homogeneous Dirichlet boundaries, discretized by central finite
differences on ``N`` interior points. The state is ``x = [q; p]``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .numerics import spectral_norm
from .symplectic import poisson_apply

MU_RANGE = (5.0 / 12.0, 5.0 / 6.0)


class DomainError(ValueError):
    """Requested time lies outside the modelled (pre-reflection) window."""


@dataclass(frozen=True)
class WaveConfig:
    N: int = 256
    mu: float = 5.0 / 12.0
    T: float = 1.0
    K: int = 500

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"N must be at least 2, got {self.N}")
        if self.K < 1:
            raise ValueError(f"K must be at least 1, got {self.K}")
        if not MU_RANGE[0] <= self.mu <= MU_RANGE[1]:
            warnings.warn(f"mu={self.mu} lies outside the parameter range "
                          f"[{MU_RANGE[0]:.6g}, {MU_RANGE[1]:.6g}]", stacklevel=3)

    @property
    def dxi(self) -> float:
        return 1.0 / (self.N + 1)

    @property
    def dt(self) -> float:
        return self.T / self.K

    def grid(self) -> np.ndarray:
        return np.arange(1, self.N + 1) * self.dxi - 0.5

    def with_(self, **changes) -> "WaveConfig":
        values = dict(N=self.N, mu=self.mu, T=self.T, K=self.K)
        values.update(changes)
        return WaveConfig(**values)


@dataclass(frozen=True)
class CanonicalState:
    x: np.ndarray
    mu: float
    t: float = 0.0

    def __post_init__(self):
        if self.x.ndim != 1 or self.x.shape[0] % 2:
            raise ValueError("canonical states have even length")

    @property
    def q(self) -> np.ndarray:
        return self.x[: self.x.shape[0] // 2]

    @property
    def p(self) -> np.ndarray:
        return self.x[self.x.shape[0] // 2:]


def spline_h(s):
    """Cubic spline pulse profile, supported on ``[0, 2]``."""
    s = np.asarray(s, dtype=np.float64)
    inner = 1.0 - 1.5 * s**2 + 0.75 * s**3
    outer = (2.0 - s) ** 3 / 4.0
    out = np.where((s >= 0) & (s <= 1), inner, np.where((s > 1) & (s <= 2), outer, 0.0))
    return out if out.ndim else float(out)


def spline_h_prime(s):
    s = np.asarray(s, dtype=np.float64)
    inner = -3.0 * s + 2.25 * s**2
    outer = -0.75 * (2.0 - s) ** 2
    out = np.where((s >= 0) & (s <= 1), inner, np.where((s > 1) & (s <= 2), outer, 0.0))
    return out if out.ndim else float(out)


def _u0(xi, mu: float):
    return spline_h(4.0 / mu * np.abs(xi + 0.5 - mu / 2.0))


def _u0_prime(xi, mu: float):
    z = xi + 0.5 - mu / 2.0
    # h'(0) = 0, so the sign convention at the kink is irrelevant
    return spline_h_prime(4.0 / mu * np.abs(z)) * (4.0 / mu) * np.sign(z)


def initial_state(cfg: WaveConfig) -> CanonicalState:
    """Pulse ``u0(xi) = h(s(xi))`` with right-moving momentum ``-mu u0'``."""
    xi = cfg.grid()
    q = _u0(xi, cfg.mu)
    p = -cfg.mu * _u0_prime(xi, cfg.mu)
    return CanonicalState(np.concatenate([q, p]), cfg.mu, 0.0)


def exact_solution(cfg: WaveConfig, t: float) -> CanonicalState:
    """Traveling-wave solution ``u0(xi - mu t)`` before any boundary reflection."""
    t_max = 1.0 / cfg.mu - 1.0
    if not 0.0 <= t < t_max:
        raise DomainError(f"t={t} outside [0, {t_max:.6g}); reflections are not modelled")
    xi = cfg.grid() - cfg.mu * t
    q = _u0(xi, cfg.mu)
    p = -cfg.mu * _u0_prime(xi, cfg.mu)
    return CanonicalState(np.concatenate([q, p]), cfg.mu, t)


def second_difference(N: int, dxi: float) -> np.ndarray:
    """Dense 3-point stencil ``(1, -2, 1) / dxi^2`` with Dirichlet truncation."""
    D = (np.diag(np.full(N, -2.0)) + np.diag(np.ones(N - 1), 1)
         + np.diag(np.ones(N - 1), -1))
    return D / dxi**2


@dataclass
class HamiltonianModel:
    """Quadratic Hamiltonian ``H(x) = x^T A x / 2`` with canonical field ``J A x``."""

    A: np.ndarray
    mu: float = float("nan")
    _field_matrix: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=np.float64)
        if self.A.shape[0] != self.A.shape[1] or self.A.shape[0] % 2:
            raise ValueError(f"system matrix must be square with even size, got {self.A.shape}")
        self._field_matrix = poisson_apply(self.half_dim, self.A)

    is_linear = True

    @property
    def dim(self) -> int:
        return self.A.shape[0]

    @property
    def half_dim(self) -> int:
        return self.A.shape[0] // 2

    def _check(self, x) -> np.ndarray:
        x = np.asarray(x.x if isinstance(x, CanonicalState) else x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise ValueError(f"state has length {x.shape[0]}, model expects {self.dim}")
        return x

    def hamiltonian(self, x) -> float:
        x = self._check(x)
        return 0.5 * float(x @ (self.A @ x))

    def grad_hamiltonian(self, x) -> np.ndarray:
        return self.A @ self._check(x)

    def vector_field(self, x) -> np.ndarray:
        return poisson_apply(self.half_dim, self.grad_hamiltonian(x))

    def field_matrix(self) -> np.ndarray:
        """Matrix ``J A`` of the (linear) Hamiltonian vector field."""
        return self._field_matrix

    def field_jacobian(self, x=None) -> np.ndarray:
        return self._field_matrix

    def lipschitz_constant(self, tol: float = 1e-8) -> float:
        """``||J A||_2``, the Lipschitz constant of the linear field."""
        return spectral_norm(self._field_matrix, tol=tol)


def build_model(cfg: WaveConfig) -> HamiltonianModel:
    """Block system matrix ``[[-mu^2 D_xixi, 0], [0, I]]``."""
    N = cfg.N
    A = np.zeros((2 * N, 2 * N))
    A[:N, :N] = -cfg.mu**2 * second_difference(N, cfg.dxi)
    A[N:, N:] = np.eye(N)
    return HamiltonianModel(A, cfg.mu)


def hamiltonian(m: HamiltonianModel, x) -> float:
    return m.hamiltonian(x)


def grad_hamiltonian(m: HamiltonianModel, x) -> np.ndarray:
    return m.grad_hamiltonian(x)


def vector_field(m: HamiltonianModel, x) -> np.ndarray:
    return m.vector_field(x)


def lipschitz_constant(m: HamiltonianModel, tol: float = 1e-8) -> float:
    return m.lipschitz_constant(tol)

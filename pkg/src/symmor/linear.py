"""Snapshot data, linear reduced bases and the linear reduced models.

Bases are built from shifted snapshots ``x^k(mu) - x_0(mu)``. Linear ROMs
use ``x_ref = x_0(mu)`` and start from the zero reduced state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import numerics
from .autonet.checkpoint import CheckpointError, read_container, write_container
from .integrators import (IMPLICIT_MIDPOINT, ROM_NEWTON, NewtonConvergenceError,
                          NewtonOptions, RKTableau, rk_stage_solve)
from .symplectic import is_symplectic, poisson_apply
from .traces import RomTrace, run_steps


class RankDeficiencyError(np.linalg.LinAlgError):
    """Fewer numerically independent directions than requested."""


@dataclass
class SnapshotSet:
    """Shifted snapshots as columns, ordered parameter-major then time."""

    columns: np.ndarray           # (2N, M)
    params: np.ndarray            # (M,)
    shifts: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    def for_mu(self, mu: float) -> np.ndarray:
        return self.columns[:, self.params == mu]


def assemble_snapshots(trajectories) -> SnapshotSet:
    """Stack ``(mu, trajectory)`` pairs into a :class:`SnapshotSet`.

    A trajectory is a :class:`~symmor.integrators.Trajectory` or a state
    array of shape ``(K+1, 2N)``.
    """
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("need at least one trajectory")
    arrays = [(mu, np.asarray(getattr(t, "states", t), dtype=np.float64)) for mu, t in trajectories]
    dim = arrays[0][1].shape[1]
    cols, params, shifts = [], [], {}
    for mu, X in arrays:
        if X.shape[1] != dim:
            raise ValueError(f"trajectory for mu={mu} has dimension {X.shape[1]}, expected {dim}")
        shifts[float(mu)] = X[0].copy()
        cols.append((X - X[0]).T)
        params.append(np.full(X.shape[0], float(mu)))
    return SnapshotSet(np.hstack(cols), np.concatenate(params), shifts)


@dataclass
class SymplecticBasis:
    V: np.ndarray
    kind: str = "custom"

    KINDS = ("pod", "cotangent_lift", "custom")

    def __post_init__(self):
        self.V = numerics.as_matrix(self.V)
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}")

    @property
    def two_n(self) -> int:
        return self.V.shape[1]


def _leading_vectors(Y, k: int, what: str):
    if k > min(Y.shape):
        raise RankDeficiencyError(f"{what}: requested {k} vectors from a {Y.shape} matrix")
    U, s, _ = numerics.svd_thin(Y, k)
    if k and s[-1] <= max(Y.shape) * np.finfo(float).eps * s[0]:
        raise RankDeficiencyError(f"{what}: numerical rank below {k}")
    return U


def pod_basis(S: SnapshotSet, two_n: int) -> SymplecticBasis:
    """Leading ``2n`` left singular vectors of the snapshot matrix."""
    if two_n < 1:
        raise ValueError("two_n must be positive")
    return SymplecticBasis(_leading_vectors(S.columns, two_n, "POD"), "pod")


def cotangent_lift_basis(S: SnapshotSet, two_n: int) -> SymplecticBasis:
    """``blockdiag(Phi, Phi)`` with ``Phi`` from the SVD of ``[Q, P]``."""
    if two_n < 2 or two_n % 2:
        raise ValueError(f"cotangent lift needs an even 2n >= 2, got {two_n}")
    N, n = S.dim // 2, two_n // 2
    Y = np.hstack([S.columns[:N], S.columns[N:]])
    Phi = _leading_vectors(Y, n, "cotangent lift")
    V = np.zeros((2 * N, two_n))
    V[:N, :n] = Phi
    V[N:, n:] = Phi
    return SymplecticBasis(V, "cotangent_lift")


def save_basis(basis: SymplecticBasis, path) -> None:
    """Write a basis to the plain-text checkpoint container (column-major values)."""
    two_N, two_n = basis.V.shape
    write_container(path, [f"basis {basis.kind}", f"dims {two_N} {two_n}"], basis.V.T)


def load_basis(path) -> SymplecticBasis:
    header, values = read_container(path)
    records = {ln.split()[0]: ln.split()[1:] for ln in header if ln.split()}
    try:
        (kind,) = records["basis"]
        two_N, two_n = (int(t) for t in records["dims"])
    except (KeyError, ValueError):
        raise CheckpointError(f"{path}: basis files need 'basis <kind>' and 'dims <2N> <2n>'") from None
    if set(records) != {"basis", "dims"} or values.size != two_N * two_n:
        raise CheckpointError(f"{path}: malformed basis file")
    try:
        return SymplecticBasis(values.reshape(two_n, two_N).T.copy(), kind)
    except ValueError as exc:
        raise CheckpointError(f"{path}: {exc}") from None


def projection_matrix(V) -> np.ndarray:
    """Left inverse used as the linear encoder: ``V^T`` for orthonormal ``V``."""
    V = np.asarray(V, dtype=np.float64)
    if np.allclose(V.T @ V, np.eye(V.shape[1]), atol=1e-12):
        return V.T
    return np.linalg.pinv(V)


LINEAR_METHODS = ("SG", "G", "LSPG")


@dataclass
class LinearRom:
    """Affine reduced system assembled densely from a basis.

    For SG and G the reduced field is ``L x_r + c``; LSPG is defined per
    midpoint step and stores the least-squares operator instead.
    """

    kind: str
    basis: SymplecticBasis
    x_ref: np.ndarray
    L: np.ndarray | None = None
    c: np.ndarray | None = None
    field_matrix: np.ndarray | None = None
    mu: float = float("nan")

    def field(self, x_r) -> np.ndarray:
        if self.L is None:
            raise TypeError("LSPG has no time-continuous reduced field")
        return self.L @ x_r + self.c

    def reconstruct(self, x_r) -> np.ndarray:
        return self.x_ref + self.basis.V @ x_r


def build_linear_rom(model, basis: SymplecticBasis, kind: str, x_ref) -> LinearRom:
    """Assemble an SG, G or LSPG reduced model around ``x_ref``."""
    if kind not in LINEAR_METHODS:
        raise ValueError(f"unknown linear method {kind!r}")
    V = basis.V
    x_ref = numerics.as_vector(x_ref)
    if V.shape[0] != model.dim or x_ref.shape[0] != model.dim:
        raise ValueError("basis, reference state and model dimensions differ")
    n = V.shape[1] // 2
    mu = getattr(model, "mu", float("nan"))
    JA = model.field_matrix()
    if kind == "SG":
        if V.shape[1] % 2 or not is_symplectic(V):
            raise ValueError("SG needs a symplectic basis")
        AV = model.A @ V
        return LinearRom(kind, basis, x_ref, poisson_apply(n, V.T @ AV),
                         poisson_apply(n, V.T @ (model.A @ x_ref)), mu=mu)
    if kind == "G":
        JAV = JA @ V
        return LinearRom(kind, basis, x_ref, V.T @ JAV, V.T @ (JA @ x_ref), mu=mu)
    return LinearRom(kind, basis, x_ref, field_matrix=JA, mu=mu)


def _lspg_stepper(rom: LinearRom, dt: float, opts: NewtonOptions):
    # midpoint residual V(y - x) - dt JA(x_ref + V(y + x)/2) is affine in y
    V, JA = rom.basis.V, rom.field_matrix
    JAV = JA @ V
    M = V - 0.5 * dt * JAV
    Q, R = scipy.linalg.qr(M, mode="economic")
    drift = dt * (JA @ rom.x_ref)

    def step(x):
        b = V @ x + 0.5 * dt * (JAV @ x) + drift
        y = scipy.linalg.solve_triangular(R, Q.T @ b)
        r = M @ y - b
        opt = float(np.linalg.norm(M.T @ r))
        if opt > opts.threshold(0.0):
            raise NewtonConvergenceError([opt], 1)
        return y, ((y - x) / dt)[None, :], 1, opt

    return step


def integrate_linear(rom: LinearRom, K: int, T: float = 1.0, x_r0=None,
              tab: RKTableau = IMPLICIT_MIDPOINT,
              opts: NewtonOptions = ROM_NEWTON) -> RomTrace:
    """Run a linear ROM on ``K`` equidistant steps."""
    if K < 0:
        raise ValueError("K must be nonnegative")
    two_n = rom.basis.two_n
    dt = T / K if K else 0.0
    x_r0 = np.zeros(two_n) if x_r0 is None else numerics.as_vector(x_r0)
    if rom.kind == "LSPG":
        if tab.s != 1 or tab.a[0, 0] != 0.5 or tab.b[0] != 1.0:
            raise ValueError("LSPG is only defined for the implicit midpoint rule")
        step = _lspg_stepper(rom, dt, opts) if K else None
    else:
        cache: dict = {}

        def step(x):
            sol = rk_stage_solve(rom.field, x, dt, tab, opts, jacobian=rom.L, cache=cache)
            return x + dt * (tab.b @ sol.w), sol.w, sol.iterations, float(sol.residual_norms.max())

    return run_steps(rom.kind, two_n, rom.mu, dt, x_r0, K, step, rom.reconstruct,
                     rom.x_ref, tab)


__all__ = [
    "LINEAR_METHODS", "LinearRom", "RankDeficiencyError",
    "SnapshotSet", "SymplecticBasis", "assemble_snapshots", "build_linear_rom",
    "cotangent_lift_basis", "integrate_linear", "pod_basis", "projection_matrix",
]

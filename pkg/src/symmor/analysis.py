"""A-posteriori error bound and reduced-model diagnostics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .integrators import RKTableau
from .symplectic import symplecticity_defect
from .traces import RomTrace


@dataclass
class BoundTrace:
    """Per-step bound on ``||x^k - x~^k||`` together with its ingredients."""

    kappa: float
    dt: float
    D: np.ndarray
    c1: float
    stage_residuals: np.ndarray    # (K, s)
    update_residuals: np.ndarray   # (K,)
    bound: np.ndarray              # (K+1,)
    valid: bool = True


def bound_conditions(kappa: float, dt: float, tab: RKTableau):
    """Matrix ``D = I - kappa dt |a|`` and whether the bound applies.

    For one stage, ``D > 0`` is required. For more stages we check the
    sufficient condition that ``D`` is invertible with an entrywise
    nonnegative inverse, which makes ``D x <= y`` imply ``x <= D^{-1} y``.
    """
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    D = np.eye(tab.s) - kappa * dt * np.abs(tab.a)
    if tab.s == 1:
        return D, bool(D[0, 0] > 0)
    if abs(np.linalg.det(D)) <= np.finfo(float).eps * np.linalg.norm(D, 1) ** tab.s:
        return D, False
    return D, bool(np.all(np.linalg.inv(D) >= 0))


def _weights(D, tab: RKTableau):
    # beta_i = sum_m |b_m| [D^-1]_mi
    return np.abs(tab.b) @ np.linalg.inv(D)


def reconstructed_residuals(model, trace: RomTrace, decoder):
    """Residual norms of the reconstructed trajectory in the full-order scheme.

    Velocities are lifted with the decoder Jacobian at the previous reduced
    state, ``w~_i = Dd(x_r^{k-1}) w_{r,i}``.

    Returns
    -------
    stage : (K, s) array of ``||r~_i^k||``
    update : (K,) array of ``||r~_x^k||``
    """
    if trace.stage_velocities.shape[0] != trace.K:
        raise ValueError("trace lacks stage velocities for some steps")
    tab, dt = trace.tableau, trace.dt
    Xt, Xr = trace.reconstructed, trace.reduced_states
    stage = np.empty((trace.K, tab.s))
    update = np.empty(trace.K)
    for k in range(1, trace.K + 1):
        jac = decoder.jacobian(Xr[k - 1])
        W = trace.stage_velocities[k - 1] @ jac.T          # (s, 2N)
        Y = Xt[k - 1] + dt * (tab.a @ W)
        for i in range(tab.s):
            stage[k - 1, i] = np.linalg.norm(W[i] - model.vector_field(Y[i]))
        update[k - 1] = np.linalg.norm(Xt[k] - Xt[k - 1] - dt * (tab.b @ W))
    return stage, update


def bound_recursion(kappa: float, dt: float, tab: RKTableau, stage, update,
                    initial_error: float) -> BoundTrace:
    """Accumulate the bound from residual norms; refuses invalid step sizes."""
    D, valid = bound_conditions(kappa, dt, tab)
    if not valid:
        raise ValueError(f"bound conditions fail for kappa*dt = {kappa * dt:.4g} "
                         f"({tab.name or 'tableau'}); reduce dt")
    beta = _weights(D, tab)
    c1 = 1.0 + kappa * dt * float(beta.sum())
    stage = np.atleast_2d(np.asarray(stage, dtype=np.float64)).reshape(-1, tab.s)
    update = np.asarray(update, dtype=np.float64).ravel()
    bound = np.empty(update.size + 1)
    bound[0] = initial_error
    for k in range(1, bound.size):
        bound[k] = c1 * bound[k - 1] + dt * float(beta @ stage[k - 1]) + update[k - 1]
    return BoundTrace(kappa, dt, D, c1, stage, update, bound, valid)


def error_bound(model, trace: RomTrace, decoder, x0, kappa: float | None = None) -> BoundTrace:
    """Rigorous bound on the reduction error at every time step."""
    x0 = np.asarray(getattr(x0, "x", x0), dtype=np.float64)
    if kappa is None:
        kappa = model.lipschitz_constant()
    stage, update = reconstructed_residuals(model, trace, decoder)
    e0 = float(np.linalg.norm(x0 - trace.reconstructed[0]))
    return bound_recursion(kappa, trace.dt, trace.tableau, stage, update, e0)


def _denominator(states, x0) -> float:
    return float(np.sum((np.asarray(states) - x0) ** 2))


def proj_error(states, x0, decoder, x_ref=None) -> float:
    """Relative projection error of ``x_ref + d(e(x - x_ref))`` over a trajectory.

    ``states`` are full-order states ``x^k`` of one parameter, ``x0`` their
    initial value. ``x_ref`` defaults to ``x0 - d(x_r0)``.
    """
    X = np.atleast_2d(np.asarray(states, dtype=np.float64))
    x0 = np.asarray(getattr(x0, "x", x0), dtype=np.float64)
    if x_ref is None:
        x_ref = x0 - decoder.eval(decoder.initial_reduced())
    rec = x_ref + decoder.eval_batch(decoder.encode(X - x_ref))
    return float(np.sqrt(np.sum((rec - X) ** 2) / _denominator(X, x0)))


def red_error(states, trace: RomTrace, x0=None) -> float:
    """Relative reduction error; ``nan`` for runs that did not converge."""
    if not trace.converged:
        return float("nan")
    X = np.asarray(states, dtype=np.float64)
    if X.shape != trace.reconstructed.shape:
        raise ValueError(f"full-order states {X.shape} and trace {trace.reconstructed.shape} differ")
    x0 = X[0] if x0 is None else np.asarray(getattr(x0, "x", x0), dtype=np.float64)
    return float(np.sqrt(np.sum((trace.reconstructed - X) ** 2) / _denominator(X, x0)))


def hamiltonian_error_trace(states, trace: RomTrace, model) -> np.ndarray:
    """``|H(x^k) - H(x~^k)|`` for the steps present in the trace."""
    X = np.asarray(states, dtype=np.float64)[: trace.K + 1]
    return np.array([abs(model.hamiltonian(a) - model.hamiltonian(b))
                     for a, b in zip(X, trace.reconstructed)])


def symplecticity_error_trace(trace: RomTrace, decoder) -> np.ndarray:
    """Symplecticity defect of ``Dd`` along the reduced trajectory."""
    return np.array([symplecticity_defect(decoder.jacobian(x)) for x in trace.reduced_states])


@dataclass
class ConvergenceReport:
    converged: int = 0
    failed: int = 0
    by_key: dict = field(default_factory=dict)   # (method, two_n) -> (converged, failed)

    @property
    def total(self) -> int:
        return self.converged + self.failed


def convergence_report(traces) -> ConvergenceReport:
    """Tally converged and failed runs overall and per ``(method, 2n)``.

    Items are :class:`RomTrace` objects or anything with ``method``,
    ``two_n`` and ``converged`` attributes.
    """
    ok, bad = Counter(), Counter()
    for tr in traces:
        key = (tr.method, int(tr.two_n))
        (ok if tr.converged else bad)[key] += 1
    keys = sorted(set(ok) | set(bad))
    by_key = {k: (ok[k], bad[k]) for k in keys}
    return ConvergenceReport(sum(ok.values()), sum(bad.values()), by_key)

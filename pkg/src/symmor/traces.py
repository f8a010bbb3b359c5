"""Result container shared by all reduced models."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrators import IMPLICIT_MIDPOINT, NewtonConvergenceError, RKTableau


@dataclass
class RomTrace:
    """Reduced trajectory with per-step solver diagnostics.

    A failed step aborts the run: arrays then hold only the steps before the
    failure, ``converged`` is false and ``failed_step`` names the step.
    """

    method: str
    two_n: int
    mu: float
    dt: float
    reduced_states: np.ndarray       # (k+1, 2n)
    reconstructed: np.ndarray        # (k+1, 2N)
    stage_velocities: np.ndarray     # (k, s, 2n)
    iterations: np.ndarray           # (k,)
    residual_norms: np.ndarray       # (k,)
    x_ref: np.ndarray
    converged: bool = True
    failed_step: int | None = None
    tableau: RKTableau = field(default=IMPLICIT_MIDPOINT)

    @property
    def K(self) -> int:
        return self.reduced_states.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.K + 1)


def run_steps(method, two_n, mu, dt, x_r0, K, step, reconstruct, x_ref,
              tab: RKTableau = IMPLICIT_MIDPOINT) -> RomTrace:
    """Drive ``step(x_r) -> (x_r_next, W, iterations, residual)`` for ``K`` steps.

    A solver failure (nonconvergence, singular systems, non-finite states)
    ends the run with a partial trace.
    """
    xs, ws, its, res = [np.array(x_r0, dtype=np.float64)], [], [], []
    converged, failed = True, None
    for k in range(1, K + 1):
        try:
            x_next, W, it, r = step(xs[-1])
        except (NewtonConvergenceError, np.linalg.LinAlgError):
            converged, failed = False, k
            break
        if not np.all(np.isfinite(x_next)):
            converged, failed = False, k
            break
        xs.append(x_next)
        ws.append(W)
        its.append(it)
        res.append(r)
    Xr = np.array(xs)
    dim = Xr.shape[1]
    return RomTrace(
        method=method, two_n=two_n, mu=mu, dt=dt, reduced_states=Xr,
        reconstructed=np.array([reconstruct(x) for x in Xr]),
        stage_velocities=np.array(ws).reshape(len(ws), tab.s, dim),
        iterations=np.array(its, dtype=int), residual_norms=np.array(res, dtype=np.float64),
        x_ref=np.asarray(x_ref, dtype=np.float64), converged=converged, failed_step=failed,
        tableau=tab)

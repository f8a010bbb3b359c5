"""ADAM mini-batch training with validation-based parameter selection."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .network import (Architecture, build_autoencoder, evaluate_losses,
                      fit_scaler, value_and_grad)

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, epoch: int, message: str):
        self.epoch = epoch
        super().__init__(f"epoch {epoch}: {message}")


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.9
    learning_rate: float = 4.43e-4
    batch_size: int = 15
    epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.2
    init_scheme: str = "kaiming_normal"
    data_norm: str = "half"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 0:
            raise ValueError("epochs must be nonnegative")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must lie in (0, 1)")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


BETA1, BETA2, EPS = 0.9, 0.999, 1e-8


def adam_step(params, grad, state: AdamState, lr: float,
              beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
    """One bias-corrected ADAM update; returns ``(params, state)``."""
    t = state.t + 1
    m = beta1 * state.m + (1 - beta1) * grad
    v = beta2 * state.v + (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    return params - lr * m_hat / (np.sqrt(v_hat) + eps), AdamState(m, v, t)


@dataclass
class History:
    """Per-epoch losses; row 0 is the untrained network."""

    rows: list[dict] = field(default_factory=list)
    best_epoch: int = 0

    COLUMNS = ("epoch", "train_total", "train_data", "train_sympl",
               "val_total", "val_data", "val_sympl")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])


def split_indices(M: int, val_fraction: float, rng) -> tuple[np.ndarray, np.ndarray]:
    perm = rng.permutation(M)
    n_val = max(1, int(round(val_fraction * M)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def _record(history, epoch, ae, theta, X_train, X_val, alpha):
    tr = evaluate_losses(ae, X_train, alpha, theta)
    va = evaluate_losses(ae, X_val, alpha, theta)
    row = dict(epoch=epoch, train_total=tr.total, train_data=tr.data, train_sympl=tr.sympl,
               val_total=va.total, val_data=va.data, val_sympl=va.sympl)
    if not all(np.isfinite(v) for v in row.values()):
        raise TrainingError(epoch, "non-finite loss")
    history.rows.append(row)
    return va.total


def train(snapshots, cfg: TrainConfig, arch: Architecture):
    """Train a (weakly symplectic) convolutional autoencoder.

    ``snapshots`` is a :class:`~symmor.linear.SnapshotSet` or an array of
    shifted states ``(M, 2N)``. Returns the autoencoder carrying the
    parameters with the smallest validation loss, and the :class:`History`.
    """
    X = snapshots.columns.T if hasattr(snapshots, "columns") else np.asarray(snapshots)
    X = np.ascontiguousarray(X, dtype=np.float64)
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng, split_rng, shuffle_rng = (np.random.default_rng(s) for s in seeds)

    train_idx, val_idx = split_indices(X.shape[0], cfg.val_fraction, split_rng)
    if train_idx.size < cfg.batch_size:
        raise ValueError(f"{train_idx.size} training samples, fewer than "
                         f"batch size {cfg.batch_size}")
    X_train, X_val = X[train_idx], X[val_idx]

    scaler = fit_scaler(X_train)
    enc, dec = arch.specs(scaler)
    ae = build_autoencoder(enc, dec, arch.dims, seed=int(init_rng.integers(2**63)),
                           init_scheme=cfg.init_scheme, data_norm=cfg.data_norm)
    ae.meta.update(seed=cfg.seed, alpha=cfg.alpha)

    history = History()
    theta = ae.theta.copy()
    best_theta, best_val = theta.copy(), _record(history, 0, ae, theta, X_train, X_val, cfg.alpha)
    state = AdamState.zeros(theta.size)
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle_rng.permutation(train_idx.size)
        for start in range(0, order.size, cfg.batch_size):
            batch = X_train[order[start:start + cfg.batch_size]]
            _, grad = value_and_grad(ae, batch, cfg.alpha, theta)
            if not np.all(np.isfinite(grad)):
                raise TrainingError(epoch, "non-finite gradient")
            theta, state = adam_step(theta, grad, state, cfg.learning_rate)
        val = _record(history, epoch, ae, theta, X_train, X_val, cfg.alpha)
        if val < best_val:
            best_val, best_theta, history.best_epoch = val, theta.copy(), epoch
        if epoch % 50 == 0:
            log.info("epoch %d: val loss %.4e (best %.4e at %d)",
                     epoch, val, best_val, history.best_epoch)
    ae.meta["best_epoch"] = history.best_epoch
    return ae.copy(best_theta), history

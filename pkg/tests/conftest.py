"""Shared fixtures: desk-scale wave data and trained networks.

Expensive objects (training runs) are session scoped so every test module
reuses them.
"""
from __future__ import annotations

import numpy as np
import pytest

from symmor.autonet import TrainConfig, desk_architecture, train
from symmor.integrators import integrate
from symmor.linear import assemble_snapshots
from symmor.wave import WaveConfig, build_model, initial_state

TRAIN_MU = (5.0 / 12.0, 0.625, 5.0 / 6.0)
TEST_MU = 0.51
DESK_TRAIN = dict(epochs=200, learning_rate=5e-3, batch_size=15, alpha=0.9, seed=0)

ACCEPTANCE_RESULTS: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        name, ok, detail = ACCEPTANCE_RESULTS[n]
        terminalreporter.write_line(
            f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")


def fom_run(N: int, mu: float, K: int = 500, T: float = 1.0):
    cfg = WaveConfig(N=N, mu=mu, K=K, T=T)
    model = build_model(cfg)
    x0 = initial_state(cfg)
    return cfg, model, x0.x, integrate(model, x0, K, T)


class DeskData:
    def __init__(self, N: int, K: int = 500):
        self.N = N
        self.runs = {mu: fom_run(N, mu, K) for mu in (*TRAIN_MU, TEST_MU)}
        self.snapshots = assemble_snapshots(
            (mu, self.runs[mu][3]) for mu in TRAIN_MU)

    def test_run(self):
        return self.runs[TEST_MU]


@pytest.fixture(scope="session")
def desk256():
    return DeskData(256)


@pytest.fixture(scope="session")
def desk64():
    return DeskData(64)


def _train(data: DeskData, two_n: int = 4, **overrides):
    cfg = TrainConfig(**{**DESK_TRAIN, **overrides})
    return train(data.snapshots, cfg, desk_architecture(data.N, two_n))


@pytest.fixture(scope="session")
def desk_net256(desk256):
    """200-epoch desk autoencoder at N=256, 2n=4: ``(ae, history)``."""
    return _train(desk256)


@pytest.fixture(scope="session")
def desk_net64(desk64):
    return _train(desk64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_autoencoder(seed: int = 0, two_n: int = 2, data_seed: int = 7):
    """Conv autoencoder on 2N=16 with fewer than 200 parameters."""
    from symmor.autonet import Architecture, build_autoencoder, fit_scaler
    data = np.random.default_rng(data_seed).standard_normal((12, 16))
    arch = Architecture(channels=[2, 2, 2], lengths=[8, 4, 2], strides=[2, 2], full=[4, two_n])
    enc, dec = arch.specs(fit_scaler(data))
    ae = build_autoencoder(enc, dec, arch.dims, seed=seed)
    # nonzero biases exercise every parameter in gradient checks
    ae.theta += 0.05 * np.random.default_rng(seed + 1).standard_normal(ae.n_theta)
    return ae, data


def central_difference_grad(fun, theta, h=1e-6):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (fun(theta + e) - fun(theta - e)) / (2 * h)
    return g

"""Acceptance criteria at desk scale, one test per criterion.

Each test records its outcome into ``ACCEPTANCE_RESULTS`` so the terminal
summary prints one PASS/FAIL line per criterion.
"""
import time

import numpy as np

from symmor import cli
from symmor.analysis import convergence_report, error_bound, proj_error, red_error
from symmor.autonet import (decode, decoder_jacobian, grad_total, linear_autoencoder, loss_sympl,
                            loss_total)
from symmor.integrators import (EXPLICIT_EULER, FOM_NEWTON, HEUN, IMPLICIT_MIDPOINT, integrate,
                                is_symplectic_tableau)
from symmor.linear import build_linear_rom, cotangent_lift_basis, integrate_linear, pod_basis
from symmor.manifold import LinearDecoder, NetworkDecoder, integrate_rom, make_setup
from symmor.symplectic import poisson_matrix
from symmor.wave import WaveConfig, build_model, exact_solution, initial_state

from conftest import ACCEPTANCE_RESULTS, DESK_TRAIN, _train, central_difference_grad, tiny_autoencoder


def record(n: int, name: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[n] = (name, bool(ok), detail)
    print(f"criterion {n} {'PASS' if ok else 'FAIL'} {name}: {detail}")
    assert ok, f"criterion {n} ({name}) failed: {detail}"


def test_criterion_01_fom_energy():
    cfg = WaveConfig(N=256, mu=5 / 12, K=500)
    model = build_model(cfg)
    start = time.perf_counter()
    traj = integrate(model, initial_state(cfg), cfg.K, cfg.T, opts=FOM_NEWTON)
    elapsed = time.perf_counter() - start
    H = traj.hamiltonian_trace
    drift = np.max(np.abs(H - H[0])) / abs(H[0])
    record(1, "FOM energy conservation", drift <= 1e-10 and elapsed <= 120,
           f"relative drift {drift:.2e} (<= 1e-10), runtime {elapsed:.1f}s (<= 120s)")


def _fom_error(N: int, K: int, mu: float = 5 / 12, t: float = 0.5) -> float:
    cfg = WaveConfig(N=N, mu=mu, K=K)
    traj = integrate(build_model(cfg), initial_state(cfg), K, cfg.T, opts=FOM_NEWTON)
    k = int(round(t / cfg.dt))
    ref = exact_solution(cfg, k * cfg.dt).x
    return float(np.linalg.norm(traj.states[k] - ref) / np.linalg.norm(ref))


def test_criterion_02_fom_accuracy_and_order():
    coarse = _fom_error(256, 500)
    fine = _fom_error(513, 1000)   # halves the grid spacing 1/(N+1) and the step
    ratio = coarse / fine
    record(2, "FOM accuracy and order", coarse <= 2e-3 and 3.0 <= ratio <= 5.0,
           f"relative error at t=0.5 {coarse:.3e} (<= 2e-3), refinement ratio {ratio:.3f} (4 +- 25%)")


def test_criterion_03_symplecticity_condition():
    got = (is_symplectic_tableau(IMPLICIT_MIDPOINT, 1e-14), is_symplectic_tableau(EXPLICIT_EULER, 1e-14),
           is_symplectic_tableau(HEUN, 1e-14))
    record(3, "symplecticity condition", got == (True, False, False),
           f"midpoint/Euler/Heun -> {got}")


def test_criterion_04_cotangent_lift(desk256):
    res = {}
    for two_n in (2, 4, 8):
        V = cotangent_lift_basis(desk256.snapshots, two_n).V
        res[two_n] = np.linalg.norm(V.T @ poisson_matrix(256) @ V - poisson_matrix(two_n // 2))
    worst = max(res.values())
    record(4, "cotangent-lift structure", worst <= 1e-12,
           "max ||V^T J V - J||_F = %.2e over 2n in {2,4,8}" % worst)


def test_criterion_05_oracle_equivalence(desk256):
    cfg, m, x0, _ = desk256.test_run()
    S = desk256.snapshots
    diffs = {}
    for two_n in (2, 4):
        cl, pod = cotangent_lift_basis(S, two_n), pod_basis(S, two_n)
        pairs = (("SMG", "SG", cl), ("MG", "G", pod), ("MLSPG", "LSPG", pod))
        for manifold_name, linear_name, basis in pairs:
            lin = integrate_linear(build_linear_rom(m, basis, linear_name, x0), cfg.K)
            man = integrate_rom(make_setup(LinearDecoder(basis), x0, m, manifold_name), cfg.K)
            ok = lin.converged and man.converged
            d = np.max(np.linalg.norm(man.reduced_states - lin.reduced_states, axis=1)) if ok else np.inf
            diffs[f"{manifold_name}/{linear_name} 2n={two_n}"] = d
    worst = max(diffs.values())
    record(5, "oracle equivalence", worst <= 1e-9,
           "max reduced-state difference %.2e (<= 1e-9) over %d pairs" % (worst, len(diffs)))


def test_criterion_06_error_bound_rigor(desk64, desk_net64):
    cfg, m, x0, _ = desk64.test_run()
    kappa = m.lipschitz_constant()
    T = 0.05
    K = int(np.ceil(T * kappa))      # dt = T/K <= 1/kappa < 2/kappa
    fom = integrate(m, x0, K, T, opts=FOM_NEWTON)
    ae, _ = desk_net64
    cl = cotangent_lift_basis(desk64.snapshots, 4)
    net = NetworkDecoder(ae)
    runs = [(integrate_linear(build_linear_rom(m, cl, "SG", x0), K, T), LinearDecoder(cl)),
            (integrate_rom(make_setup(net, x0, m), K, T), net)]
    violations, ratios = 0, []
    for trace, dec in runs:
        assert trace.converged
        bt = error_bound(m, trace, dec, x0, kappa)
        err = np.linalg.norm(fom.states - trace.reconstructed, axis=1)
        violations += int(np.sum(bt.bound < err))
        ratios.append(np.min(bt.bound[1:] / err[1:]))
    record(6, "error-bound rigor", violations == 0,
           f"N=64, kappa*dt={kappa * T / K:.3f}, K={K}, violations {violations}, "
           f"min bound/error {min(ratios):.2f}")


def test_criterion_07_autodiff():
    ae, data = tiny_autoencoder()
    X = data[:4]
    errs = []
    for alpha in (0.0, 0.5, 1.0):
        g = grad_total(ae, X, alpha)
        fd = central_difference_grad(lambda th: loss_total(ae, X, alpha, th), ae.theta)
        errs.append(np.linalg.norm(g - fd) / np.linalg.norm(fd))
    rng = np.random.default_rng(7)
    jac_errs = []
    for _ in range(3):
        xr = rng.standard_normal(2)
        jac = decoder_jacobian(ae, xr)
        fd = np.column_stack([(decode(ae, xr + 1e-6 * e) - decode(ae, xr - 1e-6 * e)) / 2e-6
                              for e in np.eye(2)])
        jac_errs.append(np.linalg.norm(jac - fd) / np.linalg.norm(fd))
    ok = ae.n_theta <= 200 and max(errs) <= 1e-6 and max(jac_errs) <= 1e-6
    record(7, "autodiff correctness", ok,
           f"n_theta={ae.n_theta}, grad rel err {max(errs):.1e}, Jacobian rel err {max(jac_errs):.1e}")


def test_criterion_08_symplecticity_loss(desk256):
    V = cotangent_lift_basis(desk256.snapshots, 4).V
    X = desk256.snapshots.columns.T[::50]
    exact = loss_sympl(linear_autoencoder(V), X)
    zero = linear_autoencoder(np.zeros((8, 2)), encoder_matrix=np.zeros((2, 8)))
    half = loss_sympl(zero, np.random.default_rng(0).standard_normal((5, 8)))
    record(8, "symplecticity loss sanity", exact <= 1e-20 and abs(half - 0.5) <= 1e-14,
           f"linear symplectic decoder {exact:.1e} (<= 1e-20), zero decoder {half!r} (1/2)")


def test_criterion_09_smg_energy(desk256, desk_net256):
    ae, _ = desk_net256
    dec = NetworkDecoder(ae)
    cfg, m, x0, _ = desk256.test_run()
    setup = make_setup(dec, x0, m)
    dH0 = abs(m.hamiltonian(setup.reconstruct(setup.x_r0)) - m.hamiltonian(x0))
    drift = {}
    for K in (cfg.K, 2 * cfg.K):
        trace = integrate_rom(setup, K, cfg.T)
        assert trace.converged
        H = np.array([m.hamiltonian(x) for x in trace.reconstructed])
        drift[K] = np.max(np.abs(H - H[0]))
    ratio = drift[cfg.K] / drift[2 * cfg.K]
    record(9, "SMG energy behaviour", dH0 <= 1e-12 and 2.8 <= ratio <= 5.2,
           f"dH(0)={dH0:.1e} (<= 1e-12), drift {drift[cfg.K]:.3e} -> {drift[2 * cfg.K]:.3e}, "
           f"ratio {ratio:.2f} (4 +- 30%)")


def test_criterion_10_training(desk256, desk_net256):
    ae, hist = desk_net256
    val = hist.column("val_data")
    _, short = _train(desk256, epochs=5)
    repro = short.rows == hist.rows[:6]
    _, again = _train(desk256, epochs=5)
    repro = repro and again.rows == short.rows
    record(10, "training progress", val[-1] <= 0.5 * val[0] and repro,
           f"{DESK_TRAIN['epochs']} epochs: val data loss {val[0]:.3e} -> {val[-1]:.3e} "
           f"(ratio {val[-1] / val[0]:.2e}), bit-reproducible={repro}")


def test_criterion_11_monotonicity(desk256):
    S = desk256.snapshots
    dims = (2, 4, 6, 8, 10, 12)
    monotone = True
    for mu, (cfg, m, x0, traj) in desk256.runs.items():
        e = [proj_error(traj.states, x0, LinearDecoder(pod_basis(S, d))) for d in dims]
        monotone &= all(b <= a * (1 + 1e-12) for a, b in zip(e, e[1:]))
    cfg, m, x0, traj = desk256.test_run()
    bounded, checked = True, 0
    for two_n in (2, 4, 8, 12):
        pod = pod_basis(S, two_n)
        e_proj = proj_error(traj.states, x0, LinearDecoder(pod))
        for kind in ("G", "LSPG"):
            trace = integrate_linear(build_linear_rom(m, pod, kind, x0), cfg.K)
            if trace.converged:
                checked += 1
                bounded &= red_error(traj.states, trace) >= e_proj * (1 - 1e-12)
    record(11, "monotonicity", monotone and bounded and checked > 0,
           f"POD e_proj nonincreasing on {len(desk256.runs)} trajectories: {monotone}; "
           f"e_red >= e_proj on {checked} converged Galerkin runs: {bounded}")


CRITERION_12_CONFIG = """\
[wave]
N = 16
K = 20
T = 0.05
train_mu = 0.5, 0.6
test_mu = 0.55, 0.58

[rom]
reduced_dims = 2, 4
methods = SG, G, LSPG, SMG-CL, MG-POD, MLSPG-POD
abs_tol = {abs_tol}
max_iter = {max_iter}

[run]
out = results
"""


def test_criterion_12_bookkeeping(tmp_path):
    ok, details = True, []
    for label, abs_tol, max_iter in (("strict", 1e-300, 1), ("default", 1e-8, 15)):
        d = tmp_path / label
        d.mkdir()
        p = d / "exp.ini"
        p.write_text(CRITERION_12_CONFIG.format(abs_tol=abs_tol, max_iter=max_iter))
        for cmd in ("fom", "rom", "report"):
            assert cli.main([cmd, "--config", str(p)]) == 0
        out = d / "results"
        flags = []
        for f in sorted((out / "rom").glob("*.npz")):
            method, two_n = f.stem.split("_")[0], int(f.stem.split("_")[1].split("=")[1])
            with np.load(f) as z:
                flags.append((method, two_n, bool(z["converged"])))
        report = cli.read_csv(out / "report.csv")
        from_report = sorted((r["method"], int(r["two_n"]), r["converged"] == "true") for r in report)
        ok &= from_report == sorted(flags)
        ok &= all(r["e_red"] == "" for r in report if r["converged"] == "false")
        rep = convergence_report(cli._Run(*f) for f in flags)
        tally = {(r["method"], int(r["two_n"])): (int(r["converged"]), int(r["failed"]))
                 for r in cli.read_csv(out / "report_convergence.csv")}
        ok &= tally.pop(("ALL", 0)) == (sum(f[2] for f in flags), sum(not f[2] for f in flags))
        ok &= tally == rep.by_key
        details.append(f"{label}: {rep.converged} converged, {rep.failed} failed")
    ok &= "0 failed" not in details[0]
    record(12, "bookkeeping", ok, "; ".join(details))

"""Experiment driver: ``symmor fom|train|rom|report --config <path>``.

The config is an INI file (sections ``[wave]``, ``[train]``, ``[rom]``,
``[run]``); lists are comma-separated. Outputs land in ``<out>/`` as CSV and
``.npz`` files. Exit codes: 0 success, 2 config error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis, linear, manifold
from .autonet import (Architecture, CheckpointError, TrainConfig, TrainingError,
                      desk_architecture, load_checkpoint, save_checkpoint, train)
from .integrators import FOM_NEWTON, NewtonConvergenceError, NewtonOptions, integrate
from .wave import WaveConfig, build_model, initial_state

log = logging.getLogger("symmor")

EXIT_CONFIG, EXIT_NUMERIC = 2, 3

TRACE_COLUMNS = ("method", "two_n", "mu", "k", "metric", "value")
SUMMARY_COLUMNS = ("method", "two_n", "mu", "e_proj", "e_red", "converged")
HISTORY_COLUMNS = ("epoch", "train_total", "train_data", "train_sympl",
                   "val_total", "val_data", "val_sympl")

# method name -> (kind, basis or decoder source)
METHOD_TABLE = {
    "SG": ("linear", "cotangent_lift"),
    "G": ("linear", "pod"),
    "LSPG": ("linear", "pod"),
    "SMG": ("manifold", "network"),
    "MG": ("manifold", "network"),
    "MLSPG": ("manifold", "network"),
    "SMG-CL": ("manifold", "cotangent_lift"),
    "MG-POD": ("manifold", "pod"),
    "MLSPG-POD": ("manifold", "pod"),
}


class ConfigError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return "%.17g" % v


def write_csv(path: Path, columns, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_csv(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def component_seed(root: int, label: str) -> int:
    """Seed for one component, derived from the root seed and a fixed label."""
    ss = np.random.SeedSequence([root, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class ExperimentConfig:
    wave: WaveConfig
    train_mu: list[float]
    test_mu: list[float]
    train: TrainConfig
    arch: dict
    reduced_dims: list[int]
    methods: list[str]
    rom_newton: NewtonOptions
    bound: bool
    seed: int
    out: Path

    def architecture(self, two_n: int) -> Architecture:
        if not self.arch:
            return desk_architecture(self.wave.N, two_n)
        a = self.arch
        full = [a["channels"][-1] * a["lengths"][-1], *a.get("hidden", []), two_n]
        return Architecture(a["channels"], a["lengths"], a["strides"], full, a.get("kernels"))


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def load_config(path, out=None, seed=None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    cp = configparser.ConfigParser()
    try:
        cp.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        w = cp["wave"] if cp.has_section("wave") else {}
        wave = WaveConfig(N=int(w.get("N", 256)), K=int(w.get("K", 500)),
                          T=float(w.get("T", 1.0)))
        train_mu = _floats(w.get("train_mu", "0.4166666666666667, 0.625, 0.8333333333333334"))
        test_mu = _floats(w.get("test_mu", "0.51, 0.74"))

        t = cp["train"] if cp.has_section("train") else {}
        run = cp["run"] if cp.has_section("run") else {}
        root_seed = int(run.get("seed", 0)) if seed is None else int(seed)
        tcfg = TrainConfig(alpha=float(t.get("alpha", 0.9)),
                           learning_rate=float(t.get("learning_rate", 4.43e-4)),
                           batch_size=int(t.get("batch_size", 15)),
                           epochs=int(t.get("epochs", 200)),
                           seed=root_seed,
                           init_scheme=t.get("init_scheme", "kaiming_normal"),
                           data_norm=t.get("data_norm", "half"))
        arch = {}
        if "channels" in t:
            arch = dict(channels=_ints(t["channels"]), lengths=_ints(t["lengths"]),
                        strides=_ints(t["strides"]), hidden=_ints(t.get("hidden", "")))
            if "kernels" in t:
                arch["kernels"] = _ints(t["kernels"])

        r = cp["rom"] if cp.has_section("rom") else {}
        dims = _ints(r.get("reduced_dims", "2, 4"))
        methods = [m.strip() for m in r.get("methods", "SG, G, LSPG, SMG").split(",") if m.strip()]
        newton = NewtonOptions(abs_tol=float(r.get("abs_tol", 1e-8)),
                               max_iter=int(r.get("max_iter", 15)))
        bound = r.get("bound", "true").strip().lower() in ("1", "true", "yes", "on")
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    if any(d < 2 or d % 2 for d in dims):
        raise ConfigError(f"reduced dimensions must be even and >= 2, got {dims}")
    unknown = [m for m in methods if m not in METHOD_TABLE]
    if unknown:
        raise ConfigError(f"unknown methods {unknown}; known: {sorted(METHOD_TABLE)}")
    if not train_mu or not test_mu:
        raise ConfigError("train_mu and test_mu must be nonempty")
    if arch and not (len(arch["channels"]) == len(arch["lengths"]) == len(arch["strides"]) + 1):
        raise ConfigError("channels and lengths need one more entry than strides")
    out_dir = Path(out) if out is not None else path.parent / run.get("out", "results")
    return ExperimentConfig(wave, train_mu, test_mu, tcfg, arch, dims, methods, newton,
                            bound, root_seed, out_dir)


def _fom_path(cfg: ExperimentConfig, mu: float) -> Path:
    return cfg.out / "fom" / f"fom_mu={mu:.17g}.npz"


def fom_trajectory(cfg: ExperimentConfig, mu: float):
    """Full-order run for ``mu``; reuses a stored trajectory when present."""
    wc = cfg.wave.with_(mu=mu)
    model = build_model(wc)
    p = _fom_path(cfg, mu)
    if p.is_file():
        with np.load(p) as z:
            states = z["states"]
        return model, states
    traj = integrate(model, initial_state(wc), wc.K, wc.T, opts=FOM_NEWTON)
    return model, traj.states


def cmd_fom(cfg: ExperimentConfig) -> None:
    rows = []
    mus = sorted(set(cfg.train_mu) | set(cfg.test_mu))
    for mu in mus:
        wc = cfg.wave.with_(mu=mu)
        model = build_model(wc)
        traj = integrate(model, initial_state(wc), wc.K, wc.T, opts=FOM_NEWTON)
        p = _fom_path(cfg, mu)
        p.parent.mkdir(parents=True, exist_ok=True)
        np.savez(p, states=traj.states, dt=traj.dt, hamiltonian=traj.hamiltonian_trace)
        rows += [("FOM", model.dim, mu, k, "H", h) for k, h in enumerate(traj.hamiltonian_trace)]
        drift = np.max(np.abs(traj.hamiltonian_trace - traj.hamiltonian_trace[0]))
        log.info("FOM mu=%.6g: relative H drift %.3e", mu, drift / abs(traj.hamiltonian_trace[0]))
    write_csv(cfg.out / "fom_hamiltonian.csv", TRACE_COLUMNS, rows)


def training_snapshots(cfg: ExperimentConfig) -> linear.SnapshotSet:
    trajs = []
    for mu in cfg.train_mu:
        trajs.append((mu, fom_trajectory(cfg, mu)[1]))
    return linear.assemble_snapshots(trajs)


def _ckpt_path(cfg: ExperimentConfig, two_n: int) -> Path:
    return cfg.out / "train" / f"ae_2n={two_n}.ckpt"


def cmd_train(cfg: ExperimentConfig) -> None:
    S = training_snapshots(cfg)
    summary = []
    for two_n in cfg.reduced_dims:
        tc = replace(cfg.train, seed=component_seed(cfg.seed, f"train/2n={two_n}"))
        ae, hist = train(S, tc, cfg.architecture(two_n))
        _ckpt_path(cfg, two_n).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(ae, _ckpt_path(cfg, two_n))
        write_csv(cfg.out / "train" / f"history_2n={two_n}.csv", HISTORY_COLUMNS,
                  [[r[c] for c in HISTORY_COLUMNS] for r in hist.rows])
        best = hist.rows[hist.best_epoch]
        summary.append((two_n, hist.best_epoch, best["val_total"], best["val_data"],
                        best["val_sympl"]))
        log.info("2n=%d: best epoch %d, val loss %.4e", two_n, hist.best_epoch, best["val_total"])
    write_csv(cfg.out / "train_summary.csv",
              ("two_n", "best_epoch", "val_total", "val_data", "val_sympl"), summary)


def _decoder(cfg, S, source: str, two_n: int) -> manifold.DecoderHandle:
    if source in ("cotangent_lift", "pod"):
        build = linear.cotangent_lift_basis if source == "cotangent_lift" else linear.pod_basis
        basis = build(S, two_n)
        path = cfg.out / "bases" / f"{source}_2n={two_n}.ckpt"
        path.parent.mkdir(parents=True, exist_ok=True)
        linear.save_basis(basis, path)
        return manifold.LinearDecoder(basis)
    p = _ckpt_path(cfg, two_n)
    if not p.is_file():
        raise ConfigError(f"no trained network at {p}; run 'symmor train' first")
    return manifold.NetworkDecoder(load_checkpoint(p))


def run_method(cfg, method: str, decoder, model, x0):
    """Integrate one reduced model; returns the trace."""
    kind, source = METHOD_TABLE[method]
    wc = cfg.wave
    if kind == "linear":
        basis = linear.SymplecticBasis(decoder.V, source)
        rom = linear.build_linear_rom(model, basis, method, x0)
        return linear.integrate_linear(rom, wc.K, wc.T, opts=cfg.rom_newton)
    base = method.split("-")[0]
    setup = manifold.make_setup(decoder, x0, model, base)
    trace = manifold.integrate_rom(setup, wc.K, wc.T, opts=cfg.rom_newton)
    trace.method = method
    return trace


def cmd_rom(cfg: ExperimentConfig) -> None:
    S = training_snapshots(cfg)
    summary, traces = [], []
    run_dir = cfg.out / "rom"
    run_dir.mkdir(parents=True, exist_ok=True)
    for mu in cfg.test_mu:
        model, states = fom_trajectory(cfg, mu)
        x0 = states[0]
        kappa = model.lipschitz_constant() if cfg.bound else None
        for two_n in cfg.reduced_dims:
            decoders = {}
            for method in cfg.methods:
                source = METHOD_TABLE[method][1]
                if source not in decoders:
                    decoders[source] = _decoder(cfg, S, source, two_n)
                dec = decoders[source]
                trace = run_method(cfg, method, dec, model, x0)
                e_proj = analysis.proj_error(states, x0, dec, trace.x_ref)
                e_red = analysis.red_error(states, trace)
                summary.append((method, two_n, mu, e_proj, e_red, trace.converged))
                log.info("%s 2n=%d mu=%.4g: e_proj %.4e e_red %.4e converged=%s",
                         method, two_n, mu, e_proj, e_red, trace.converged)

                ks = np.arange(trace.K + 1)
                metrics = {
                    "dH": analysis.hamiltonian_error_trace(states, trace, model),
                    "e_symp": analysis.symplecticity_error_trace(trace, dec),
                    "error": np.linalg.norm(states[: trace.K + 1] - trace.reconstructed, axis=1),
                }
                if kappa is not None:
                    D, valid = analysis.bound_conditions(kappa, trace.dt, trace.tableau)
                    if valid:
                        metrics["bound"] = analysis.error_bound(model, trace, dec, x0, kappa).bound
                for name, vals in metrics.items():
                    traces += [(method, two_n, mu, k, name, v) for k, v in zip(ks, vals)]
                np.savez(run_dir / f"{method}_2n={two_n}_mu={mu:.17g}.npz",
                         reduced_states=trace.reduced_states, reconstructed=trace.reconstructed,
                         iterations=trace.iterations, residual_norms=trace.residual_norms,
                         converged=trace.converged,
                         failed_step=-1 if trace.failed_step is None else trace.failed_step)
    write_csv(cfg.out / "rom_summary.csv", SUMMARY_COLUMNS, summary)
    write_csv(cfg.out / "rom_traces.csv", TRACE_COLUMNS, traces)


@dataclass
class _Run:
    method: str
    two_n: int
    converged: bool


def cmd_report(cfg: ExperimentConfig) -> None:
    src = cfg.out / "rom_summary.csv"
    if not src.is_file():
        raise ConfigError(f"{src} missing; run 'symmor rom' first")
    rows = read_csv(src)
    order = {m: i for i, m in enumerate(METHOD_TABLE)}
    rows.sort(key=lambda r: (order.get(r["method"], len(order)), r["method"],
                             int(r["two_n"]), float(r["mu"])))
    write_csv(cfg.out / "report.csv", SUMMARY_COLUMNS,
              [(r["method"], int(r["two_n"]), float(r["mu"]),
                float(r["e_proj"]) if r["e_proj"] else None,
                float(r["e_red"]) if r["e_red"] else None,
                r["converged"] == "true") for r in rows])
    rep = analysis.convergence_report(
        _Run(r["method"], int(r["two_n"]), r["converged"] == "true") for r in rows)
    tally = [(m, n, ok, bad) for (m, n), (ok, bad) in
             sorted(rep.by_key.items(), key=lambda kv: (order.get(kv[0][0], len(order)), kv[0]))]
    tally.append(("ALL", 0, rep.converged, rep.failed))
    write_csv(cfg.out / "report_convergence.csv", ("method", "two_n", "converged", "failed"), tally)


COMMANDS = {"fom": cmd_fom, "train": cmd_train, "rom": cmd_rom, "report": cmd_report}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="symmor", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="INI experiment config")
    parser.add_argument("--out", help="output directory (overrides [run] out)")
    parser.add_argument("--seed", type=int, help="root seed (overrides [run] seed)")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.out, args.seed)
        COMMANDS[args.command](cfg)
    except (ConfigError, CheckpointError) as exc:
        print(f"symmor: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NewtonConvergenceError, TrainingError, np.linalg.LinAlgError,
            FloatingPointError) as exc:
        print(f"symmor: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())

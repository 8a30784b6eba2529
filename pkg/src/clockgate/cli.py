"""Command-line entry point.

Physical units stop here: the library works with Omega = 1 and this module
converts gauss, MHz and microseconds on the way in and out.

Exit codes: 0 success, 2 config error, 3 infeasible search, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from clockgate import io
from clockgate.atom import LaserConfig, MagneticField, PolarizationImpurity, coupling_table, enumerate_basis, zeeman_splitting
from clockgate.dynamics import orient_up_dominant, propagate
from clockgate.error_models import closed_form_decay_error, decay_error, default_grid, impurity_scan
from clockgate.fidelity import CZ, extract_gate_matrix, gauge_fix, pedersen_fidelity
from clockgate.optimizer import OptimizationSpec, edged_gate, fixed_duration_scan, grape_optimize, min_duration

log = logging.getLogger("clockgate")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_INTERNAL = 0, 2, 3, 4
OUTPUT_ENV = "CLOCKGATE_OUTPUT_DIR"

#: Reference minimal N per Delta_Z / Omega, compared against by ``table1``.
REFERENCE_MIN_N = {0.6: 1.843, 0.65: 1.733, 0.7: 1.646, 0.75: 1.568, 0.8: 1.497, 0.85: 1.434, 0.9: 1.376, 0.95: 1.325, 1.0: 1.291}
INPUT_LABELS = ("uu", "ud", "du", "dd")
SWEEPS = ("table1", "scan-ratio")


class Infeasible(RuntimeError):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI run config; flags override it")
    p.add_argument("--output-dir", type=Path, default=None, help=f"default: ${OUTPUT_ENV} or ./out")
    p.add_argument("--ratio", dest="delta_z_over_omega", type=float)
    p.add_argument("--b-gauss", dest="b_gauss", type=float)
    p.add_argument("--omega-mhz", dest="omega_max_mhz", type=float, help="Omega / 2pi in MHz")
    p.add_argument("--tau-us", dest="tau_us", type=float)
    p.add_argument("--n-periods", dest="n_periods", type=float)
    p.add_argument("--segments", dest="segment_count", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iterations", dest="max_iterations", type=int)
    p.add_argument("--target", dest="infidelity_target", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--split", type=float, help="delta_down / delta_z (0.5 is symmetric)")
    p.add_argument("--edges", action="store_const", const=True, default=None)
    p.add_argument("--edge-shape", dest="edge_shape", choices=["sine_squared", "linear"])
    p.add_argument("--varsigma0", type=float)
    p.add_argument("--varsigma", type=float)
    p.add_argument("--pulse", type=Path, help="pulse JSON; default: optimize an edged pulse")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clockgate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("optimize", "GRAPE at fixed N; writes pulse.json and report.json"),
        ("simulate", "propagate a pulse; writes trajectory.csv and gate.json"),
        ("decay-error", "Rydberg-decay error estimate; writes decay.json"),
    ]:
        _common(sub.add_parser(name, help=help_))
    p = sub.add_parser("min-duration", help="bisection for the minimal N")
    _common(p)
    p.add_argument("--window", nargs=2, type=float, default=(1.2, 1.95), metavar=("N_LOW", "N_HIGH"))
    p.add_argument("--resolution", type=float, default=0.005)
    p = sub.add_parser("table1", help="min-duration over the nine reference ratios")
    _common(p)
    p.add_argument("--ratios", nargs="+", type=float, default=sorted(REFERENCE_MIN_N))
    p.add_argument("--window", nargs=2, type=float, default=(1.2, 1.95), metavar=("N_LOW", "N_HIGH"))
    p.add_argument("--resolution", type=float, default=0.005)
    p = sub.add_parser("scan-ratio", help="best fidelity versus ratio at fixed duration")
    _common(p)
    p.add_argument("--duration-pi", type=float, default=3.0, help="gate duration in units of pi/Omega")
    p.add_argument("--ratios", nargs="+", type=float, default=[0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    p = sub.add_parser("scan-impurity", help="fidelity over the (varsigma0, varsigma) grid")
    _common(p)
    p.add_argument("--points", type=int, default=25)
    return parser


def resolve_config(args: argparse.Namespace) -> io.RunConfig:
    values = io.load_config(args.config) if args.config else {}
    for key in io.RunConfig.__dataclass_fields__:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        return io.RunConfig(**values).resolve(require_ratio=args.command not in SWEEPS)
    except TypeError as exc:
        raise io.ConfigError(str(exc)) from exc


def opt_spec(cfg: io.RunConfig, n_periods: float | None = None) -> OptimizationSpec:
    n = n_periods if n_periods is not None else cfg.n_periods
    if n is None:
        raise io.ConfigError("n_periods is required")
    try:
        return OptimizationSpec(
            ratio=cfg.delta_z_over_omega,
            n_periods=n,
            segment_count=cfg.segment_count,
            restarts=cfg.restarts,
            max_iterations=cfg.max_iterations,
            infidelity_target=cfg.infidelity_target,
            seed=cfg.seed,
            split=cfg.split,
            edges=cfg.edges,
            edge_shape=cfg.edge_shape,
        )
    except ValueError as exc:
        raise io.ConfigError(str(exc)) from exc


def impurity_of(cfg: io.RunConfig) -> PolarizationImpurity | None:
    if cfg.varsigma0 is None:
        return None
    return PolarizationImpurity(cfg.varsigma0, cfg.varsigma)


def pulse_for(args, cfg: io.RunConfig, workers: int):
    """Load ``--pulse`` or build the edged pulse at the configured N.

    A freshly optimized pulse is put in the orientation where |uu> carries
    the larger accumulated phase; a loaded pulse is used as given.
    """
    if args.pulse is not None:
        return io.load_pulse(args.pulse), str(args.pulse)
    spec = opt_spec(cfg)
    _, edged = edged_gate(spec, workers=workers)
    if not edged.converged:
        log.warning("edged pulse reached only 1-F = %.3e", edged.best_infidelity)
    profile = edged.best_profile
    pulse_id = f"edged-optimized ratio={spec.ratio} N={spec.n_periods} seed={spec.seed}"
    if spec.split == 0.5:
        profile = orient_up_dominant(profile, spec.laser())
        pulse_id += " up-dominant"
    return profile, pulse_id


def cmd_optimize(args, cfg, out: Path, meta: dict) -> int:
    spec = opt_spec(cfg)
    if spec.edges:
        _, report = edged_gate(spec, workers=args.workers)
    else:
        report = grape_optimize(spec, workers=args.workers)
    io.save_pulse(out / "pulse.json", report.best_profile, {"meta": meta})
    io.write_json(out / "report.json", {**report.to_dict(), "meta": meta})
    print(f"best infidelity {report.best_infidelity:.3e} converged={report.converged}")
    return EXIT_OK


def _search(args, cfg, ratio: float):
    base = opt_spec(replace(cfg, delta_z_over_omega=ratio), n_periods=args.window[1])
    return min_duration(ratio, tuple(args.window), args.resolution, base=base)


def _search_row(res, cfg: io.RunConfig) -> list:
    n = res.n_min if res.feasible else float("nan")
    duration_pi_over_dz = 2.0 * n * res.ratio
    if cfg.b_gauss:
        dz = zeeman_splitting(MagneticField(cfg.b_gauss))
        duration_ns = duration_pi_over_dz * math.pi / dz * 1e9
    else:
        duration_ns = float("nan")
    return [res.ratio, n, res.best_infidelity, duration_pi_over_dz, duration_ns]


SEARCH_HEADER = ["ratio", "N", "best_infidelity", "duration_pi_over_delta_z", "duration_ns"]


def cmd_min_duration(args, cfg, out: Path, meta: dict) -> int:
    ratio = cfg.delta_z_over_omega
    res = _search(args, cfg, ratio)
    io.write_csv(out / "min_duration.csv", SEARCH_HEADER, [_search_row(res, cfg)], meta)
    io.write_json(out / "probes.json", {"probes": res.probes, "meta": meta})
    if not res.feasible:
        raise Infeasible(f"no gate in window {tuple(args.window)} at ratio {ratio}")
    io.save_pulse(out / "pulse.json", res.report.best_profile, {"meta": meta})
    print(f"{ratio}, {res.n_min:.4f}")
    return EXIT_OK


def cmd_table1(args, cfg, out: Path, meta: dict) -> int:
    rows = []
    for ratio in args.ratios:
        res = _search(args, cfg, ratio)
        row = _search_row(res, cfg)
        ref = REFERENCE_MIN_N.get(round(ratio, 4), float("nan"))
        rows.append(row + [ref, row[1] - ref])
        print(f"{ratio}: N = {row[1]:.4f} (reference {ref})", flush=True)
    io.write_csv(out / "table1.csv", SEARCH_HEADER + ["N_reference", "difference"], rows, meta)
    return EXIT_OK


def cmd_scan_ratio(args, cfg, out: Path, meta: dict) -> int:
    duration = args.duration_pi * math.pi
    n = duration / (2 * math.pi)
    base = opt_spec(replace(cfg, delta_z_over_omega=args.ratios[0]), n_periods=n)
    rows = []
    for ratio, rep in fixed_duration_scan(duration, args.ratios, base=base):
        infid = max(rep.best_infidelity, 0.0)
        converged = sum(v < base.infidelity_target for v in rep.per_restart_infidelities)
        rows.append([ratio, n, 1.0 - infid, infid, math.log10(max(infid, 1e-16)), converged])
    header = ["ratio", "N", "fidelity", "infidelity", "log10_infidelity", "restarts_converged"]
    io.write_csv(out / "scan_ratio.csv", header, rows, meta)
    return EXIT_OK


def cmd_scan_impurity(args, cfg, out: Path, meta: dict) -> int:
    profile, pulse_id = pulse_for(args, cfg, args.workers)
    laser = LaserConfig.from_ratio(cfg.delta_z_over_omega, split=cfg.split)
    s0s, ss = default_grid(args.points)
    res = impurity_scan(profile, laser, s0s, ss, workers=args.workers, pulse_id=pulse_id)
    meta = {**meta, "pulse_id": pulse_id}
    io.write_csv(out / "scan_impurity.csv", ["varsigma0", "varsigma", "fidelity"], res.grid, meta)
    # heatmap: rows follow varsigma0, columns follow varsigma
    heat = [[s0, *row] for s0, row in zip(res.varsigma0, res.fidelity)]
    io.write_csv(out / "scan_impurity_heatmap.csv", ["varsigma0\\varsigma", *map(repr, map(float, ss))], heat, meta)
    io.save_pulse(out / "pulse.json", profile, {"meta": meta})
    return EXIT_OK


def cmd_simulate(args, cfg, out: Path, meta: dict) -> int:
    profile, pulse_id = pulse_for(args, cfg, args.workers)
    laser = LaserConfig.from_ratio(cfg.delta_z_over_omega, split=cfg.split)
    impurity = impurity_of(cfg)
    basis = enumerate_basis(impurity is not None)
    u, trajectories = propagate(profile, basis, coupling_table(laser, impurity))
    result = gauge_fix(extract_gate_matrix(u, basis))
    rows = []
    for label, tr in zip(INPUT_LABELS, trajectories):
        amp = tr.states[:, tr.input_index]
        for t, a, pr in zip(tr.times, amp, tr.rydberg_population):
            rows.append([float(t), label, float(abs(a) ** 2), float(np.angle(a)), float(pr)])
    meta = {**meta, "pulse_id": pulse_id}
    header = ["time", "input_state", "ground_population", "ground_phase", "rydberg_population"]
    io.write_csv(out / "trajectory.csv", header, rows, meta)
    raw = pedersen_fidelity(result.m_matrix, CZ)
    io.write_json(out / "gate.json", {**result.to_dict(), "raw_fidelity": raw, "meta": meta})
    print(f"fidelity {result.fidelity:.12f}")
    return EXIT_OK


def cmd_decay_error(args, cfg, out: Path, meta: dict) -> int:
    if cfg.b_gauss is None:
        raise io.ConfigError("decay-error needs b_gauss to fix physical units")
    profile, pulse_id = pulse_for(args, cfg, args.workers)
    ratio = cfg.delta_z_over_omega
    laser = LaserConfig.from_ratio(ratio, split=cfg.split)
    basis = enumerate_basis(False)
    _, trajectories = propagate(profile, basis, coupling_table(laser))
    omega = 2 * math.pi * cfg.omega_max_mhz * 1e6
    tau = cfg.tau_us * 1e-6
    est = decay_error(trajectories, tau, omega_max=omega)
    dz = zeeman_splitting(MagneticField(cfg.b_gauss))
    doc = {
        **est.to_dict(),
        "rydberg_time_omega_units": est.rydberg_time * omega,
        "closed_form_error": closed_form_decay_error(ratio, dz, tau),
        "meta": {**meta, "pulse_id": pulse_id},
    }
    io.write_json(out / "decay.json", doc)
    print(f"decay error {est.error:.3e}")
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "min-duration": cmd_min_duration,
    "table1": cmd_table1,
    "scan-ratio": cmd_scan_ratio,
    "scan-impurity": cmd_scan_impurity,
    "simulate": cmd_simulate,
    "decay-error": cmd_decay_error,
}


def _fail(out: Path | None, code: int, kind: str, exc: BaseException) -> int:
    doc = {"error": kind, "message": str(exc), "exit_code": code}
    print(json.dumps(doc), file=sys.stderr)
    if out is not None and out.is_dir():
        io.write_json(out / "error.json", doc)
    return code


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    out = args.output_dir or Path(os.environ.get(OUTPUT_ENV, "out"))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        return _fail(None, EXIT_CONFIG, "config", exc)
    handler = logging.FileHandler(out / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    root = logging.getLogger("clockgate")
    root.addHandler(handler)
    root.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        cfg = resolve_config(args)
        meta = {"command": args.command, "config": cfg.to_dict(), "seed": cfg.seed}
        log.info("%s %s", args.command, json.dumps(meta["config"], sort_keys=True))
        return COMMANDS[args.command](args, cfg, out, meta)
    except io.ConfigError as exc:
        return _fail(out, EXIT_CONFIG, "config", exc)
    except Infeasible as exc:
        return _fail(out, EXIT_INFEASIBLE, "infeasible", exc)
    except Exception as exc:  # noqa: BLE001
        log.exception("internal failure")
        return _fail(out, EXIT_INTERNAL, "internal", exc)
    finally:
        root.removeHandler(handler)
        handler.close()


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Command-line front end.

    atomrb rb --config configs/rb.ini --out results/

Exit codes: 0 success, 2 configuration error, 3 a fit did not converge.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, engine
from .clifford import generate_group
from .config import KINDS, ConfigError, RunConfig, load_config, with_overrides
from .noise import NoiseConfig, t2s_of_depth
from .pulse import export_decomposition_csv, mean_clifford_duration, schedules

log = logging.getLogger("atomrb")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FIT = 3


class FitFailed(RuntimeError):
    pass


def derive_seed(seed: int, index: int) -> int:
    """Deterministic 64-bit child seed for sub-run ``index``."""
    words = np.random.SeedSequence(seed, spawn_key=(99, index)).generate_state(2, np.uint32)
    return int(words[0]) << 32 | int(words[1])


def _header(cfg: RunConfig, command: str) -> list[str]:
    return [f"atomrb {command}", f"seed = {cfg.seed}"] + cfg.header_lines()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fit_payload(cfg: RunConfig, command: str, fit: analysis.FitResult, **extra) -> dict:
    return {"command": command, "seed": cfg.seed, "config": cfg.to_text(include_out=False), "fit": fit.to_dict(), **extra}


def _check(fit: analysis.FitResult, what: str) -> None:
    if not fit.converged:
        raise FitFailed(f"{what} fit did not converge: {fit.message}")


def _linspace(start: float, stop: float, n: int) -> np.ndarray:
    if n < 2:
        raise ConfigError("need at least 2 scan points")
    return np.linspace(start, stop, n)


def cmd_rb(cfg: RunConfig, out: Path, workers: int = 1) -> analysis.FitResult:
    rbc = cfg.rb_config()
    ds = engine.run_rb(rbc, cfg.noise, workers=workers)
    header = _header(cfg, "rb")
    ds.to_csv(out / "rb_data.csv", header)
    fit = analysis.fit_rb_decay(ds)
    xs, ys = analysis.sample_curve(analysis.rb_model, fit, 0, max(rbc.lengths))
    analysis.write_curve_csv(out / "rb_curve.csv", xs, ys, header)
    _write_json(out / "rb_fit.json", _fit_payload(cfg, "rb", fit, data=ds.summary(), t_cg=rbc.t_cg))
    log.info("eps_g = %.3e +/- %.1e, d_if = %.4f", fit["eps"], fit.err("eps"), fit["d_if"])
    _check(fit, "RB decay")
    return fit


def cmd_sweep(cfg: RunConfig, out: Path, workers: int = 1) -> analysis.FitResult:
    model = cfg.trap_model()
    base = cfg.rb_config()
    header = _header(cfg, "sweep")
    rows, points = [], []
    for k, ratio in enumerate(cfg.trap.ratios):
        t2s = t2s_of_depth(model, ratio)
        noise = dataclasses.replace(cfg.noise, t2s=t2s)
        rbc = cfg.rb_config(seed=derive_seed(cfg.seed, k))
        fit = analysis.fit_rb_decay(engine.run_rb(rbc, noise, workers=workers))
        _check(fit, f"RB decay at depth ratio {ratio}")
        rows.append((ratio, t2s, fit["eps"], fit.err("eps"), fit["d_if"], fit.err("d_if")))
        points.append((t2s, fit["eps"], max(fit.err("eps"), 1e-12)))
        log.info("U/Um = %.3f  T2s = %.3f s  eps = %.3e", ratio, t2s, fit["eps"])
    t_cg = base.t_cg
    eta = analysis.fit_eta(points, t_cg)

    with open(out / "sweep.csv", "w") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        fh.write("ratio,t2s,eps,eps_err,d_if,d_if_err\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    t_lo, t_hi = min(p[0] for p in points), max(p[0] for p in points)
    xs = np.linspace(t_lo, t_hi, 200)
    analysis.write_curve_csv(out / "eta_curve.csv", xs, analysis.eta_model(xs, eta["eta"], t_cg=t_cg), header)
    _write_json(out / "eta_fit.json", _fit_payload(cfg, "sweep", eta, t_cg=t_cg))
    log.info("eta = %.3f +/- %.3f", eta["eta"], eta.err("eta"))
    _check(eta, "eta")
    return eta


def cmd_ramsey(cfg: RunConfig, out: Path, workers: int = 1) -> analysis.FitResult:
    s = cfg.ramsey
    delays = _linspace(s.delay_start, s.delay_stop, s.n_delays)
    trace = engine.run_ramsey(s.detuning_hz, delays, s.shots, s.envelope_t2r, cfg.noise, cfg.seed)
    return _trace_command(cfg, out, "ramsey", trace, analysis.fit_sinusoid, analysis.sinusoid)


def cmd_echo(cfg: RunConfig, out: Path, workers: int = 1) -> analysis.FitResult:
    s = cfg.echo
    delays = _linspace(s.delay_start, s.delay_stop, s.n_delays)
    trace = engine.run_spin_echo(delays, s.t2s, s.shots, cfg.seed, cfg.noise)
    return _trace_command(cfg, out, "echo", trace, analysis.fit_echo_decay, analysis.echo_envelope)


def cmd_calibrate(cfg: RunConfig, out: Path, workers: int = 1) -> analysis.FitResult:
    s = cfg.calibrate
    durations = _linspace(s.scan_center - s.scan_halfwidth, s.scan_center + s.scan_halfwidth, s.n_durations)
    trace = engine.run_pulse_calibration(s.n_pulses, durations, s.true_t_half_pi, s.shots, cfg.noise, cfg.seed)
    return _trace_command(cfg, out, "calibrate", trace, analysis.fit_gaussian, analysis.gaussian)


def _trace_command(cfg, out: Path, name: str, trace, fitter, model) -> analysis.FitResult:
    header = _header(cfg, name)
    trace.to_csv(out / f"{name}_trace.csv", header)
    fit = fitter(trace)
    xs, ys = analysis.sample_curve(model, fit, float(trace.x.min()), float(trace.x.max()))
    analysis.write_curve_csv(out / f"{name}_curve.csv", xs, ys, header)
    _write_json(out / f"{name}_fit.json", _fit_payload(cfg, name, fit, meta=trace.meta))
    log.info("%s fit: %s", name, {k: f"{v:.6g}" for k, v in fit.params.items()})
    _check(fit, name)
    return fit


def cmd_budget(cfg: RunConfig, out: Path, workers: int = 1) -> analysis.BudgetReport:
    s = cfg.rb
    table = generate_group()
    scheds = schedules(s.t_half_pi, s.idle, s.policy, table)
    t_cg = cfg.budget.t_cg
    if t_cg is None:
        t_cg = mean_clifford_duration(table, s.t_half_pi, s.idle, s.policy)
    rabi = cfg.rb_config().rabi
    report = analysis.error_budget(cfg.noise, t_cg, table, scheds, rabi, cfg.budget.measured_eps)
    export_decomposition_csv(out / "decomposition.csv", s.t_half_pi, s.idle, s.policy)
    table.to_csv(out / "cayley.csv")
    _write_json(
        out / "budget.json",
        {"command": "budget", "seed": cfg.seed, "config": cfg.to_text(include_out=False), "t_cg": t_cg, "budget": report.to_dict()},
    )
    for key in ("detuning", "pulse_area", "dephasing_ratio_estimate", "dephasing_exponential", "total"):
        log.info("%-26s %.4e", key, getattr(report, key))
    return report


COMMANDS = {
    "rb": cmd_rb,
    "sweep": cmd_sweep,
    "ramsey": cmd_ramsey,
    "echo": cmd_echo,
    "calibrate": cmd_calibrate,
    "budget": cmd_budget,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atomrb", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=KINDS, nargs="?", help="experiment to run (default: kind from config)")
    parser.add_argument("--config", type=Path, help="run configuration file")
    parser.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    parser.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--zero-noise", action="store_true", help="switch every noise source off")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        cfg = with_overrides(
            cfg,
            kind=args.command,
            seed=args.seed,
            noise=NoiseConfig() if args.zero_noise else None,
        )
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out or Path(cfg.out or "atomrb-out")
    out.mkdir(parents=True, exist_ok=True)
    try:
        COMMANDS[cfg.kind](cfg, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FitFailed, analysis.InvalidDataError) as exc:
        print(f"fit error: {exc}", file=sys.stderr)
        return EXIT_FIT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``sculi <command> ...``.

Exit status is 0 on success, 2 for configuration or input errors and 3
when a calibration or check does not meet its target.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

from . import __version__
from .attack import run_attack
from .bench import (
    CalibrationError,
    ConfigError,
    SweepResult,
    calibrate,
    check_laser_pack,
    day_variation,
    load_config,
    parse_config,
    rerun_manifest,
    run_sweep,
    scenario_to_ini,
    simulate_scenario,
    static_gamma_sweep,
    build_manifest,
)
from .curve import Scalar
from .tracefile import TraceFormatError, read_trace, write_trace

EXIT_CONFIG = 2
EXIT_CHECK = 3


def _bool(text: str) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _default_out() -> str:
    return os.environ.get("SCULI_OUT", "out")


def _scenarios(args):
    cfg = args.config
    if cfg.startswith("builtin:"):
        name = cfg.split(":", 1)[1]
        try:
            text = resources.files("sculi.data").joinpath(f"{name}.ini").read_text()
        except FileNotFoundError:
            raise ConfigError(f"no built-in config named {name!r}") from None
        scns = parse_config(text)
    else:
        scns = load_config(cfg)
    if getattr(args, "scenario", None):
        wanted = set(args.scenario)
        missing = wanted - {s.name for s in scns}
        if missing:
            raise ConfigError(f"scenario(s) not in config: {', '.join(sorted(missing))}")
        scns = [s for s in scns if s.name in wanted]
    out = []
    for s in scns:
        if getattr(args, "seed", None) is not None:
            s = replace(s, seed=args.seed, repeat=1)
        if getattr(args, "static_only", False):
            s = replace(s, static_only=True)
        if getattr(args, "allow_inversion", None) is not None:
            s = replace(s, allow_inversion=args.allow_inversion)
        out.append(s)
    return out


def _one_scenario(args):
    scns = _scenarios(args)
    if args.scenario and len(scns) != 1:
        raise ConfigError(f"{args.command} takes a single scenario")
    return scns[0]


def cmd_simulate(args) -> int:
    for s in _scenarios(args):
        for seed in s.seeds():
            _, trace = simulate_scenario(s, seed)
            d = Path(args.out) / s.name / str(seed)
            d.mkdir(parents=True, exist_ok=True)
            write_trace(d / "trace.sctr", trace)
            (d / "manifest.json").write_text(json.dumps(build_manifest(s, seed), indent=2, sort_keys=True) + "\n")
            print(f"{d / 'trace.sctr'}: {len(trace.samples)} samples, {trace.n_cycles} cycles")
    return 0


def cmd_attack(args) -> int:
    trace = read_trace(args.trace)
    k = None
    if "scalar_hex" in trace.meta:
        k = Scalar.from_hex(trace.meta["scalar_hex"], 233)
    report = run_attack(trace, k, static_only=args.static_only,
                        allow_inversion=True if args.allow_inversion is None else args.allow_inversion,
                        q=args.q, offset_cycles=args.offset_cycles)
    out = Path(args.out) if args.out else Path(args.trace).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    if report.scored:
        (out / "report.csv").write_text(report.to_csv())
        b = report.best
        print(f"best slot {b.slot}{' (inverted)' if b.inverted else ''}: "
              f"delta = {b.correctness_pct:.2f}%")
    else:
        print("no true scalar in sidecar; wrote unscored candidates")
    print(f"report: {out / 'report.json'}")
    return 0


def cmd_sweep(args) -> int:
    scns = _scenarios(args)
    out = Path(args.out)
    result = run_sweep(scns, out, write_trace_file=not args.no_traces)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(result.to_csv())
    _print_summary(result.summary())
    if not args.no_plots:
        from .plotting import plot_sweep
        plot_sweep(result.summary(), out / "sweep.png")
    print(f"sweep: {out / 'sweep.csv'}")
    if args.check_laser_pack:
        problems = check_laser_pack(result.summary())
        for msg in problems:
            print(f"check failed: {msg}", file=sys.stderr)
        if problems:
            return EXIT_CHECK
        print("laser pack checks passed")
    return 0


def _print_summary(summary) -> None:
    print(f"{'scenario':<16}{'power%':>8}{'d/um':>8}{'dc_offset':>12}{'delta':>9}{'std':>7}{'runs':>6}")
    for r in summary:
        print(f"{r['scenario']:<16}{r['power_pct']:>8g}{r['diameter_um']:>8g}{r['dc_offset']:>12.3f}"
              f"{r['delta_mean']:>9.2f}{r['delta_std']:>7.2f}{r['runs']:>6}")


def cmd_calibrate(args) -> int:
    scns = _scenarios(args)
    if len(scns) != 1:
        raise ConfigError("calibrate needs exactly one scenario (use --scenario)")
    lo, hi = args.target
    try:
        cal, delta, _ = calibrate(
            scns[0], (lo, hi), n_seeds=args.seeds, bounds=tuple(args.bounds),
            progress=lambda s, d: print(f"  sigma_noise={s:<10.6g} mean delta={d:.2f}"),
        )
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    text = scenario_to_ini(cal)
    print(f"calibrated sigma_noise = {cal.power.sigma_noise:g} (mean delta {delta:.2f} over {args.seeds} seeds)")
    if args.write:
        Path(args.write).write_text(text)
        print(f"wrote {args.write}")
    else:
        print(text, end="")
    return 0


def cmd_report(args) -> int:
    path = Path(args.path)
    if path.is_dir() and (path / "sweep.csv").exists():
        with open(path / "sweep.csv") as fh:
            rows = list(csv.DictReader(fh))
        result = SweepResult()
        from .bench import SweepRow
        for r in rows:
            result.rows.append(SweepRow(r["scenario"], int(r["seed"]), float(r["power_pct"]),
                                        float(r["diameter_um"]), float(r["dc_offset"]),
                                        float(r["delta_best"]), int(r["best_slot"]),
                                        r["inverted"] == "true"))
        _print_summary(result.summary())
        if not args.no_plots:
            from .plotting import plot_sweep
            print(f"figure: {plot_sweep(result.summary(), path / 'sweep.png')}")
        return 0
    if path.is_dir():
        path = path / "report.json"
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read report {path}: {exc}") from None
    print(f"method        {data['method']}")
    print(f"scenario      {data['meta'].get('scenario', '-')}  seed {data['meta'].get('seed', '-')}")
    if "best_delta" not in data:
        print(f"{len(data['candidates_hex'])} unscored candidates")
        return 0
    print(f"best slot     {data['best_slot']}{' (inverted)' if data['inverted'] else ''}")
    print(f"best delta    {data['best_delta']:.2f}%  (~{data['best_delta_rounded']}%)")
    print(f"dc offset     {data['meta'].get('dc_offset', 0.0):.4f}")
    deltas = data["slot_delta"]
    top = sorted(range(len(deltas)), key=lambda s: -max(deltas[s], 100 - deltas[s]))[:5]
    print("top slots     " + ", ".join(f"{s}:{max(deltas[s], 100 - deltas[s]):.1f}" for s in top))
    if not args.no_plots:
        from .plotting import plot_slot_deltas, plot_trace_excerpt
        print(f"figure: {plot_slot_deltas(deltas, path.parent / 'slots.png')}")
        trace_path = path.parent / "trace.sctr"
        if trace_path.exists():
            print(f"figure: {plot_trace_excerpt(read_trace(trace_path), path.parent / 'trace.png')}")
    return 0


def cmd_rerun(args) -> int:
    row, _ = rerun_manifest(args.manifest, args.out)
    print(f"{row.scenario} seed {row.seed}: delta = {row.delta_best:.2f}%")
    return 0


def cmd_day_variation(args) -> int:
    s = _one_scenario(args)
    if args.drift is not None:
        s = s.with_power(drift=args.drift)
    ds = day_variation(s, args.days, fresh_seeds=not args.same_seed)
    print("days: " + ", ".join(f"{d:.2f}" for d in ds))
    spread = max(ds) - min(ds)
    print(f"spread: {spread:.2f} points")
    if args.max_spread is not None and spread > args.max_spread:
        return EXIT_CHECK
    return 0


def cmd_static_sweep(args) -> int:
    s = _one_scenario(args)
    points, rho = static_gamma_sweep(s, args.gammas, n_seeds=args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "static_sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["gamma_alpha", "delta_mean"])
        for x, y in points:
            w.writerow([f"{x:.6g}", f"{y:.6f}"])
            print(f"gamma*alpha={x:<10.4g} static-only delta={y:.2f}")
    print(f"spearman rho = {rho:.3f}")
    if not args.no_plots:
        from .plotting import plot_gamma_sweep
        plot_gamma_sweep(points, out / "static_sweep.png")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sculi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp, seed=True):
        sp.add_argument("--config", required=True,
                        help="INI scenario file, or builtin:NAME for a shipped config")
        sp.add_argument("--scenario", action="append", help="run only this scenario (repeatable)")
        if seed:
            sp.add_argument("--seed", type=int, help="single run with this seed instead of the config's")
        sp.add_argument("--out", default=_default_out(), help="output root (default: $SCULI_OUT or ./out)")

    def attack_args(sp):
        sp.add_argument("--static-only", action="store_true", help="attack the quiescent tail of each cycle")
        sp.add_argument("--allow-inversion", type=_bool, default=None, metavar="BOOL",
                        help="also consider inverted candidates (default true)")

    sp = sub.add_parser("simulate", help="scenario -> trace file")
    config_args(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("attack", help="trace file -> attack report")
    sp.add_argument("trace")
    sp.add_argument("--out", help="report directory (default: next to the trace)")
    attack_args(sp)
    sp.add_argument("--q", type=int, default=100, help="quiescent window for --static-only")
    sp.add_argument("--offset-cycles", type=int, default=0, help="cycles to skip before the first key bit")
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("sweep", help="run every scenario of a config, write sweep.csv")
    config_args(sp)
    attack_args(sp)
    sp.add_argument("--no-traces", action="store_true", help="skip writing trace files")
    sp.add_argument("--check-laser-pack", action="store_true",
                    help="exit 3 unless offsets rise with power and delta stays within 2 points of the first scenario")
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("calibrate", help="fit sigma_noise to a target correctness range")
    config_args(sp, seed=False)
    sp.add_argument("--target", type=float, nargs=2, default=(89.0, 92.0), metavar=("LO", "HI"))
    sp.add_argument("--seeds", type=int, default=10)
    sp.add_argument("--bounds", type=float, nargs=2, default=(0.0, 20.0), metavar=("LO", "HI"))
    sp.add_argument("--write", help="write the calibrated scenario to this INI file")
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("report", help="pretty-print a report or sweep directory and render figures")
    sp.add_argument("path")
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("rerun", help="repeat a run from its manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", default=_default_out())
    sp.set_defaults(func=cmd_rerun)

    sp = sub.add_parser("day-variation", help="re-measure one scenario on several days")
    config_args(sp, seed=False)
    sp.add_argument("--days", type=int, default=3)
    sp.add_argument("--drift", type=float, help="override power.drift")
    sp.add_argument("--same-seed", action="store_true", help="reuse the noise seed every day")
    sp.add_argument("--max-spread", type=float, help="exit 3 if the spread exceeds this")
    sp.set_defaults(func=cmd_day_variation)

    sp = sub.add_parser("static-sweep", help="static-only attack versus gamma")
    config_args(sp, seed=False)
    sp.add_argument("--gammas", type=float, nargs="+", required=True)
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--no-plots", action="store_true")
    sp.set_defaults(func=cmd_static_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())

"""Scenario configs and experiment orchestration.

A config is an INI file with one section per scenario.  Keys in
``[DEFAULT]`` are inherited by every scenario::

    [DEFAULT]
    scalar = random:2024        ; hex, "random" (drawn from the run seed) or "random:N"
    seed = 1
    repeat = 1
    power.sigma_noise = 2.0
    power.gate.Multiplexer = 1

    [exp3]
    laser.enabled = true
    laser.power_pct = 100
    laser.diameter_um = 14
    laser.center = FieldMultiplier   ; a block name or "x,y" in micrometres

Every run of a scenario writes ``<out>/<scenario>/<seed>/`` with the trace,
its sidecar, the attack report and a manifest from which the run can be
repeated exactly.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import random
import statistics
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .accel import BLOCKS, Block, simulate_kp
from .attack import AttackReport, run_attack
from .curve import B233_CURVE, AffinePoint, Scalar, is_on_curve, point_from_hex
from .leakage import (
    DEFAULT_FLOORPLAN,
    LaserSpec,
    PowerParams,
    Trace,
    dc_offset,
    synthesize_trace,
)
from .tracefile import write_trace

__all__ = [
    "ConfigError",
    "CalibrationError",
    "Scenario",
    "SweepRow",
    "SweepResult",
    "parse_config",
    "load_config",
    "scenario_to_ini",
    "resolve_scalar",
    "simulate_scenario",
    "run_scenario",
    "run_sweep",
    "rerun_manifest",
    "build_manifest",
    "calibrate",
    "day_variation",
    "static_gamma_sweep",
    "LASER_PACK_ROWS",
    "laser_pack_scenarios",
    "check_laser_pack",
]

SCALAR_BITS = 233


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


class CalibrationError(RuntimeError):
    def __init__(self, message: str, history: list[tuple[float, float]]):
        grid = ", ".join(f"sigma={s:g}: delta={d:.2f}" for s, d in history)
        super().__init__(f"{message}; explored: {grid}")
        self.history = history


@dataclass(frozen=True)
class Scenario:
    name: str
    scalar: str = "random"
    base_point: str = "G"
    laser: LaserSpec = LaserSpec()
    power: PowerParams = PowerParams()
    seed: int = 1
    repeat: int = 1
    static_only: bool = False
    q: int = 100
    allow_inversion: bool = True

    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.repeat)]

    def with_power(self, **changes) -> "Scenario":
        return replace(self, power=replace(self.power, **changes))


# -- config parsing ------------------------------------------------------------

_POWER_KEYS = ("w_dyn", "i_static0", "gamma", "alpha", "eta", "sigma_noise", "drift", "kernel_decay")
_KNOWN = (
    {"scalar", "base_point", "seed", "repeat", "laser.enabled", "laser.power_pct",
     "laser.diameter_um", "laser.center", "attack.static_only", "attack.q", "attack.allow_inversion"}
    | {f"power.{k}" for k in _POWER_KEYS}
    | {f"power.gate.{b.value}" for b in BLOCKS}
)


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str  # keep block names' case
    return cp


def _get(sec: configparser.SectionProxy, key: str, conv: Callable, default):
    if key not in sec:
        return default
    raw = sec[key]
    try:
        if conv is bool:
            return sec.getboolean(key)
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key}: cannot parse {raw!r} ({exc})") from None


def _center(sec: configparser.SectionProxy) -> tuple[float, float]:
    raw = sec.get("laser.center", Block.FIELD_MULTIPLIER.value).strip()
    try:
        return DEFAULT_FLOORPLAN.center_of(raw)
    except ValueError:
        pass
    try:
        x, y = (float(v) for v in raw.split(","))
    except ValueError:
        raise ConfigError(
            f"[{sec.name}] laser.center: expected a block name or 'x,y', got {raw!r}"
        ) from None
    return (x, y)


def _scenario(sec: configparser.SectionProxy) -> Scenario:
    unknown = sorted(set(sec) - _KNOWN)
    if unknown:
        raise ConfigError(f"[{sec.name}] unknown key(s): {', '.join(unknown)}")
    defaults = PowerParams()
    try:
        gates = {b: _get(sec, f"power.gate.{b.value}", float, defaults.gate_weights[b]) for b in BLOCKS}
        power = PowerParams(
            **{k: _get(sec, f"power.{k}", float, getattr(defaults, k)) for k in _POWER_KEYS},
            gate_weights=gates,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] power: {exc}") from None
    try:
        laser = LaserSpec(
            enabled=_get(sec, "laser.enabled", bool, False),
            power_pct=_get(sec, "laser.power_pct", float, 0.0),
            fwhm_diameter_um=_get(sec, "laser.diameter_um", float, 14.0),
            center=_center(sec),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] laser: {exc}") from None
    s = Scenario(
        name=sec.name,
        scalar=sec.get("scalar", "random").strip(),
        base_point=sec.get("base_point", "G").strip(),
        laser=laser,
        power=power,
        seed=_get(sec, "seed", int, 1),
        repeat=_get(sec, "repeat", int, 1),
        static_only=_get(sec, "attack.static_only", bool, False),
        q=_get(sec, "attack.q", int, 100),
        allow_inversion=_get(sec, "attack.allow_inversion", bool, True),
    )
    if s.seed < 0:
        raise ConfigError(f"[{s.name}] seed: must be >= 0")
    if s.repeat < 1:
        raise ConfigError(f"[{s.name}] repeat: must be >= 1")
    if not 1 <= s.q <= 1250:
        raise ConfigError(f"[{s.name}] attack.q: must lie in [1, 1250]")
    try:
        resolve_scalar(s, s.seed)
        resolve_base_point(s)
    except ValueError as exc:
        raise ConfigError(f"[{s.name}] {exc}") from None
    return s


def parse_config(text: str) -> list[Scenario]:
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    if not cp.sections():
        raise ConfigError("config defines no scenarios")
    return [_scenario(cp[name]) for name in cp.sections()]


def load_config(path: str | Path) -> list[Scenario]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def scenario_to_ini(s: Scenario) -> str:
    """Canonical single-section INI text; parses back to an equal Scenario."""
    cp = _parser()
    cp[s.name] = {}
    sec = cp[s.name]
    sec["scalar"] = s.scalar
    sec["base_point"] = s.base_point
    sec["seed"] = str(s.seed)
    sec["repeat"] = str(s.repeat)
    sec["laser.enabled"] = str(s.laser.enabled).lower()
    sec["laser.power_pct"] = repr(float(s.laser.power_pct))
    sec["laser.diameter_um"] = repr(float(s.laser.fwhm_diameter_um))
    sec["laser.center"] = f"{s.laser.center[0]!r},{s.laser.center[1]!r}"
    for k in _POWER_KEYS:
        sec[f"power.{k}"] = repr(float(getattr(s.power, k)))
    for b in BLOCKS:
        sec[f"power.gate.{b.value}"] = repr(float(s.power.gate_weights[b]))
    sec["attack.static_only"] = str(s.static_only).lower()
    sec["attack.q"] = str(s.q)
    sec["attack.allow_inversion"] = str(s.allow_inversion).lower()
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def resolve_scalar(s: Scenario, seed: int) -> Scalar:
    spec = s.scalar.lower()
    if spec == "random":
        return Scalar.random(random.Random(seed), SCALAR_BITS)
    if spec.startswith("random:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"scalar: bad random seed in {s.scalar!r}") from None
        return Scalar.random(random.Random(n), SCALAR_BITS)
    try:
        k = Scalar.from_hex(spec, SCALAR_BITS)
    except ValueError:
        raise ValueError(f"scalar: expected hex, 'random' or 'random:N', got {s.scalar!r}") from None
    if not k.has_leading_one:
        raise ValueError(f"scalar: needs its top bit (bit {SCALAR_BITS - 1}) set")
    return k


def resolve_base_point(s: Scenario) -> AffinePoint:
    if s.base_point.upper() == "G":
        return B233_CURVE.base_point
    p = point_from_hex(s.base_point)
    if p.at_infinity or not is_on_curve(p, B233_CURVE):
        raise ValueError("base_point: not a finite point on B-233")
    return p


# -- running ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    scenario: str
    seed: int
    power_pct: float
    diameter_um: float
    dc_offset: float
    delta_best: float
    best_slot: int
    inverted: bool


@dataclass
class SweepResult:
    rows: list[SweepRow] = field(default_factory=list)

    COLUMNS = ("scenario", "power_pct", "diameter_um", "dc_offset", "delta_best", "seed",
               "best_slot", "inverted")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r.scenario, f"{r.power_pct:g}", f"{r.diameter_um:g}", f"{r.dc_offset:.6f}",
                        f"{r.delta_best:.6f}", r.seed, r.best_slot, str(r.inverted).lower()])
        return buf.getvalue()

    def summary(self) -> list[dict]:
        """Mean and std of best delta per scenario, in first-seen order."""
        groups: dict[str, list[SweepRow]] = {}
        for r in self.rows:
            groups.setdefault(r.scenario, []).append(r)
        out = []
        for name, rows in groups.items():
            ds = [r.delta_best for r in rows]
            out.append({
                "scenario": name,
                "power_pct": rows[0].power_pct,
                "diameter_um": rows[0].diameter_um,
                "dc_offset": statistics.fmean(r.dc_offset for r in rows),
                "delta_mean": statistics.fmean(ds),
                "delta_std": statistics.stdev(ds) if len(ds) > 1 else 0.0,
                "runs": len(ds),
            })
        return out


def simulate_scenario(s: Scenario, seed: int, drift_seed: int | None = None) -> tuple[Scalar, Trace]:
    k = resolve_scalar(s, seed)
    p = resolve_base_point(s)
    _, log = simulate_kp(k, p)
    meta = {"scenario": s.name, "scalar_hex": k.to_hex()}
    return k, synthesize_trace(log, s.power, s.laser, DEFAULT_FLOORPLAN, seed, meta, drift_seed)


def _reference_trace(s: Scenario, seed: int, drift_seed: int | None) -> Trace:
    return simulate_scenario(replace(s, laser=replace(s.laser, enabled=False)), seed, drift_seed)[1]


def build_manifest(s: Scenario, seed: int) -> dict:
    ini = scenario_to_ini(s)
    return {
        "toolkit": "sculi",
        "version": __version__,
        "scenario": s.name,
        "seed": seed,
        "config": ini,
        "config_sha256": hashlib.sha256(ini.encode()).hexdigest(),
    }


def run_scenario(s: Scenario, seed: int | None = None, out_root: str | Path | None = None,
                 write_trace_file: bool = True,
                 drift_seed: int | None = None) -> tuple[SweepRow, AttackReport]:
    """Simulate, synthesize, attack and (optionally) write the run's artifacts."""
    seed = s.seed if seed is None else seed
    k, trace = simulate_scenario(s, seed, drift_seed)
    report = run_attack(trace, k, static_only=s.static_only, allow_inversion=s.allow_inversion, q=s.q)
    offset = dc_offset(trace, _reference_trace(s, seed, drift_seed)) if s.laser.enabled else 0.0
    report.meta["dc_offset"] = round(offset, 6)
    best = report.best
    row = SweepRow(s.name, seed, s.laser.power_pct if s.laser.enabled else 0.0,
                   s.laser.fwhm_diameter_um if s.laser.enabled else 0.0,
                   offset, best.correctness_pct, best.slot, best.inverted)
    if out_root is not None:
        d = Path(out_root) / s.name / str(seed)
        d.mkdir(parents=True, exist_ok=True)
        if write_trace_file:
            write_trace(d / "trace.sctr", trace)
        (d / "report.json").write_text(report.to_json())
        (d / "report.csv").write_text(report.to_csv())
        manifest = build_manifest(s, seed)
        if drift_seed is not None:
            manifest["drift_seed"] = drift_seed
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return row, report


def run_sweep(scenarios: Iterable[Scenario], out_root: str | Path | None = None,
              write_trace_file: bool = True) -> SweepResult:
    result = SweepResult()
    for s in scenarios:
        for seed in s.seeds():
            row, _ = run_scenario(s, seed, out_root, write_trace_file)
            result.rows.append(row)
    return result


def rerun_manifest(path: str | Path, out_root: str | Path) -> tuple[SweepRow, AttackReport]:
    m = json.loads(Path(path).read_text())
    if hashlib.sha256(m["config"].encode()).hexdigest() != m["config_sha256"]:
        raise ConfigError(f"{path}: config hash mismatch")
    (s,) = parse_config(m["config"])
    return run_scenario(s, int(m["seed"]), out_root, drift_seed=m.get("drift_seed"))


# -- calibration and sweeps --------------------------------------------------------

def _mean_delta(s: Scenario, seeds: list[int]) -> float:
    return statistics.fmean(run_scenario(s, seed)[0].delta_best for seed in seeds)


def calibrate(
    s: Scenario,
    target: tuple[float, float] = (89.0, 92.0),
    n_seeds: int = 10,
    bounds: tuple[float, float] = (0.0, 20.0),
    max_iter: int = 30,
    progress: Callable[[float, float], None] | None = None,
) -> tuple[Scenario, float, list[tuple[float, float]]]:
    """Bisect sigma_noise until the mean best delta over ``n_seeds`` runs lands in ``target``.

    Best delta falls as noise grows, so the search keeps a bracket
    [lo, hi] with delta(lo) above and delta(hi) below the target.  Returns
    the calibrated scenario, its mean delta and the explored (sigma, delta)
    history.
    """
    seeds = [s.seed + i for i in range(n_seeds)]
    history: list[tuple[float, float]] = []

    def evaluate(sigma: float) -> float:
        d = _mean_delta(s.with_power(sigma_noise=sigma), seeds)
        history.append((sigma, d))
        if progress:
            progress(sigma, d)
        return d

    lo, hi = bounds
    d_lo, d_hi = evaluate(lo), evaluate(hi)
    for sigma, d in ((lo, d_lo), (hi, d_hi)):
        if target[0] <= d <= target[1]:
            return replace(s.with_power(sigma_noise=sigma), repeat=n_seeds), d, history
    if not d_lo > target[1] or not d_hi < target[0]:
        raise CalibrationError(f"target {target} is not bracketed by sigma bounds {bounds}", history)
    for _ in range(max_iter):
        mid = (lo + hi) / 2
        d = evaluate(mid)
        if target[0] <= d <= target[1]:
            return replace(s.with_power(sigma_noise=mid), repeat=n_seeds), d, history
        if d > target[1]:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"no sigma within {max_iter} bisection steps hit {target}", history)


def day_variation(s: Scenario, n_days: int = 3, fresh_seeds: bool = True) -> list[float]:
    """Best delta of the scenario re-measured on ``n_days`` days.

    Each day gets its own noise seed (unless ``fresh_seeds`` is off) and its
    own baseline-drift realisation, keyed by the day index; the scalar stays
    the one of the scenario's first seed, as a device keeps its key between
    sessions.
    """
    k_spec = s.scalar if s.scalar.lower() != "random" else resolve_scalar(s, s.seed).to_hex()
    base = replace(s, scalar=k_spec)
    out = []
    for day in range(n_days):
        seed = s.seed + day if fresh_seeds else s.seed
        out.append(run_scenario(base, seed, drift_seed=s.seed + day)[0].delta_best)
    return out


def static_gamma_sweep(
    s: Scenario,
    gammas: Iterable[float],
    n_seeds: int = 20,
) -> tuple[list[tuple[float, float]], float]:
    """Mean static-only best delta per gamma; returns ((gamma*alpha, delta) points, Spearman rho)."""
    points = []
    for g in gammas:
        scn = replace(s.with_power(gamma=g), static_only=True)
        points.append((g * s.power.alpha, _mean_delta(scn, [s.seed + i for i in range(n_seeds)])))
    x, y = zip(*points)
    rho = float(spearmanr(x, y).statistic) if len(set(y)) > 1 else float("nan")
    return points, rho


# -- the laser scenario pack ------------------------------------------------------

# (name, power %, FWHM diameter um); the first row has the laser off
LASER_PACK_ROWS = (
    ("exp1_reference", 0.0, 14.0),
    ("exp2", 3.0, 14.0),
    ("exp3", 100.0, 14.0),
    ("exp4", 13.0, 27.0),
    ("exp5", 59.0, 58.0),
    ("exp6", 100.0, 75.0),
)


def laser_pack_scenarios(base: Scenario, target: Block | str = Block.FIELD_MULTIPLIER) -> list[Scenario]:
    """Six scenarios sharing ``base``'s key, seed and power model, spot on ``target``."""
    center = DEFAULT_FLOORPLAN.center_of(target)
    out = []
    for name, power, d in LASER_PACK_ROWS:
        laser = LaserSpec(enabled=power > 0, power_pct=power, fwhm_diameter_um=d, center=center)
        out.append(replace(base, name=name, laser=laser))
    return out


def check_laser_pack(summary: list[dict], max_delta_change: float = 2.0, equal_power_tol: float = 0.05) -> list[str]:
    """Problems with a laser pack sweep summary; empty when it passes.

    The first row is the laser-off reference.  Offsets must rise strictly
    with laser power, offsets at equal power must agree within
    ``equal_power_tol`` (relative), and no scenario may move the mean best
    delta by more than ``max_delta_change`` points from the reference.
    """
    problems = []
    ref, lit = summary[0], summary[1:]
    for r in lit:
        change = r["delta_mean"] - ref["delta_mean"]
        if abs(change) > max_delta_change:
            problems.append(f"{r['scenario']}: delta moved {change:+.2f} points")
    by_power: dict[float, list[dict]] = {}
    for r in lit:
        by_power.setdefault(r["power_pct"], []).append(r)
    levels = sorted(by_power)
    for lo, hi in zip(levels, levels[1:]):
        if not max(r["dc_offset"] for r in by_power[lo]) < min(r["dc_offset"] for r in by_power[hi]):
            problems.append(f"dc offset does not rise from {lo:g}% to {hi:g}%")
    for power, rows in by_power.items():
        offs = [r["dc_offset"] for r in rows]
        if len(offs) > 1 and (max(offs) - min(offs)) > equal_power_tol * max(abs(o) for o in offs):
            problems.append(f"offsets at {power:g}% differ by more than {equal_power_tol:.0%}")
    return problems

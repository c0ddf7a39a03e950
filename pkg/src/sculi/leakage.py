"""Power-trace synthesis from an accelerator activity log.

Each clock cycle becomes 1250 samples (5 GS/s at a 4 MHz clock):

    sample(c, s) = kernel(s) * w_dyn * sum_b g_b * toggles(c, b)
                 + static(c) + drift(c) + sigma_noise * z(c, s)

    static(c) = i_static0 * sum_b [ g_b * (1 + alpha * A_b)
                                    + gamma * alpha * A_b * stored_weight(c, b) ]

``A_b`` is the laser power absorbed by block ``b``.  Without illumination
the static level is a data-independent constant; illumination raises it
and, through ``gamma``, makes it follow the stored data.  The laser never
touches the switching term.

Noise is drawn per cycle from a counter-based generator keyed by
(seed, cycle), so any cycle range can be synthesized on its own and the
result is bit-identical to a full run.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping

import numpy as np

from .accel import BLOCKS, CLOCK_HZ, DEFAULT_GATE_COUNTS, ActivityLog, Block

__all__ = [
    "SAMPLE_RATE",
    "SAMPLES_PER_CYCLE",
    "Rect",
    "Floorplan",
    "DEFAULT_FLOORPLAN",
    "LaserSpec",
    "LASER_OFF",
    "PowerParams",
    "Trace",
    "fwhm_to_sigma",
    "beam_intensity",
    "absorbed_power",
    "absorbed_powers",
    "synthesize_cycles",
    "synthesize_trace",
    "dc_offset",
]

SAMPLE_RATE = 5e9
SAMPLES_PER_CYCLE = 1250

# Philox counter word 2 separates independent random streams for one seed
_NOISE_STREAM = 0
_DRIFT_STREAM = 1


@dataclass(frozen=True)
class Rect:
    x: float
    y: float
    width: float
    height: float

    @property
    def x1(self) -> float:
        return self.x + self.width

    @property
    def y1(self) -> float:
        return self.y + self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.width / 2, self.y + self.height / 2)

    @property
    def area(self) -> float:
        return self.width * self.height

    def contains(self, other: "Rect") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x1 <= self.x1 and other.y1 <= self.y1)

    def overlaps(self, other: "Rect") -> bool:
        return (self.x < other.x1 and other.x < self.x1
                and self.y < other.y1 and other.y < self.y1)


@dataclass(frozen=True)
class Floorplan:
    """Block placement on the die, coordinates in micrometres."""

    die: Rect
    blocks: Mapping[Block, Rect]

    def __post_init__(self):
        missing = set(BLOCKS) - set(self.blocks)
        if missing:
            raise ValueError(f"floorplan lacks blocks: {sorted(b.value for b in missing)}")
        rects = [(b, self.blocks[b]) for b in BLOCKS]
        for b, r in rects:
            if r.width <= 0 or r.height <= 0:
                raise ValueError(f"{b.value}: empty rectangle")
            if not self.die.contains(r):
                raise ValueError(f"{b.value}: rectangle leaves the die")
        for i, (b1, r1) in enumerate(rects):
            for b2, r2 in rects[i + 1:]:
                if r1.overlaps(r2):
                    raise ValueError(f"{b1.value} overlaps {b2.value}")

    def center_of(self, b: Block | str) -> tuple[float, float]:
        return self.blocks[Block(b)].center


# Multiplier on the left 60% of a 3 mm die, registers top right, three
# small blocks along the bottom right.
DEFAULT_FLOORPLAN = Floorplan(
    die=Rect(0, 0, 3000, 3000),
    blocks={
        Block.FIELD_MULTIPLIER: Rect(0, 0, 1800, 3000),
        Block.REGISTERS: Rect(1800, 1200, 1200, 1800),
        Block.FIELD_ADDER: Rect(1800, 0, 600, 1200),
        Block.CONTROLLER: Rect(2400, 0, 600, 600),
        Block.MULTIPLEXER: Rect(2400, 600, 600, 600),
    },
)


@dataclass(frozen=True)
class LaserSpec:
    enabled: bool = False
    power_pct: float = 0.0
    fwhm_diameter_um: float = 14.0
    center: tuple[float, float] = (900.0, 1500.0)

    def __post_init__(self):
        if not 0 <= self.power_pct <= 100:
            raise ValueError(f"power_pct must lie in [0, 100], got {self.power_pct}")
        if not self.fwhm_diameter_um > 0:
            raise ValueError(f"fwhm_diameter_um must be > 0, got {self.fwhm_diameter_um}")


LASER_OFF = LaserSpec()


@dataclass(frozen=True)
class PowerParams:
    w_dyn: float = 1.0
    i_static0: float = 50.0
    gamma: float = 0.0
    alpha: float = 0.02
    eta: float = 0.5
    sigma_noise: float = 0.0
    drift: float = 0.0
    kernel_decay: float = 150.0
    gate_weights: Mapping[Block, float] = field(default_factory=lambda: dict(DEFAULT_GATE_COUNTS))

    def __post_init__(self):
        for name in ("w_dyn", "i_static0", "gamma", "alpha", "sigma_noise", "drift"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if not self.kernel_decay > 0:
            raise ValueError("kernel_decay must be > 0")
        weights = {Block(b): float(v) for b, v in self.gate_weights.items()}
        if set(weights) != set(BLOCKS):
            raise ValueError("gate_weights needs exactly one entry per block")
        if any(v < 0 for v in weights.values()):
            raise ValueError("gate weights must be >= 0")
        object.__setattr__(self, "gate_weights", weights)

    @property
    def leakage_weight(self) -> float:
        """Gate weight of the multiplexer, the block carrying the key-dependent addressing."""
        return self.gate_weights[Block.MULTIPLEXER]

    def with_leakage_weight(self, w: float) -> "PowerParams":
        return replace(self, gate_weights={**self.gate_weights, Block.MULTIPLEXER: w})

    def kernel(self, n: int = SAMPLES_PER_CYCLE) -> np.ndarray:
        return np.exp(-np.arange(n) / self.kernel_decay)

    def weight_vector(self) -> np.ndarray:
        return np.array([self.gate_weights[b] for b in BLOCKS])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gate_weights"] = {b.value: v for b, v in self.gate_weights.items()}
        return d


@dataclass(frozen=True)
class Trace:
    samples: np.ndarray
    sample_rate: float = SAMPLE_RATE
    clock: float = CLOCK_HZ
    meta: dict = field(default_factory=dict)

    @property
    def samples_per_cycle(self) -> int:
        return round(self.sample_rate / self.clock)

    @property
    def n_cycles(self) -> int:
        return len(self.samples) // self.samples_per_cycle

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate


def fwhm_to_sigma(d: float) -> float:
    return d / (2 * math.sqrt(2 * math.log(2)))


def beam_intensity(spec: LaserSpec) -> float:
    """Power per unit area at the spot, up to a constant: power_pct / d^2."""
    if not spec.enabled:
        return 0.0
    return spec.power_pct / spec.fwhm_diameter_um ** 2


def _gauss_mass(lo: float, hi: float, mu: float, sigma: float) -> float:
    s = sigma * math.sqrt(2)
    return 0.5 * (math.erf((hi - mu) / s) - math.erf((lo - mu) / s))


def absorbed_power(spec: LaserSpec, plan: Floorplan, b: Block | str, eta: float) -> float:
    """Beam power landing on block ``b`` after the metal-fill attenuation ``eta``.

    The beam is a unit-mass circular Gaussian; its integral over an
    axis-aligned rectangle separates into two 1-D error-function terms.
    """
    if not spec.enabled or spec.power_pct == 0:
        return 0.0
    r = plan.blocks[Block(b)]
    sigma = fwhm_to_sigma(spec.fwhm_diameter_um)
    cx, cy = spec.center
    mass = _gauss_mass(r.x, r.x1, cx, sigma) * _gauss_mass(r.y, r.y1, cy, sigma)
    return eta * spec.power_pct * mass


def absorbed_powers(spec: LaserSpec, plan: Floorplan, eta: float) -> np.ndarray:
    return np.array([absorbed_power(spec, plan, b, eta) for b in BLOCKS])


def _per_cycle_levels(log: ActivityLog, params: PowerParams, spec: LaserSpec,
                      plan: Floorplan, drift_seed: int) -> tuple[np.ndarray, np.ndarray]:
    g = params.weight_vector()
    a = absorbed_powers(spec, plan, params.eta)
    dyn = params.w_dyn * (log.toggles @ g)
    static = params.i_static0 * (
        np.sum(g * (1 + params.alpha * a))
        + log.stored_weight @ (params.gamma * params.alpha * a)
    )
    if params.drift > 0:
        gen = np.random.Generator(np.random.Philox(key=drift_seed, counter=[0, 0, _DRIFT_STREAM, 0]))
        per_bit = params.drift * gen.standard_normal(log.n_bits)
        static = static + np.repeat(per_bit, log.cycles_per_bit)
    return dyn, static


def synthesize_cycles(
    log: ActivityLog,
    params: PowerParams,
    spec: LaserSpec,
    plan: Floorplan,
    seed: int,
    start: int = 0,
    stop: int | None = None,
    drift_seed: int | None = None,
) -> np.ndarray:
    """Samples for cycles [start, stop) as a (cycles, 1250) float32 array.

    The baseline drift (one offset per key-bit window) is drawn from
    ``drift_seed``, which defaults to ``seed``.
    """
    stop = log.n_cycles if stop is None else stop
    if not 0 <= start <= stop <= log.n_cycles:
        raise ValueError(f"cycle range [{start}, {stop}) outside log of {log.n_cycles} cycles")
    drift_seed = seed if drift_seed is None else drift_seed
    if seed < 0 or drift_seed < 0:
        raise ValueError("seeds must be non-negative")
    dyn, static = _per_cycle_levels(log, params, spec, plan, drift_seed)
    kernel = params.kernel().astype(np.float32)
    out = np.empty((stop - start, SAMPLES_PER_CYCLE), dtype=np.float32)
    np.multiply(dyn[start:stop, None].astype(np.float32), kernel[None, :], out=out)
    out += static[start:stop, None].astype(np.float32)
    if params.sigma_noise > 0:
        z = np.empty(SAMPLES_PER_CYCLE, dtype=np.float32)
        sigma = np.float32(params.sigma_noise)
        for i, c in enumerate(range(start, stop)):
            gen = np.random.Generator(np.random.Philox(key=seed, counter=[0, c, _NOISE_STREAM, 0]))
            gen.standard_normal(dtype=np.float32, out=z)
            z *= sigma
            out[i] += z
    return out


def synthesize_trace(
    log: ActivityLog,
    params: PowerParams,
    spec: LaserSpec = LASER_OFF,
    plan: Floorplan = DEFAULT_FLOORPLAN,
    seed: int = 0,
    meta: dict | None = None,
    drift_seed: int | None = None,
) -> Trace:
    if log.clock_hz != CLOCK_HZ:
        raise ValueError(f"activity log clock {log.clock_hz} Hz, synthesis expects {CLOCK_HZ} Hz")
    samples = synthesize_cycles(log, params, spec, plan, seed, drift_seed=drift_seed).reshape(-1)
    info = {"seed": seed, "laser": asdict(spec)}
    if drift_seed is not None:
        info["drift_seed"] = drift_seed
    info.update(meta or {})
    return Trace(samples, SAMPLE_RATE, CLOCK_HZ, info)


def dc_offset(t: Trace, reference: Trace) -> float:
    if len(t.samples) != len(reference.samples):
        raise ValueError(f"trace lengths differ: {len(t.samples)} vs {len(reference.samples)}")
    return float(np.mean(t.samples, dtype=np.float64) - np.mean(reference.samples, dtype=np.float64))

"""Single-trace horizontal attack on a regular ladder.

The trace is cut into clock cycles and each cycle is compressed to one
number, giving an (n_bits x 54) matrix.  For every slot (column) the bits
are guessed by comparing each entry to the column mean, which yields one
key candidate per slot.  Candidates are scored against the true scalar as
the percentage of matching bits.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .accel import CYCLES_PER_BIT
from .curve import Scalar
from .leakage import SAMPLES_PER_CYCLE, Trace

__all__ = [
    "CompressedMatrix",
    "KeyCandidate",
    "AttackReport",
    "compress",
    "static_compress",
    "comparison_to_mean",
    "score",
    "scored_pair",
    "best_candidate",
    "run_attack",
]

_CHUNK_CYCLES = 4096


@dataclass(frozen=True)
class CompressedMatrix:
    values: np.ndarray  # (n_bits, cycles_per_bit)
    method: str = "sum_of_squares"

    def __post_init__(self):
        if self.values.ndim != 2:
            raise ValueError("compressed matrix must be 2-D")

    @property
    def n_bits(self) -> int:
        return self.values.shape[0]

    @property
    def n_slots(self) -> int:
        return self.values.shape[1]


def _cycles(t: Trace | np.ndarray, samples_per_cycle: int, cycles_per_bit: int,
            offset_cycles: int) -> np.ndarray:
    x = t.samples if isinstance(t, Trace) else np.asarray(t)
    x = x[offset_cycles * samples_per_cycle:]
    window = samples_per_cycle * cycles_per_bit
    if len(x) == 0 or len(x) % window:
        raise ValueError(
            f"trace length {len(x)} (after skipping {offset_cycles} cycles) is not a "
            f"multiple of {samples_per_cycle} x {cycles_per_bit} = {window} samples"
        )
    return x.reshape(-1, samples_per_cycle)


def compress(
    t: Trace | np.ndarray,
    samples_per_cycle: int = SAMPLES_PER_CYCLE,
    cycles_per_bit: int = CYCLES_PER_BIT,
    offset_cycles: int = 0,
) -> CompressedMatrix:
    """Sum of squared samples per clock cycle.

    ``offset_cycles`` drops that many leading cycles, for traces whose
    trigger is not at cycle 0.
    """
    cyc = _cycles(t, samples_per_cycle, cycles_per_bit, offset_cycles)
    out = np.empty(len(cyc))
    for i in range(0, len(cyc), _CHUNK_CYCLES):
        block = cyc[i:i + _CHUNK_CYCLES].astype(np.float64)
        out[i:i + _CHUNK_CYCLES] = np.einsum("ij,ij->i", block, block)
    return CompressedMatrix(out.reshape(-1, cycles_per_bit))


def static_compress(
    t: Trace | np.ndarray,
    q: int = 100,
    samples_per_cycle: int = SAMPLES_PER_CYCLE,
    cycles_per_bit: int = CYCLES_PER_BIT,
    offset_cycles: int = 0,
) -> CompressedMatrix:
    """Mean of the last ``q`` samples of each cycle, where switching has died out."""
    if not 1 <= q <= samples_per_cycle:
        raise ValueError(f"quiescent window q={q} must lie in [1, {samples_per_cycle}]")
    cyc = _cycles(t, samples_per_cycle, cycles_per_bit, offset_cycles)
    tail = cyc[:, samples_per_cycle - q:].astype(np.float64)
    return CompressedMatrix(tail.mean(axis=1).reshape(-1, cycles_per_bit), method=f"static_q{q}")


@dataclass(frozen=True)
class KeyCandidate:
    slot: int
    bits: tuple[int, ...]
    inverted: bool = False
    correctness_pct: float | None = None

    @property
    def n_bits(self) -> int:
        return len(self.bits)

    def twin(self) -> "KeyCandidate":
        """The bitwise complement, scored 100 - delta when this one is scored."""
        pct = None if self.correctness_pct is None else 100.0 - self.correctness_pct
        return KeyCandidate(self.slot, tuple(1 - b for b in self.bits), not self.inverted, pct)

    def to_scalar(self) -> Scalar:
        """The full scalar implied by this candidate (leading 1 restored)."""
        v = 1
        for b in self.bits:
            v = (v << 1) | b
        return Scalar(v, len(self.bits) + 1)


def comparison_to_mean(m: CompressedMatrix) -> list[KeyCandidate]:
    """One candidate per slot: bit j is 1 where M[j, s] >= mean of column s."""
    means = m.values.mean(axis=0)
    bits = m.values >= means
    return [KeyCandidate(s, tuple(int(b) for b in bits[:, s])) for s in range(m.n_slots)]


def score(c: KeyCandidate, k_true: Scalar) -> float:
    truth = k_true.processed_bits
    if len(truth) != c.n_bits:
        raise ValueError(f"candidate has {c.n_bits} bits, scalar processes {len(truth)}")
    matches = sum(a == b for a, b in zip(c.bits, truth))
    return 100.0 * matches / c.n_bits


def scored_pair(c: KeyCandidate, k_true: Scalar) -> tuple[KeyCandidate, KeyCandidate]:
    """(candidate, inverted twin), both carrying their correctness."""
    raw = KeyCandidate(c.slot, c.bits, c.inverted, score(c, k_true))
    return raw, raw.twin()


@dataclass
class AttackReport:
    candidates: list[KeyCandidate]
    method: str
    allow_inversion: bool = True
    meta: dict = field(default_factory=dict)

    @property
    def scored(self) -> bool:
        return all(c.correctness_pct is not None for c in self.candidates)

    def raw(self) -> list[KeyCandidate]:
        return [c for c in self.candidates if not c.inverted]

    def slot_deltas(self) -> list[tuple[int, float, float]]:
        """(slot, delta_raw, delta_inverted) per slot."""
        return [(c.slot, c.correctness_pct, 100.0 - c.correctness_pct) for c in self.raw()]

    @property
    def best(self) -> KeyCandidate:
        return best_candidate(self, self.allow_inversion)

    def to_dict(self) -> dict:
        d = {
            "method": self.method,
            "allow_inversion": self.allow_inversion,
            "n_bits": self.candidates[0].n_bits,
            "n_slots": len(self.raw()),
            "meta": self.meta,
        }
        if self.scored:
            best = self.best
            d.update(
                best_slot=best.slot,
                best_delta=round(best.correctness_pct, 6),
                best_delta_rounded=round(best.correctness_pct),
                inverted=best.inverted,
                best_key_hex=best.to_scalar().to_hex(),
                slot_delta=[round(c.correctness_pct, 6) for c in self.raw()],
            )
        else:
            d["candidates_hex"] = [c.to_scalar().to_hex() for c in self.raw()]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "delta_raw", "delta_inverted"])
        for slot, raw, inv in self.slot_deltas():
            w.writerow([slot, f"{raw:.6f}", f"{inv:.6f}"])
        return buf.getvalue()


def best_candidate(report: AttackReport, allow_inversion: bool = True) -> KeyCandidate:
    """Highest-scoring candidate; ties go to the lower slot, raw before inverted."""
    pool = [c for c in report.candidates if allow_inversion or not c.inverted]
    if not pool:
        raise ValueError("report holds no candidates")
    if any(c.correctness_pct is None for c in pool):
        raise ValueError("candidates are unscored; a true scalar is needed")
    return max(pool, key=lambda c: (c.correctness_pct, -c.slot, not c.inverted))


def run_attack(
    t: Trace,
    k_true: Scalar | None = None,
    static_only: bool = False,
    allow_inversion: bool = True,
    q: int = 100,
    offset_cycles: int = 0,
) -> AttackReport:
    if static_only:
        m = static_compress(t, q=q, samples_per_cycle=t.samples_per_cycle, offset_cycles=offset_cycles)
    else:
        m = compress(t, samples_per_cycle=t.samples_per_cycle, offset_cycles=offset_cycles)
    cands = comparison_to_mean(m)
    if k_true is not None:
        cands = [x for c in cands for x in scored_pair(c, k_true)]
    meta = {k: t.meta[k] for k in sorted(t.meta) if k in ("scenario", "seed", "laser")}
    return AttackReport(cands, m.method, allow_inversion, meta)

"""Cycle-level model of the kP accelerator.

One ladder step is a fixed 54-cycle microprogram over five hardware
blocks.  Six field multiplications run on a digit-serial multiplier
(32-bit digits, 8 cycles each); squarings and additions run on the
adder/squarer unit, partly in parallel with the multiplier; six cycles
have the multiplier idle.  The key bit never changes which operation runs
in a slot, only which register addresses are read or written and the
swap select raised in slot 0.

Slot map (one key bit):

    0        swap select (multiplexer only)
    1-8      T1 <- XD*ZA          2: T3 <- XD^2     3: T4 <- ZD^2
    9-16     T2 <- XA*ZD
    17       ZA <- T1+T2
    18       ZA <- ZA^2
    19-26    T1 <- T1*T2
    27-34    T2 <- xP*ZA
    35       XA <- T1+T2
    36-43    ZD <- T3*T4          37: T3 <- T3^2    38: T4 <- T4^2
    44-51    T2 <- b*T4
    52       XD <- T3+T2
    53       controller bookkeeping (bit counter advances)

XD/ZD is the accumulator being doubled and XA/ZA the one receiving the
sum; for bit 0 they are (X1, Z1) and (X2, Z2), for bit 1 the other way
round.  This table is a reconstruction with the properties the attack
relies on (54 cycles, a bit-independent op sequence, key-dependent
addressing), not the real chip's microcode.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curve import (
    B233_CURVE,
    AffinePoint,
    CurveParams,
    DegenerateInputError,
    INFINITY,
    LDPair,
    Scalar,
    ladder_init,
    ladder_recover,
)

__all__ = [
    "Block",
    "BLOCKS",
    "DEFAULT_GATE_COUNTS",
    "OpKind",
    "MicroOp",
    "BitSchedule",
    "ActivityLog",
    "CYCLES_PER_BIT",
    "CLOCK_HZ",
    "DIGIT_BITS",
    "REGISTER_ADDRESSES",
    "ADDR_FIELDS",
    "build_schedule",
    "simulate_kp",
    "block_state_trace",
]

CYCLES_PER_BIT = 54
CLOCK_HZ = 4e6
DIGIT_BITS = 32
MUL_CYCLES = 8


class Block(str, enum.Enum):
    FIELD_MULTIPLIER = "FieldMultiplier"
    FIELD_ADDER = "FieldAdder"
    REGISTERS = "Registers"
    CONTROLLER = "Controller"
    MULTIPLEXER = "Multiplexer"


BLOCKS = tuple(Block)
_BLOCK_INDEX = {b: i for i, b in enumerate(BLOCKS)}

DEFAULT_GATE_COUNTS = {
    Block.FIELD_MULTIPLIER: 10,
    Block.FIELD_ADDER: 1,
    Block.REGISTERS: 6,
    Block.CONTROLLER: 2,
    Block.MULTIPLEXER: 1,
}


class OpKind(str, enum.Enum):
    MUL_STEP = "MUL_STEP"
    ADD = "ADD"
    SQR = "SQR"
    LOAD = "LOAD"
    STORE = "STORE"
    MUX_SELECT = "MUX_SELECT"
    NOP = "NOP"


# 4-bit register addresses; 0 means "port idle".  The ladder accumulators
# were placed so that swapping them changes address weights as well.
REGISTER_ADDRESSES = {
    "X1": 0b0001,
    "Z1": 0b0010,
    "X2": 0b0111,
    "Z2": 0b1011,
    "XP": 0b0011,
    "B": 0b0101,
    "T1": 0b0100,
    "T2": 0b1000,
    "T3": 0b1100,
    "T4": 0b1110,
}
_ADDR_NAMES = {v: k for k, v in REGISTER_ADDRESSES.items()}

# Ports of the address/select vector, (name, bit offset, width).
ADDR_FIELDS = (
    ("mul_src_a", 0, 4),
    ("mul_src_b", 4, 4),
    ("alu_src_a", 8, 4),
    ("alu_src_b", 12, 4),
    ("mul_dst", 16, 4),
    ("alu_dst", 20, 4),
    ("swap", 24, 1),
)
ADDR_WIDTH = 25

# store sources, carried in MicroOp.select for STORE ops
FROM_MULTIPLIER = 0
FROM_ADDER = 1


@dataclass(frozen=True)
class MicroOp:
    slot: int
    block: Block
    kind: OpKind
    src_addr: tuple[int, ...] = ()
    dst_addr: int | None = None
    select: int = 0

    def __str__(self) -> str:
        src = ",".join(_ADDR_NAMES.get(a, str(a)) for a in self.src_addr)
        dst = _ADDR_NAMES.get(self.dst_addr, "") if self.dst_addr is not None else ""
        return f"{self.slot:2d} {self.block.value:<15} {self.kind.value:<10} src=({src}) dst={dst} sel={self.select}"


def _resolve(name: str, bit: int) -> int:
    roles = {
        0: {"XD": "X1", "ZD": "Z1", "XA": "X2", "ZA": "Z2"},
        1: {"XD": "X2", "ZD": "Z2", "XA": "X1", "ZA": "Z1"},
    }[bit]
    return REGISTER_ADDRESSES[roles.get(name, name)]


# (first slot, sources, destination) for each multiplication
_MULS = (
    (1, ("XD", "ZA"), "T1"),
    (9, ("XA", "ZD"), "T2"),
    (19, ("T1", "T2"), "T1"),
    (27, ("XP", "ZA"), "T2"),
    (36, ("T3", "T4"), "ZD"),
    (44, ("B", "T4"), "T2"),
)
# slot -> (kind, sources, destination) for the adder/squarer
_ALU = {
    2: (OpKind.SQR, ("XD",), "T3"),
    3: (OpKind.SQR, ("ZD",), "T4"),
    17: (OpKind.ADD, ("T1", "T2"), "ZA"),
    18: (OpKind.SQR, ("ZA",), "ZA"),
    35: (OpKind.ADD, ("T1", "T2"), "XA"),
    37: (OpKind.SQR, ("T3",), "T3"),
    38: (OpKind.SQR, ("T4",), "T4"),
    52: (OpKind.ADD, ("T3", "T2"), "XD"),
}


def _slot_ops(slot: int, bit: int) -> tuple[MicroOp, ...]:
    ops: list[MicroOp] = []
    r = lambda name: _resolve(name, bit)  # noqa: E731
    if slot == 0:
        ops.append(MicroOp(0, Block.MULTIPLEXER, OpKind.MUX_SELECT, select=bit))
    for start, (a, b), dst in _MULS:
        if start <= slot < start + MUL_CYCLES:
            if slot == start:
                ops.append(MicroOp(slot, Block.REGISTERS, OpKind.LOAD, (r(a), r(b))))
            ops.append(MicroOp(slot, Block.FIELD_MULTIPLIER, OpKind.MUL_STEP))
            if slot == start + MUL_CYCLES - 1:
                ops.append(MicroOp(slot, Block.REGISTERS, OpKind.STORE, dst_addr=r(dst),
                                   select=FROM_MULTIPLIER))
    if slot in _ALU:
        kind, srcs, dst = _ALU[slot]
        ops.append(MicroOp(slot, Block.FIELD_ADDER, kind, tuple(r(s) for s in srcs)))
        ops.append(MicroOp(slot, Block.REGISTERS, OpKind.STORE, dst_addr=r(dst), select=FROM_ADDER))
    if not ops:
        ops.append(MicroOp(slot, Block.CONTROLLER, OpKind.NOP))
    return tuple(ops)


def _addr_vector(ops: tuple[MicroOp, ...]) -> int:
    v = 0
    for op in ops:
        if op.kind is OpKind.LOAD:
            v |= op.src_addr[0] | (op.src_addr[1] << 4)
        elif op.kind in (OpKind.ADD, OpKind.SQR):
            v |= op.src_addr[0] << 8
            if len(op.src_addr) > 1:
                v |= op.src_addr[1] << 12
        elif op.kind is OpKind.STORE:
            v |= op.dst_addr << (16 if op.select == FROM_MULTIPLIER else 20)
        elif op.kind is OpKind.MUX_SELECT:
            v |= op.select << 24
    return v


@dataclass(frozen=True)
class BitSchedule:
    """The 54-slot microprogram, resolved for both key-bit values."""

    slots0: tuple[tuple[MicroOp, ...], ...]
    slots1: tuple[tuple[MicroOp, ...], ...]

    def __len__(self) -> int:
        return len(self.slots0)

    def slots(self, bit: int) -> tuple[tuple[MicroOp, ...], ...]:
        return self.slots1 if bit else self.slots0

    def kind_sequence(self, bit: int) -> tuple[tuple[tuple[Block, OpKind], ...], ...]:
        return tuple(tuple((op.block, op.kind) for op in group) for group in self.slots(bit))

    def addr_vector(self, bit: int, slot: int) -> int:
        return _addr_vector(self.slots(bit)[slot])

    def key_dependent_slots(self) -> list[int]:
        return [s for s in range(len(self)) if self.addr_vector(0, s) != self.addr_vector(1, s)]

    def describe(self) -> str:
        lines = []
        for s in range(len(self)):
            for bit in (0, 1):
                lines.extend(f"b{bit} {op}" for op in self.slots(bit)[s])
        return "\n".join(lines)


def build_schedule() -> BitSchedule:
    return BitSchedule(
        tuple(_slot_ops(s, 0) for s in range(CYCLES_PER_BIT)),
        tuple(_slot_ops(s, 1) for s in range(CYCLES_PER_BIT)),
    )


@dataclass(frozen=True)
class ActivityLog:
    """Per-cycle, per-block switching and storage statistics.

    ``toggles[c, b]`` counts bit flips of block ``b``'s state in cycle ``c``;
    ``stored_weight[c, b]`` counts the 1-bits it holds during the cycle.
    ``addr_bits[c]`` is the packed address/select vector (see ADDR_FIELDS).
    Column order of the matrices follows ``BLOCKS``.
    """

    toggles: np.ndarray
    stored_weight: np.ndarray
    addr_bits: np.ndarray
    cycles_per_bit: int = CYCLES_PER_BIT
    clock_hz: float = CLOCK_HZ
    blocks: tuple[Block, ...] = field(default=BLOCKS)

    def __post_init__(self):
        for arr in (self.toggles, self.stored_weight, self.addr_bits):
            arr.setflags(write=False)
        n = self.toggles.shape[0]
        if self.stored_weight.shape != self.toggles.shape or self.addr_bits.shape != (n,):
            raise ValueError("inconsistent ActivityLog array shapes")
        if n % self.cycles_per_bit:
            raise ValueError(f"{n} cycles is not a whole number of {self.cycles_per_bit}-cycle bits")

    @property
    def n_cycles(self) -> int:
        return self.toggles.shape[0]

    @property
    def n_bits(self) -> int:
        return self.n_cycles // self.cycles_per_bit

    @property
    def duration_s(self) -> float:
        return self.n_cycles / self.clock_hz

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cycle", "block", "toggles", "stored_weight"])
            for c in range(self.n_cycles):
                for i, b in enumerate(self.blocks):
                    w.writerow([c, b.value, int(self.toggles[c, i]), int(self.stored_weight[c, i])])


def block_state_trace(log: ActivityLog, b: Block | str) -> tuple[np.ndarray, np.ndarray]:
    """(toggles, stored_weight) series of one block."""
    try:
        i = log.blocks.index(Block(b))
    except ValueError:
        raise ValueError(f"unknown block {b!r}; expected one of {[x.value for x in BLOCKS]}") from None
    return log.toggles[:, i], log.stored_weight[:, i]


def _compile(schedule: BitSchedule, bit: int):
    # flatten each slot to (load, alu, mul_step, stores, addr) for the inner loop
    prog = []
    for s, ops in enumerate(schedule.slots(bit)):
        load = alu = None
        mul_step = False
        stores = []
        for op in ops:
            if op.kind is OpKind.LOAD:
                load = op.src_addr
            elif op.kind in (OpKind.ADD, OpKind.SQR):
                alu = (op.kind is OpKind.SQR, op.src_addr)
            elif op.kind is OpKind.MUL_STEP:
                mul_step = True
            elif op.kind is OpKind.STORE:
                stores.append((op.dst_addr, op.select))
        prog.append((load, alu, mul_step, tuple(stores), _addr_vector(ops)))
    return prog


def simulate_kp(
    k: int | Scalar,
    p: AffinePoint,
    sched: BitSchedule | None = None,
    params: CurveParams = B233_CURVE,
) -> tuple[AffinePoint, ActivityLog]:
    """Run kP on the accelerator model.

    Returns the affine result (via the same y-recovery as ``ladder_kp``) and
    the activity log covering (bit_length(k) - 1) * 54 cycles.
    """
    sched = sched or build_schedule()
    k = int(k)
    if k < 1:
        raise ValueError("accelerator model needs k >= 1")
    if p.at_infinity:
        raise ValueError("accelerator model needs a finite base point")
    if p.x == 0:
        raise DegenerateInputError("x-only ladder needs x_P != 0")

    f = params.field
    mul, sqr, reduce = f.mul, f.sqr, f.reduce
    digit_mask = (1 << DIGIT_BITS) - 1
    programs = (_compile(sched, 0), _compile(sched, 1))
    n_slots = len(sched)
    n_bits = k.bit_length() - 1
    n_cycles = n_bits * n_slots

    init = ladder_init(p.x, params)
    regs = dict.fromkeys(REGISTER_ADDRESSES.values(), 0)
    regs[REGISTER_ADDRESSES["X1"]] = init.X1
    regs[REGISTER_ADDRESSES["Z1"]] = init.Z1
    regs[REGISTER_ADDRESSES["X2"]] = init.X2
    regs[REGISTER_ADDRESSES["Z2"]] = init.Z2
    regs[REGISTER_ADDRESSES["XP"]] = p.x
    regs[REGISTER_ADDRESSES["B"]] = params.b
    reg_weight = sum(v.bit_count() for v in regs.values())

    op_a = op_b = acc = 0
    digit = 0
    alu_out = 0
    ctrl = n_slots - 1  # as if a previous bit had just finished
    addr_prev = 0

    toggles = np.zeros((n_cycles, len(BLOCKS)), dtype=np.int32)
    stored = np.zeros((n_cycles, len(BLOCKS)), dtype=np.int32)
    addr_bits = np.zeros(n_cycles, dtype=np.int64)
    iM, iA, iR, iC, iX = (_BLOCK_INDEX[b] for b in BLOCKS)

    c = 0
    for j in range(n_bits):
        bit = (k >> (n_bits - 1 - j)) & 1
        for s, (load, alu, mul_step, stores, addr) in enumerate(programs[bit]):
            t_mul = 0
            if load is not None:
                new_a, new_b = regs[load[0]], regs[load[1]]
                t_mul += (new_a ^ op_a).bit_count() + (new_b ^ op_b).bit_count()
                op_a, op_b = new_a, new_b
                t_mul += acc.bit_count()
                acc = 0
                digit = MUL_CYCLES - 1
            if mul_step:
                d = (op_b >> (DIGIT_BITS * digit)) & digit_mask
                new_acc = reduce(acc << DIGIT_BITS) ^ mul(op_a, d)
                t_mul += (new_acc ^ acc).bit_count()
                acc = new_acc
                digit -= 1
            t_alu = 0
            if alu is not None:
                is_sqr, src = alu
                out = sqr(regs[src[0]]) if is_sqr else regs[src[0]] ^ regs[src[1]]
                t_alu = (out ^ alu_out).bit_count()
                alu_out = out
            t_reg = 0
            for dst, source in stores:
                new = acc if source == FROM_MULTIPLIER else alu_out
                old = regs[dst]
                t_reg += (old ^ new).bit_count()
                reg_weight += new.bit_count() - old.bit_count()
                regs[dst] = new
            # slot counter in bits 0-5, bit counter above; the bit counter
            # advances in the last slot so slot 0 sees a constant transition
            new_ctrl = s | ((j + (s == n_slots - 1)) << 6)
            toggles[c, iM] = t_mul
            toggles[c, iA] = t_alu
            toggles[c, iR] = t_reg
            toggles[c, iC] = (new_ctrl ^ ctrl).bit_count()
            toggles[c, iX] = (addr ^ addr_prev).bit_count()
            stored[c, iM] = op_a.bit_count() + op_b.bit_count() + acc.bit_count()
            stored[c, iA] = alu_out.bit_count()
            stored[c, iR] = reg_weight
            stored[c, iC] = new_ctrl.bit_count()
            stored[c, iX] = addr.bit_count()
            addr_bits[c] = addr
            ctrl = new_ctrl
            addr_prev = addr
            c += 1

    pair = LDPair(
        regs[REGISTER_ADDRESSES["X1"]],
        regs[REGISTER_ADDRESSES["Z1"]],
        regs[REGISTER_ADDRESSES["X2"]],
        regs[REGISTER_ADDRESSES["Z2"]],
    )
    if n_bits == 0:
        return p, ActivityLog(toggles, stored, addr_bits)
    return ladder_recover(pair, p, params), ActivityLog(toggles, stored, addr_bits)

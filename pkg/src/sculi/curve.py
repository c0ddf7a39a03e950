"""Point arithmetic on binary curves y^2 + xy = x^3 + a x^2 + b.

Two independent routes to kP are provided:

* ``ladder_kp``: x-only Montgomery ladder in López–Dahab projective
  coordinates, one ``ladder_step`` per scalar bit after the leading one,
  followed by y-recovery.
* ``double_and_add_kp``: textbook left-to-right affine double-and-add.

They share nothing beyond the field arithmetic, so one can serve as the
oracle for the other.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Callable, NamedTuple

from .field import B233, GF16, BinaryField, FieldElement

__all__ = [
    "DegenerateInputError",
    "AffinePoint",
    "INFINITY",
    "CurveParams",
    "LDPair",
    "Scalar",
    "B233_CURVE",
    "TINY_CURVE",
    "is_on_curve",
    "point_neg",
    "point_add",
    "point_double",
    "double_and_add_kp",
    "ladder_init",
    "ladder_step",
    "ladder_recover",
    "ladder_kp",
    "point_to_hex",
    "point_from_hex",
]


class DegenerateInputError(ValueError):
    """Raised when the projective ladder meets Z = 0 or x_P = 0."""


@dataclass(frozen=True)
class AffinePoint:
    x: FieldElement = 0
    y: FieldElement = 0
    at_infinity: bool = False

    def __iter__(self):
        return iter((self.x, self.y))


INFINITY = AffinePoint(0, 0, True)


@dataclass(frozen=True)
class CurveParams:
    name: str
    field: BinaryField
    a: FieldElement
    b: FieldElement
    base_point: AffinePoint
    order: int
    cofactor: int = 1


class LDPair(NamedTuple):
    """The two ladder accumulators; affine x of each point is X/Z."""

    X1: FieldElement
    Z1: FieldElement
    X2: FieldElement
    Z2: FieldElement


@dataclass(frozen=True)
class Scalar:
    """A scalar with an explicit bit length.

    ``bits`` is MSB first over ``length`` bits.  The ladder consumes the
    bits after the leading one, so ``processed_length == length - 1``.
    """

    value: int
    length: int = 0

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("scalar must be non-negative")
        if self.length == 0:
            object.__setattr__(self, "length", max(self.value.bit_length(), 1))
        if self.value.bit_length() > self.length:
            raise ValueError(
                f"scalar needs {self.value.bit_length()} bits, length is {self.length}"
            )

    def __int__(self) -> int:
        return self.value

    @property
    def bits(self) -> tuple[int, ...]:
        v, n = self.value, self.length
        return tuple((v >> (n - 1 - i)) & 1 for i in range(n))

    @property
    def processed_length(self) -> int:
        return self.length - 1

    @property
    def processed_bits(self) -> tuple[int, ...]:
        return self.bits[1:]

    @property
    def has_leading_one(self) -> bool:
        return self.value >> (self.length - 1) == 1

    def to_hex(self) -> str:
        return format(self.value, f"0{(self.length + 3) // 4}x")

    @classmethod
    def from_hex(cls, text: str, length: int = 0) -> "Scalar":
        text = text.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        return cls(int(text, 16), length)

    @classmethod
    def random(cls, rng: random.Random, length: int = 233) -> "Scalar":
        """Uniform scalar of exactly ``length`` bits (leading bit set)."""
        return cls(rng.getrandbits(length - 1) | (1 << (length - 1)), length)


def _as_int(k: int | Scalar) -> int:
    k = int(k)
    if k < 0:
        raise ValueError("negative scalars are not supported")
    return k


# -- NIST B-233 (FIPS 186-4, D.1.3.2.3) --------------------------------------

B233_CURVE = CurveParams(
    name="B-233",
    field=B233,
    a=1,
    b=0x066647EDE6C332C7F8C0923BB58213B333B20E9CE4281FE115F7D8F90AD,
    base_point=AffinePoint(
        0x0FAC9DFCBAC8313BB2139F1BB755FEF65BC391F8B36F8F8EB7371FD558B,
        0x1006A08A41903350678E58528BEBF8A0BEFF867A7CA36716F7E01F81052,
    ),
    order=0x1000000000000000000000000000013E974E72F8A6922031D2603CFE0D7,
    cofactor=2,
)

# 20-point curve over GF(2^4), f = x^4 + x + 1; the base point generates it.
TINY_CURVE = CurveParams(
    name="tiny-gf16",
    field=GF16,
    a=1,
    b=8,
    base_point=AffinePoint(14, 12),
    order=20,
    cofactor=1,
)


# -- affine group law ---------------------------------------------------------

def is_on_curve(p: AffinePoint, params: CurveParams) -> bool:
    if p.at_infinity:
        return True
    f = params.field
    x, y = p.x, p.y
    if not (f.is_element(x) and f.is_element(y)):
        return False
    x2 = f.sqr(x)
    lhs = f.sqr(y) ^ f.mul(x, y)
    rhs = f.mul(x2, x) ^ f.mul(params.a, x2) ^ params.b
    return lhs == rhs


def point_neg(p: AffinePoint, params: CurveParams) -> AffinePoint:
    if p.at_infinity:
        return p
    return AffinePoint(p.x, p.x ^ p.y)


def point_double(p: AffinePoint, params: CurveParams) -> AffinePoint:
    if p.at_infinity or p.x == 0:
        return INFINITY
    f = params.field
    lam = p.x ^ f.mul(p.y, f.inv(p.x))
    x3 = f.sqr(lam) ^ lam ^ params.a
    y3 = f.sqr(p.x) ^ f.mul(lam ^ 1, x3)
    return AffinePoint(x3, y3)


def point_add(p: AffinePoint, q: AffinePoint, params: CurveParams) -> AffinePoint:
    if p.at_infinity:
        return q
    if q.at_infinity:
        return p
    if p.x == q.x:
        if p.y == q.y:
            return point_double(p, params)
        return INFINITY
    f = params.field
    lam = f.mul(p.y ^ q.y, f.inv(p.x ^ q.x))
    x3 = f.sqr(lam) ^ lam ^ p.x ^ q.x ^ params.a
    y3 = f.mul(lam, p.x ^ x3) ^ x3 ^ p.y
    return AffinePoint(x3, y3)


def double_and_add_kp(k: int | Scalar, p: AffinePoint, params: CurveParams) -> AffinePoint:
    """Left-to-right affine double-and-add."""
    k = _as_int(k)
    result = INFINITY
    for i in range(k.bit_length() - 1, -1, -1):
        result = point_double(result, params)
        if (k >> i) & 1:
            result = point_add(result, p, params)
    return result


# -- López–Dahab x-only Montgomery ladder --------------------------------------

def ladder_init(x_p: FieldElement, params: CurveParams) -> LDPair:
    """Accumulators for (P, 2P)."""
    f = params.field
    x2 = f.sqr(x_p)
    return LDPair(x_p, 1, f.sqr(x2) ^ params.b, x2)


def ladder_step(
    pair: LDPair,
    bit: int,
    x_p: FieldElement,
    params: CurveParams = B233_CURVE,
    ops: list[str] | None = None,
) -> LDPair:
    """One ladder step: Madd into one accumulator, Mdouble of the other.

    ``bit`` only selects which accumulator is doubled; the field operations
    run in the same order either way.  When ``ops`` is given, the kind of
    each field operation ("mul", "sqr", "add") is appended to it.
    """
    f = params.field
    mul, sqr = f.mul, f.sqr
    X1, Z1, X2, Z2 = pair
    if bit:
        xd, zd, xa, za = X2, Z2, X1, Z1
    else:
        xd, zd, xa, za = X1, Z1, X2, Z2

    # Madd: (xa, za) <- (xd, zd) + (xa, za), difference is P
    t1 = mul(xd, za)
    t2 = mul(xa, zd)
    za = sqr(t1 ^ t2)
    t1 = mul(t1, t2)
    xa = mul(x_p, za) ^ t1
    # Mdouble: (xd, zd) <- 2 (xd, zd)
    t1 = sqr(xd)
    t2 = sqr(zd)
    zd = mul(t1, t2)
    t2 = sqr(t2)
    xd = sqr(t1) ^ mul(params.b, t2)

    if ops is not None:
        ops.extend(("mul", "mul", "add", "sqr", "mul", "mul", "add",
                    "sqr", "sqr", "mul", "sqr", "sqr", "mul", "add"))
    if bit:
        return LDPair(xa, za, xd, zd)
    return LDPair(xd, zd, xa, za)


def ladder_recover(pair: LDPair, p: AffinePoint, params: CurveParams) -> AffinePoint:
    """Affine kP from the final accumulators (kP, (k+1)P) and P."""
    f = params.field
    mul = f.mul
    X1, Z1, X2, Z2 = pair
    x, y = p.x, p.y
    if Z1 == 0:
        return INFINITY
    if Z2 == 0:
        return point_neg(p, params)
    z1z2 = mul(Z1, Z2)
    x1 = mul(X1, f.inv(Z1))
    num = mul(X1 ^ mul(x, Z1), X2 ^ mul(x, Z2)) ^ mul(f.sqr(x) ^ y, z1z2)
    y1 = mul(mul(x ^ x1, num), f.inv(mul(x, z1z2))) ^ y
    return AffinePoint(x1, y1)


def ladder_kp(
    k: int | Scalar,
    p: AffinePoint,
    params: CurveParams = B233_CURVE,
    on_step: Callable[[int, int, LDPair], None] | None = None,
) -> AffinePoint:
    """kP by the x-only Montgomery ladder.

    ``on_step(index, bit, pair)`` is called after every ladder step with the
    updated accumulators.
    """
    k = _as_int(k)
    if k == 0 or p.at_infinity:
        return INFINITY
    if p.x == 0:
        raise DegenerateInputError("x-only ladder needs x_P != 0")
    pair = ladder_init(p.x, params)
    n = k.bit_length()
    for index, i in enumerate(range(n - 2, -1, -1)):
        bit = (k >> i) & 1
        pair = ladder_step(pair, bit, p.x, params)
        if i and (pair.Z1 == 0 or pair.Z2 == 0):
            raise DegenerateInputError(f"Z = 0 after ladder step {index}")
        if on_step is not None:
            on_step(index, bit, pair)
    if n == 1:
        return p
    return ladder_recover(pair, p, params)


# -- serialization ----------------------------------------------------------------

def point_to_hex(p: AffinePoint, params: CurveParams = B233_CURVE) -> str:
    if p.at_infinity:
        return "INF"
    f = params.field
    return f"{f.to_hex(p.x)},{f.to_hex(p.y)}"


def point_from_hex(text: str, params: CurveParams = B233_CURVE) -> AffinePoint:
    text = text.strip()
    if text.upper() == "INF":
        return INFINITY
    try:
        xs, ys = text.split(",")
    except ValueError:
        raise ValueError(f"expected 'x,y' hex pair or INF, got {text!r}") from None
    f = params.field
    return AffinePoint(f.from_hex(xs), f.from_hex(ys))

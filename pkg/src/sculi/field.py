"""Binary field arithmetic GF(2^m) in polynomial basis.

Field elements are plain non-negative Python ints: bit ``i`` is the
coefficient of ``x^i``.  Every public operation returns a canonical value
(degree < m), so two equal field elements always compare equal as ints.

``B233`` is the field underlying NIST B-233, f(x) = x^233 + x^74 + 1.  The
module-level ``fe_*`` helpers are bound to it.
"""

from __future__ import annotations

import random

__all__ = [
    "FieldElement",
    "BinaryField",
    "B233",
    "GF16",
    "fe_add",
    "fe_mul",
    "fe_sqr",
    "fe_inv",
    "fe_from_hex",
    "fe_to_hex",
]

FieldElement = int


def _spread_bits(byte: int) -> int:
    # 8 input bits -> 16 output bits with a zero between each pair
    out = 0
    for k in range(8):
        out |= ((byte >> k) & 1) << (2 * k)
    return out


_SQR_TABLE = tuple(_spread_bits(i).to_bytes(2, "little") for i in range(256))


class BinaryField:
    """GF(2^m) with a fixed irreducible reduction polynomial.

    Parameters
    ----------
    degree:
        Extension degree ``m``.
    poly:
        Reduction polynomial as an int, including the ``x^m`` term.
    """

    def __init__(self, degree: int, poly: int):
        if degree < 1:
            raise ValueError("degree must be >= 1")
        if poly.bit_length() != degree + 1:
            raise ValueError(
                f"reduction polynomial has degree {poly.bit_length() - 1}, expected {degree}"
            )
        if not poly & 1:
            raise ValueError("reduction polynomial must have a constant term")
        self.degree = degree
        self.poly = poly
        self.mask = (1 << degree) - 1
        self.order = 1 << degree
        self.hex_digits = (degree + 3) // 4
        self._nbytes = (degree + 7) // 8
        # exponents of the non-leading terms of f, used for folding
        self._low_terms = tuple(i for i in range(degree) if (poly >> i) & 1)

    def __repr__(self) -> str:
        return f"BinaryField(degree={self.degree}, poly={self.poly:#x})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryField):
            return NotImplemented
        return self.degree == other.degree and self.poly == other.poly

    def __hash__(self) -> int:
        return hash((self.degree, self.poly))

    # -- core arithmetic -------------------------------------------------

    def reduce(self, r: int) -> FieldElement:
        """Reduce an arbitrary-degree polynomial modulo f."""
        m = self.degree
        mask = self.mask
        terms = self._low_terms
        while r >> m:
            hi = r >> m
            r &= mask
            for t in terms:
                r ^= hi << t
        return r

    def add(self, a: FieldElement, b: FieldElement) -> FieldElement:
        return a ^ b

    def mul(self, a: FieldElement, b: FieldElement) -> FieldElement:
        # 4-bit comb: 16 precomputed multiples of a, b consumed a byte (two nibbles) at a time
        a2 = a << 1
        a4 = a << 2
        a8 = a << 3
        a3 = a2 ^ a
        a5 = a4 ^ a
        a6 = a4 ^ a2
        a7 = a6 ^ a
        t = (0, a, a2, a3, a4, a5, a6, a7,
             a8, a8 ^ a, a8 ^ a2, a8 ^ a3, a8 ^ a4, a8 ^ a5, a8 ^ a6, a8 ^ a7)
        hi = [x << 4 for x in t]
        r = 0
        for byte in b.to_bytes((b.bit_length() + 7) >> 3, "big"):
            r = (r << 8) ^ hi[byte >> 4] ^ t[byte & 15]
        return self.reduce(r)

    def sqr(self, a: FieldElement) -> FieldElement:
        table = _SQR_TABLE
        spread = b"".join([table[x] for x in a.to_bytes(self._nbytes, "little")])
        return self.reduce(int.from_bytes(spread, "little"))

    def inv(self, a: FieldElement) -> FieldElement:
        """Multiplicative inverse by the binary extended Euclidean algorithm.

        Raises ZeroDivisionError for ``a == 0``.
        """
        if a >> self.degree:
            a = self.reduce(a)
        if a == 0:
            raise ZeroDivisionError(f"zero has no inverse in GF(2^{self.degree})")
        # invariants: g1 * a = u, g2 * a = v (mod f)
        u, v = a, self.poly
        g1, g2 = 1, 0
        du, dv = u.bit_length(), v.bit_length()
        while True:
            while du >= dv:
                j = du - dv
                u ^= v << j
                g1 ^= g2 << j
                du = u.bit_length()
            if du == 1:
                return self.reduce(g1)
            while dv >= du:
                j = dv - du
                v ^= u << j
                g2 ^= g1 << j
                dv = v.bit_length()
            if dv == 1:
                return self.reduce(g2)

    def div(self, a: FieldElement, b: FieldElement) -> FieldElement:
        return self.mul(a, self.inv(b))

    def pow(self, a: FieldElement, e: int) -> FieldElement:
        if e < 0:
            return self.pow(self.inv(a), -e)
        result = 1
        base = self.reduce(a)
        while e:
            if e & 1:
                result = self.mul(result, base)
            base = self.sqr(base)
            e >>= 1
        return result

    # -- helpers -----------------------------------------------------------

    def is_element(self, a: int) -> bool:
        return 0 <= a <= self.mask

    def element(self, a: int) -> FieldElement:
        if a < 0:
            raise ValueError("field elements are non-negative bit vectors")
        return self.reduce(a)

    def random_element(self, rng: random.Random | None = None) -> FieldElement:
        rng = rng or random
        return rng.getrandbits(self.degree)

    def to_hex(self, a: FieldElement) -> str:
        if not self.is_element(a):
            raise ValueError(f"{a:#x} is not a canonical element of GF(2^{self.degree})")
        return format(a, f"0{self.hex_digits}x")

    def from_hex(self, text: str) -> FieldElement:
        text = text.strip().lower()
        if text.startswith("0x"):
            text = text[2:]
        if not text:
            raise ValueError("empty hex string")
        value = int(text, 16)
        if not self.is_element(value):
            raise ValueError(
                f"hex value has {value.bit_length()} bits, field holds {self.degree}"
            )
        return value


B233 = BinaryField(233, (1 << 233) | (1 << 74) | 1)
GF16 = BinaryField(4, 0b10011)

fe_add = B233.add
fe_mul = B233.mul
fe_sqr = B233.sqr
fe_inv = B233.inv
fe_from_hex = B233.from_hex
fe_to_hex = B233.to_hex

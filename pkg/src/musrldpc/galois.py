"""Arithmetic over GF(2^p) using log/antilog tables."""

from dataclasses import dataclass, field

import numpy as np

# Conventional primitive polynomials (bitmask includes the x^p term).
DEFAULT_MODULI = {
    1: 0b11,
    2: 0b111,
    3: 0b1011,
    4: 0b10011,
    5: 0b100101,
    6: 0b1000011,
    7: 0b10001001,
    8: 0x11D,
    9: 0x211,
    10: 0x409,
    11: 0x805,
    12: 0x1053,
    13: 0x201B,
    14: 0x4443,
    15: 0x8003,
    16: 0x1100B,
}


class FieldError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FieldTable:
    """The field GF(2^p) defined by a primitive modulus.

    ``exp`` has length 2(q-1) so that ``exp[log a + log b]`` needs no
    reduction; ``log[0]`` is -1 and must never be used as an exponent.
    Elements are the integers 0..q-1 read as polynomial bit patterns.
    All operations accept scalars or integer numpy arrays.
    """

    p: int
    modulus: int
    exp: np.ndarray = field(repr=False)
    log: np.ndarray = field(repr=False)

    @property
    def q(self) -> int:
        return 1 << self.p

    def add(self, a, b):
        return np.bitwise_xor(a, b)

    def mul(self, a, b):
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        prod = self.exp[self.log[a] + self.log[b]]
        out = np.where((a == 0) | (b == 0), 0, prod)
        return out if out.ndim else int(out)

    def inv(self, a):
        a = np.asarray(a, dtype=np.int64)
        if np.any(a == 0):
            raise ZeroDivisionError("0 has no multiplicative inverse")
        out = self.exp[(self.q - 1 - self.log[a]) % (self.q - 1)]
        return out if out.ndim else int(out)

    def div(self, a, b):
        return self.mul(a, self.inv(b))

    def mul_table(self) -> np.ndarray:
        """Full q x q product table (fine for q <= 1024)."""
        g = np.arange(self.q)
        return self.mul(g[:, None], g[None, :])


def make_field(p: int, modulus: int | None = None) -> FieldTable:
    """Build GF(2^p); ``modulus`` defaults to a conventional primitive polynomial."""
    if not 1 <= p <= 16:
        raise FieldError(f"bit width p={p} outside supported range 1..16")
    if modulus is None:
        modulus = DEFAULT_MODULI[p]
    if modulus.bit_length() - 1 != p:
        raise FieldError(f"modulus {modulus:#x} does not have degree {p}")

    q = 1 << p
    exp = np.zeros(2 * (q - 1), dtype=np.int64)
    log = np.full(q, -1, dtype=np.int64)
    x = 1
    for i in range(q - 1):
        if x == 0 or (i > 0 and x == 1):
            raise FieldError(
                f"modulus {modulus:#x} is not primitive: x has multiplicative "
                f"order {i}, expected {q - 1}"
            )
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & q:
            x ^= modulus
    if x != 1 or (log[1:] < 0).any():
        raise FieldError(
            f"modulus {modulus:#x} is not primitive: powers of x do not cycle "
            f"through all {q - 1} nonzero elements"
        )
    exp[q - 1:] = exp[: q - 1]
    exp.setflags(write=False)
    log.setflags(write=False)
    return FieldTable(p=p, modulus=modulus, exp=exp, log=log)


def gf_add(field: FieldTable, a, b):
    return field.add(a, b)


def gf_mul(field: FieldTable, a, b):
    return field.mul(a, b)


def gf_inv(field: FieldTable, a):
    return field.inv(a)

"""Sparse-regression inner code.

A state vector is held as an (L, q) array: row l is section l. True messages
are one-hot per row, state estimates are pmfs per row. Flattened row-major it
is the length-qL vector multiplied by the sensing matrix.
"""

from __future__ import annotations

import numpy as np

DEFAULT_MEMORY_BUDGET = 2 * 1024**3


class MemoryBudgetError(MemoryError):
    pass


def index_symbol(v):
    """Symbol-to-index bijection; the identity on bit patterns (0 -> 0, 1 -> 1)."""
    return np.asarray(v, dtype=np.int64) if np.ndim(v) else int(v)


def inverse_index(i):
    return np.asarray(i, dtype=np.int64) if np.ndim(i) else int(i)


def to_sparse(v, q: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    s = np.zeros(v.shape + (q,))
    np.put_along_axis(s, index_symbol(v)[..., None], 1.0, axis=-1)
    return s


def uniform_sections(L: int, q: int) -> np.ndarray:
    return np.full((L, q), 1.0 / q)


def _seed_entropy(seed):
    return list(seed) if isinstance(seed, (tuple, list)) else seed


class SensingMatrix:
    """n x qL matrix with i.i.d. N(0, 1/n) entries, reproducible from ``seed``.

    Column block l (the q columns of section l) is drawn from its own child
    stream ``SeedSequence(seed, spawn_key=(l,))``. Dense mode materialises the
    blocks once; streamed mode regenerates them on every product, trading
    time for memory. Both modes see exactly the same entries.
    """

    def __init__(self, seed, n: int, L: int, q: int, mode: str = "dense",
                 memory_budget: int = DEFAULT_MEMORY_BUDGET):
        if n < 1:
            raise ValueError("n must be at least 1")
        if mode not in ("dense", "streamed"):
            raise ValueError(f"unknown storage mode {mode!r}")
        self.seed = seed
        self.n, self.L, self.q = int(n), int(L), int(q)
        self.mode = mode
        self._dense = None
        if mode == "dense":
            nbytes = self.n * self.L * self.q * 8
            if nbytes > memory_budget:
                raise MemoryBudgetError(
                    f"dense {self.n}x{self.L * self.q} matrix needs {nbytes / 2**30:.1f} GiB, "
                    f"over the {memory_budget / 2**30:.1f} GiB budget; use mode='streamed'"
                )
            self._dense = np.hstack([self.block(l) for l in range(self.L)])

    @property
    def shape(self):
        return (self.n, self.L * self.q)

    def block(self, section: int) -> np.ndarray:
        """The n x q columns of one section."""
        if self._dense is not None:
            return self._dense[:, section * self.q:(section + 1) * self.q]
        ss = np.random.SeedSequence(_seed_entropy(self.seed), spawn_key=(section,))
        rng = np.random.default_rng(ss)
        return rng.standard_normal((self.n, self.q)) / np.sqrt(self.n)

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        return np.hstack([self.block(l) for l in range(self.L)])

    def matvec(self, s) -> np.ndarray:
        """A @ s for s given as (L, q) sections or a flat length-qL vector."""
        s = np.asarray(s, dtype=float).reshape(self.L * self.q)
        if self._dense is not None:
            return self._dense @ s
        out = np.zeros(self.n)
        for l in range(self.L):
            sec = s[l * self.q:(l + 1) * self.q]
            if sec.any():
                out += self.block(l) @ sec
        return out

    def rmatvec(self, z) -> np.ndarray:
        """A.T @ z, returned as (L, q) sections."""
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n,):
            raise ValueError(f"expected a length-{self.n} vector, got shape {z.shape}")
        if self._dense is not None:
            return (self._dense.T @ z).reshape(self.L, self.q)
        return np.stack([self.block(l).T @ z for l in range(self.L)])


def sample_sensing_matrix(seed, n: int, L: int, q: int, mode: str = "dense",
                          memory_budget: int = DEFAULT_MEMORY_BUDGET) -> SensingMatrix:
    return SensingMatrix(seed, n, L, q, mode=mode, memory_budget=memory_budget)


def sr_encode(A: SensingMatrix, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.size != A.L * A.q:
        raise ValueError(f"state has {s.size} entries, matrix expects {A.L * A.q}")
    return A.matvec(s)


def hard_decision(beliefs) -> np.ndarray:
    """Most likely symbol per section; ties go to the lowest index."""
    return inverse_index(np.argmax(np.asarray(beliefs), axis=-1))


def symbols_to_bits(symbols, p: int) -> np.ndarray:
    """Little-endian p-bit expansion of each symbol, concatenated."""
    symbols = np.asarray(symbols, dtype=np.int64)
    bits = (symbols[..., None] >> np.arange(p)) & 1
    return bits.reshape(symbols.shape[:-1] + (-1,)).astype(np.uint8)


def bits_to_symbols(bits, p: int) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    b = bits.reshape(bits.shape[:-1] + (-1, p))
    return (b << np.arange(p)).sum(axis=-1)


def extract_info_bits(code, v_hat) -> np.ndarray:
    v_hat = np.asarray(v_hat, dtype=np.int64)
    return symbols_to_bits(v_hat[..., code.info_positions], code.field.p)

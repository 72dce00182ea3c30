"""AWGN multiple-access and cell-free channels, SNR calibration, rate bookkeeping."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    """Bipartite AP/user connectivity; ``ap_users[b]`` is K_b, ``user_aps[k]`` is B_k."""

    n_aps: int
    n_users: int
    ap_users: tuple[tuple[int, ...], ...]
    user_aps: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        if len(self.ap_users) != self.n_aps:
            raise TopologyError(f"{len(self.ap_users)} user sets given for {self.n_aps} APs")
        user_aps = [[] for _ in range(self.n_users)]
        for b, users in enumerate(self.ap_users):
            if not users:
                raise TopologyError(f"AP {b} serves no users")
            for k in users:
                if not 0 <= k < self.n_users:
                    raise TopologyError(f"AP {b} lists unknown user {k}")
                user_aps[k].append(b)
        orphans = [k for k, aps in enumerate(user_aps) if not aps]
        if orphans:
            raise TopologyError(f"users {orphans} are connected to no AP")
        object.__setattr__(self, "ap_users", tuple(tuple(sorted(set(u))) for u in self.ap_users))
        object.__setattr__(self, "user_aps", tuple(tuple(a) for a in user_aps))

    @classmethod
    def from_edges(cls, n_aps: int, n_users: int, edges):
        ap_users = [[] for _ in range(n_aps)]
        for b, k in edges:
            if not 0 <= b < n_aps:
                raise TopologyError(f"edge ({b}, {k}) names unknown AP {b}")
            ap_users[b].append(k)
        return cls(n_aps, n_users, tuple(tuple(u) for u in ap_users))

    @classmethod
    def single_cell(cls, n_users: int):
        return cls(1, n_users, (tuple(range(n_users)),))

    def edges(self):
        return [[b, k] for b, users in enumerate(self.ap_users) for k in users]

    def to_json(self) -> dict:
        return {"aps": self.n_aps, "users": self.n_users, "edges": self.edges()}

    @classmethod
    def from_json(cls, obj: dict):
        try:
            return cls.from_edges(int(obj["aps"]), int(obj["users"]), obj["edges"])
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"malformed topology document: {exc}") from exc


def load_topology(path: str | os.PathLike) -> Topology:
    with open(path) as fh:
        return Topology.from_json(json.load(fh))


def save_topology(topology: Topology, path: str | os.PathLike):
    with open(path, "w") as fh:
        json.dump(topology.to_json(), fh)


@dataclass(frozen=True)
class NoiseSpec:
    sigma2: float
    per_ap: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.sigma2 < 0 or (self.per_ap and min(self.per_ap) < 0):
            raise ValueError("noise variance must be nonnegative")

    def for_ap(self, b: int) -> float:
        return self.per_ap[b] if self.per_ap is not None else self.sigma2


def ebn0_to_sigma2(ebn0_db: float, L: int, B_bits: int) -> float:
    """Per-sample noise variance for unit-norm columns (E||x||^2 = L) and B_bits info bits."""
    if B_bits < 1:
        raise ValueError("B_bits must be positive")
    try:
        sigma2 = L / (2.0 * B_bits * 10.0 ** (ebn0_db / 10.0))
    except (OverflowError, ZeroDivisionError):
        sigma2 = math.inf
    if not 0 < sigma2 < math.inf:
        raise ValueError(f"E_b/N_0 of {ebn0_db} dB is outside the representable range")
    return sigma2


def sigma2_to_ebn0(sigma2: float, L: int, B_bits: int) -> float:
    return 10.0 * math.log10(L / (2.0 * B_bits * sigma2))


def sum_capacity_bound(L: int, n: int, sigma2: float) -> float:
    """Upper bound on the sum capacity in bits per real channel use."""
    return 0.5 * math.log2(1.0 + L / (n * sigma2))


def sum_rate(K: int, B_bits: int, n_K: int) -> float:
    return K * B_bits / n_K


def channel_uses_for(K: int, B_bits: int, R_sum: float) -> int:
    # round before the ceiling so that e.g. 2*5888/0.8 is not pushed up by float noise
    return math.ceil(round(K * B_bits / R_sum, 9))


def _sum_signals(signals, n=None):
    signals = [np.asarray(x, dtype=float) for x in signals]
    if n is None:
        n = len(signals[0]) if signals else 0
    for k, x in enumerate(signals):
        if x.shape != (n,):
            raise ValueError(f"signal {k} has shape {x.shape}, expected ({n},)")
    total = np.zeros(n)
    for x in signals:
        total = total + x
    return total


def gmac_transmit(signals, sigma2, rng: np.random.Generator) -> np.ndarray:
    """y = sum_k x_k + z with z ~ N(0, sigma2 I)."""
    signals = list(signals)
    if not signals:
        raise ValueError("need at least one signal")
    sigma2 = sigma2.sigma2 if isinstance(sigma2, NoiseSpec) else float(sigma2)
    y = _sum_signals(signals)
    return y + math.sqrt(sigma2) * rng.standard_normal(len(y))


def cellfree_transmit(topology: Topology, signals, sigma2, rng: np.random.Generator) -> list[np.ndarray]:
    """Per-AP observations y_b = sum_{k in K_b} x_k + z_b with independent z_b.

    Noise is drawn AP by AP in index order, so a one-AP topology consumes
    the generator exactly like :func:`gmac_transmit`.
    """
    signals = list(signals)
    if len(signals) != topology.n_users:
        raise ValueError(f"{len(signals)} signals for a {topology.n_users}-user topology")
    noise = sigma2 if isinstance(sigma2, NoiseSpec) else NoiseSpec(float(sigma2))
    n = len(signals[0])
    out = []
    for b, users in enumerate(topology.ap_users):
        y = _sum_signals([signals[k] for k in users], n)
        out.append(y + math.sqrt(noise.for_ap(b)) * rng.standard_normal(n))
    return out

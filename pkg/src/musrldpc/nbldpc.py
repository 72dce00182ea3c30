"""Non-binary LDPC codes over GF(2^p).

Construction by progressive edge growth, systematic encoding from a reduced
row-echelon form of H, syndrome computation, and a flooding-schedule belief
propagation engine whose check-node update is an XOR convolution evaluated
with the Walsh-Hadamard transform.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import hadamard

from .galois import FieldTable, make_field

PMF_FLOOR = 1e-300


class CodeConstructionError(ValueError):
    pass


class LdpcCode:
    """Sparse parity-check matrix over GF(q) with a systematic encoder.

    ``checks`` is a list of ``(variables, weights)`` pairs, one per row of H.
    Edges are stored sorted by check, then by variable.
    """

    def __init__(self, field: FieldTable, L: int, checks):
        self.field = field
        self.L = int(L)
        self.M = len(checks)
        if self.M >= self.L:
            raise CodeConstructionError(f"need M < L, got M={self.M}, L={self.L}")

        ev, ec, ew = [], [], []
        for m, (vars_, weights) in enumerate(checks):
            vars_ = np.asarray(vars_, dtype=np.int64)
            weights = np.asarray(weights, dtype=np.int64)
            if len(vars_) != len(weights):
                raise CodeConstructionError(f"check {m}: variable/weight length mismatch")
            if len(np.unique(vars_)) != len(vars_):
                raise CodeConstructionError(f"check {m}: repeated variable")
            if len(vars_) < 2:
                raise CodeConstructionError(f"check {m} has fewer than 2 nonzeros")
            if ((weights <= 0) | (weights >= field.q)).any():
                raise CodeConstructionError(f"check {m}: edge weights must be nonzero field elements")
            if ((vars_ < 0) | (vars_ >= self.L)).any():
                raise CodeConstructionError(f"check {m}: variable index out of range")
            order = np.argsort(vars_)
            ev.append(vars_[order])
            ew.append(weights[order])
            ec.append(np.full(len(vars_), m, dtype=np.int64))

        self.edge_var = np.concatenate(ev)
        self.edge_check = np.concatenate(ec)
        self.edge_weight = np.concatenate(ew)
        self.n_edges = len(self.edge_var)

        var_deg = np.bincount(self.edge_var, minlength=self.L)
        if (var_deg == 0).any():
            raise CodeConstructionError(
                f"variables {np.flatnonzero(var_deg == 0).tolist()} belong to no check"
            )
        self.var_degree = var_deg
        self.check_degree = np.array([len(v) for v in ev], dtype=np.int64)
        self.check_starts = np.concatenate([[0], np.cumsum(self.check_degree)[:-1]])

        # variable-major view of the edges, for reduceat over incident checks
        self._by_var = np.argsort(self.edge_var, kind="stable")
        self._var_starts = np.concatenate([[0], np.cumsum(var_deg)[:-1]])

        # padded (M, dmax) slot table; pad slots point at index n_edges
        dmax = int(self.check_degree.max())
        slots = np.full((self.M, dmax), self.n_edges, dtype=np.int64)
        self._edge_pos = np.empty(self.n_edges, dtype=np.int64)
        for m in range(self.M):
            s, d = self.check_starts[m], self.check_degree[m]
            slots[m, :d] = np.arange(s, s + d)
            self._edge_pos[s:s + d] = np.arange(d)
        self._slots = slots

        # index permutations for the weight relabelling g -> h*g and back
        g = np.arange(field.q)
        self._mul_perm = field.mul(self.edge_weight[:, None], g[None, :])
        self._div_perm = field.mul(field.inv(self.edge_weight)[:, None], g[None, :])

        self._build_encoder()

    @property
    def q(self) -> int:
        return self.field.q

    @property
    def K_sym(self) -> int:
        return self.L - self.M

    @property
    def rate(self) -> float:
        return self.K_sym / self.L

    def dense(self) -> np.ndarray:
        H = np.zeros((self.M, self.L), dtype=np.int64)
        H[self.edge_check, self.edge_var] = self.edge_weight
        return H

    def checks(self):
        for m in range(self.M):
            s, d = self.check_starts[m], self.check_degree[m]
            yield self.edge_var[s:s + d], self.edge_weight[s:s + d]

    def _build_encoder(self):
        R, pivots = rref(self.field, self.dense(), prefer_right=True)
        if len(pivots) < self.M:
            raise CodeConstructionError(
                f"H has rank {len(pivots)} over GF({self.q}), expected full rank {self.M}"
            )
        self.parity_positions = np.array(pivots, dtype=np.int64)
        mask = np.ones(self.L, dtype=bool)
        mask[self.parity_positions] = False
        self.info_positions = np.flatnonzero(mask)
        # R v = 0 with R[:, pivot_r] = e_r gives v[pivot_r] = sum_i R[r, i] v[i]
        self._parity_map = R[:, self.info_positions]


def rref(field: FieldTable, H: np.ndarray, prefer_right: bool = False):
    """Reduced row-echelon form over GF(q).

    Returns ``(R, pivots)`` where ``pivots[r]`` is the pivot column of row r.
    With ``prefer_right`` pivot columns are searched from the last column
    backwards, so the parity symbols land at the end of a systematic codeword.
    """
    R = np.array(H, dtype=np.int64)
    n_rows, n_cols = R.shape
    cols = range(n_cols - 1, -1, -1) if prefer_right else range(n_cols)
    pivots = []
    r = 0
    for c in cols:
        if r == n_rows:
            break
        nz = np.flatnonzero(R[r:, c])
        if len(nz) == 0:
            continue
        piv = r + nz[0]
        R[[r, piv]] = R[[piv, r]]
        R[r] = field.mul(R[r], field.inv(R[r, c]))
        for other in range(n_rows):
            if other != r and R[other, c]:
                R[other] ^= field.mul(R[r], R[other, c])
        pivots.append(c)
        r += 1
    return R, pivots


def gf_rank(field: FieldTable, H: np.ndarray) -> int:
    return len(rref(field, H)[1])


def _peg_graph(L: int, M: int, dv: int, rng: np.random.Generator):
    """Progressive edge growth; returns per-check variable lists."""
    check_deg = np.zeros(M, dtype=np.int64)
    var_checks: list[list[int]] = [[] for _ in range(L)]
    check_vars: list[list[int]] = [[] for _ in range(M)]
    all_checks = np.arange(M)

    for j in range(L):
        for k in range(dv):
            if k == 0:
                candidates = all_checks
            else:
                reached = np.zeros(M, dtype=bool)
                reached[var_checks[j]] = True
                seen_vars = {j}
                frontier = list(var_checks[j])
                while True:
                    new_vars = {v for c in frontier for v in check_vars[c]} - seen_vars
                    seen_vars |= new_vars
                    new_checks = {c for v in new_vars for c in var_checks[v] if not reached[c]}
                    if not new_checks or reached.sum() + len(new_checks) == M:
                        break
                    reached[list(new_checks)] = True
                    frontier = list(new_checks)
                candidates = np.flatnonzero(~reached)
            degs = check_deg[candidates]
            best = candidates[degs == degs.min()]
            c = int(best[rng.integers(len(best))]) if len(best) > 1 else int(best[0])
            var_checks[j].append(c)
            check_vars[c].append(j)
            check_deg[c] += 1
    return check_vars


def build_ldpc(field: FieldTable, L: int, M: int, variable_degree: int = 3, seed=0,
               max_weight_draws: int = 32) -> LdpcCode:
    """Seeded PEG code with uniform nonzero edge weights and full-rank H."""
    if not 0 < M < L:
        raise CodeConstructionError(f"need 0 < M < L, got M={M}, L={L}")
    if variable_degree < 2:
        raise CodeConstructionError("variable_degree must be at least 2")
    if variable_degree > M:
        raise CodeConstructionError(
            f"variable_degree={variable_degree} exceeds the number of checks M={M}"
        )
    if L * variable_degree < 2 * M:
        raise CodeConstructionError(
            f"{L * variable_degree} edges cannot give every one of {M} checks two neighbours"
        )
    rng = np.random.default_rng(seed)
    check_vars = _peg_graph(L, M, variable_degree, rng)
    last = None
    for _ in range(max_weight_draws):
        checks = [(cv, rng.integers(1, field.q, size=len(cv))) for cv in check_vars]
        try:
            return LdpcCode(field, L, checks)
        except CodeConstructionError as exc:
            last = exc
    raise CodeConstructionError(f"no full-rank weight assignment found: {last}")


def ldpc_encode(code: LdpcCode, w_symbols) -> np.ndarray:
    w = np.asarray(w_symbols, dtype=np.int64)
    if w.shape[-1] != code.K_sym:
        raise ValueError(f"expected {code.K_sym} information symbols, got {w.shape[-1]}")
    v = np.zeros(w.shape[:-1] + (code.L,), dtype=np.int64)
    v[..., code.info_positions] = w
    prods = code.field.mul(code._parity_map, w[..., None, :])
    v[..., code.parity_positions] = np.bitwise_xor.reduce(prods, axis=-1)
    return v


def syndrome(code: LdpcCode, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.int64)
    if v.shape[-1] != code.L:
        raise ValueError(f"expected {code.L} symbols, got {v.shape[-1]}")
    terms = code.field.mul(code.edge_weight, v[..., code.edge_var])
    return np.bitwise_xor.reduceat(terms, code.check_starts, axis=-1)


def is_codeword(code: LdpcCode, v) -> bool:
    return not syndrome(code, v).any()


# ---------------------------------------------------------------------------
# text format: "q L M" then one "var:weight ..." line per check


def code_to_text(code: LdpcCode) -> str:
    out = io.StringIO()
    out.write(f"{code.q} {code.L} {code.M}\n")
    for vars_, weights in code.checks():
        out.write(" ".join(f"{v}:{h}" for v, h in zip(vars_, weights)) + "\n")
    return out.getvalue()


def code_from_text(text: str, field: FieldTable | None = None) -> LdpcCode:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    q, L, M = (int(tok) for tok in lines[0].split())
    if field is None:
        p = q.bit_length() - 1
        if 1 << p != q:
            raise ValueError(f"field order {q} is not a power of two")
        field = make_field(p)
    elif field.q != q:
        raise ValueError(f"file declares q={q} but field has q={field.q}")
    if len(lines) - 1 != M:
        raise ValueError(f"header declares {M} checks, found {len(lines) - 1}")
    checks = []
    for ln in lines[1:]:
        pairs = [tok.split(":") for tok in ln.split()]
        checks.append(([int(a) for a, _ in pairs], [int(b) for _, b in pairs]))
    return LdpcCode(field, L, checks)


def save_code(code: LdpcCode, path: str | os.PathLike):
    with open(path, "w") as fh:
        fh.write(code_to_text(code))


def load_code(path: str | os.PathLike, field: FieldTable | None = None) -> LdpcCode:
    with open(path) as fh:
        return code_from_text(fh.read(), field)


# ---------------------------------------------------------------------------
# belief propagation


@lru_cache(maxsize=None)
def _hadamard(q: int) -> np.ndarray:
    return hadamard(q).astype(float)


def wht(x: np.ndarray) -> np.ndarray:
    """Unnormalised Walsh-Hadamard transform along the last axis."""
    q = x.shape[-1]
    if q <= 256:
        return x @ _hadamard(q)
    lead = x.shape[:-1]
    h = 1
    while h < q:
        y = x.reshape(lead + (q // (2 * h), 2, h))
        a, b = y[..., 0, :], y[..., 1, :]
        x = np.stack((a + b, a - b), axis=-2).reshape(lead + (q,))
        h *= 2
    return x


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    return x / x.sum(axis=-1, keepdims=True)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return _normalize_rows(z)


@dataclass
class BeliefState:
    """Edge messages of one BP run; arrays carry any leading batch axes."""

    c2v: np.ndarray
    v2c: np.ndarray | None = None
    beliefs: np.ndarray | None = None
    resets: int = 0

    @classmethod
    def fresh(cls, code: LdpcCode, batch_shape=()):
        shape = tuple(batch_shape) + (code.n_edges, code.q)
        return cls(c2v=np.full(shape, 1.0 / code.q))


def _variable_update(code: LdpcCode, log_prior, c2v):
    log_c2v = np.log(np.maximum(c2v, PMF_FLOOR))
    incoming = np.add.reduceat(log_c2v[..., code._by_var, :], code._var_starts, axis=-2)
    log_post = log_prior + incoming
    v2c = _softmax(log_post[..., code.edge_var, :] - log_c2v)
    return v2c, log_post


def _check_update(code: LdpcCode, v2c):
    E, q = code.n_edges, code.q
    rows = np.arange(E)[:, None]
    # pmf of h_e * v_e, then its spectrum
    spectrum = wht(v2c[..., rows, code._div_perm])
    lead = spectrum.shape[:-2]
    padded = np.concatenate([spectrum, np.ones(lead + (1, q))], axis=-2)[..., code._slots, :]
    # exclusive products along each check's slots
    ones = np.ones(padded.shape[:-2] + (1, q))
    before = np.cumprod(np.concatenate([ones, padded[..., :-1, :]], axis=-2), axis=-2)
    after = np.cumprod(np.concatenate([ones, padded[..., :0:-1, :]], axis=-2), axis=-2)[..., ::-1, :]
    excl = (before * after)[..., code.edge_check, code._edge_pos, :]
    pmf_sum = wht(excl) / q
    c2v = pmf_sum[..., rows, code._mul_perm]
    c2v = np.maximum(c2v, 0.0) + PMF_FLOOR
    return _normalize_rows(c2v)


def bp_denoiser_round(code: LdpcCode, priors, state: BeliefState | None = None,
                      iterations: int = 1) -> np.ndarray:
    """Run ``iterations`` flooding BP iterations and return symbol beliefs.

    ``priors`` has shape (..., L, q). Without ``state`` the check-to-variable
    messages start uniform; a passed state is updated in place and so can be
    used for warm starts. Zero iterations return the priors unchanged.
    """
    priors = np.asarray(priors, dtype=float)
    if priors.shape[-2:] != (code.L, code.q):
        raise ValueError(f"priors must have trailing shape ({code.L}, {code.q}), got {priors.shape}")
    if state is None:
        state = BeliefState.fresh(code, priors.shape[:-2])
    if iterations == 0:
        state.beliefs = priors.copy()
        return state.beliefs

    log_prior = np.log(np.maximum(priors, PMF_FLOOR))
    for _ in range(iterations):
        state.v2c, _ = _variable_update(code, log_prior, state.c2v)
        state.c2v = _check_update(code, state.v2c)
    log_c2v = np.log(np.maximum(state.c2v, PMF_FLOOR))
    log_post = log_prior + np.add.reduceat(log_c2v[..., code._by_var, :], code._var_starts, axis=-2)
    beliefs = _softmax(log_post)

    bad = ~np.isfinite(beliefs).all(axis=-1) | (beliefs.sum(axis=-1) <= 0)
    if bad.any():
        beliefs[bad] = 1.0 / code.q
        state.resets += int(bad.sum())
    state.beliefs = beliefs
    return beliefs

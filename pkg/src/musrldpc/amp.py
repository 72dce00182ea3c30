"""AMP with a BP denoiser for jointly decoding superimposed SR-LDPC codewords.

Each iteration computes, in order,

    y_hat_k = A_k s_k - (1/n) z_prev div_k          (per user)
    z       = y - sum_k y_hat_k                      (per AP in cell-free mode)
    tau2    = ||z||^2 / n
    r_k     = A_k^T z + s_k                          (combined across B_k)
    s_k     = BP(softmax(r_k / tau2))
    div_k   = (||s_k||_1 - ||s_k||_2^2) / tau2

In cell-free mode every AP keeps its own residual, variance and Onsager
terms; a user's effective observations from its APs are merged with
inverse-variance weights before denoising.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .channel import Topology
from .nbldpc import BeliefState, LdpcCode, bp_denoiser_round, syndrome
from .srldpc import SensingMatrix, extract_info_bits, hard_decision, uniform_sections


@dataclass
class UserCodebook:
    matrix: SensingMatrix
    code: LdpcCode
    user: int = 0

    def __post_init__(self):
        A, c = self.matrix, self.code
        if (A.L, A.q) != (c.L, c.q):
            raise ValueError(
                f"user {self.user}: matrix geometry (L={A.L}, q={A.q}) does not match "
                f"code (L={c.L}, q={c.q})"
            )


@dataclass
class DecodeResult:
    symbols: np.ndarray          # (K, L) hard decisions
    bits: np.ndarray             # (K, K_sym * p) information bits
    beliefs: np.ndarray          # (K, L, q) final state estimates
    syndrome_ok: np.ndarray      # (K,) bool
    iterations: int
    tau2_history: list = field(default_factory=list)       # per iteration, per AP
    residual_norms: list = field(default_factory=list)     # per iteration, per AP
    aborted: bool = False
    abort_reason: str | None = None
    bp_resets: int = 0


def estimate_tau2(z, n: int | None = None) -> float:
    z = np.asarray(z, dtype=float)
    n = len(z) if n is None else n
    with np.errstate(over="ignore"):
        return float(z @ z) / n


def effective_observation(A: SensingMatrix, z, s) -> np.ndarray:
    return A.rmatvec(z) + np.asarray(s, dtype=float).reshape(A.L, A.q)


def section_posterior(r, tau2: float) -> np.ndarray:
    """Posterior over the one-hot position given r = e_g + N(0, tau2 I), per section.

    exp(-||r - e_g||^2 / 2 tau2) depends on g only through r_g, so this is a
    softmax of r / tau2 along the last axis.
    """
    r = np.asarray(r, dtype=float)
    if tau2 <= 0:
        out = np.zeros_like(r)
        np.put_along_axis(out, np.argmax(r, axis=-1)[..., None], 1.0, axis=-1)
        return out
    logits = r / tau2
    w = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def bp_denoise(code: LdpcCode, r, tau2, bp_iterations: int = 1,
               state: BeliefState | None = None) -> np.ndarray:
    """Denoise effective observations of shape (..., L, q).

    ``tau2`` may be a scalar or one value per leading batch entry.
    """
    r = np.asarray(r, dtype=float)
    tau2 = np.asarray(tau2, dtype=float)
    if tau2.ndim:
        priors = np.stack([section_posterior(rk, float(t)) for rk, t in zip(r, tau2)])
    else:
        priors = section_posterior(r, float(tau2))
    return bp_denoiser_round(code, priors, state, bp_iterations)


def onsager_divergence(s_next, tau2: float) -> float:
    if tau2 <= 0:
        return 0.0
    s_next = np.asarray(s_next, dtype=float)
    return float(np.abs(s_next).sum() - (s_next * s_next).sum()) / tau2


def user_contribution(A: SensingMatrix, s, z_prev, div_prev: float, n: int,
                      As: np.ndarray | None = None) -> np.ndarray:
    """A s - (1/n) z_prev div_prev; pass ``As`` to reuse a product already computed."""
    if As is None:
        As = A.matvec(s)
    if div_prev == 0:
        return As
    return As - (div_prev / n) * np.asarray(z_prev, dtype=float)


def residual(y, contributions) -> np.ndarray:
    z = np.array(y, dtype=float)
    for c in contributions:
        z = z - c
    return z


def combining_weights(tau2s) -> np.ndarray:
    tau2s = np.asarray(tau2s, dtype=float)
    if (tau2s == 0).any():
        w = np.zeros(len(tau2s))
        w[np.flatnonzero(tau2s == 0)[0]] = 1.0
        return w
    if len(tau2s) == 1:
        return np.ones(1)
    return 1.0 / (tau2s[:, None] / tau2s[None, :]).sum(axis=1)


def combine_effective_observations(rs, tau2s):
    """Merge per-AP effective observations of one user.

    Returns ``(r, weights, tau2)``: the combined observation, the weights
    (summing to one) and the combined noise variance 1 / sum_b(1 / tau2_b).
    """
    tau2s = np.asarray(tau2s, dtype=float)
    if len(rs) != len(tau2s) or len(rs) == 0:
        raise ValueError("need one variance per observation and at least one observation")
    if (tau2s < 0).any():
        raise ValueError("variances must be nonnegative")
    w = combining_weights(tau2s)
    if (tau2s == 0).any():
        b = int(np.argmax(w))
        return np.asarray(rs[b], dtype=float), w, 0.0
    if len(rs) == 1:
        return np.asarray(rs[0], dtype=float), w, float(tau2s[0])
    r = w[0] * np.asarray(rs[0], dtype=float)
    for wb, rb in zip(w[1:], rs[1:]):
        r = r + wb * np.asarray(rb, dtype=float)
    return r, w, 1.0 / float((1.0 / tau2s).sum())


def _run(ys, topology: Topology, codebooks, T_amp, bp_iterations, init, early_stop, trace):
    K = topology.n_users
    if len(codebooks) != K:
        raise ValueError(f"{len(codebooks)} codebooks for {K} users")
    if len(ys) != topology.n_aps:
        raise ValueError(f"{len(ys)} observations for {topology.n_aps} APs")
    ys = [np.asarray(y, dtype=float) for y in ys]
    n = codebooks[0].matrix.n
    for cb in codebooks:
        if cb.matrix.n != n:
            raise ValueError("all users must share the number of channel uses")
    for b, y in enumerate(ys):
        if y.shape != (n,):
            raise ValueError(f"observation {b} has shape {y.shape}, expected ({n},)")

    codes = [cb.code for cb in codebooks]
    shared_code = codes[0] if all(c is codes[0] for c in codes) else None

    if init == "uniform":
        s = [uniform_sections(cb.code.L, cb.code.q) for cb in codebooks]
    elif init == "zero":
        s = [np.zeros((cb.code.L, cb.code.q)) for cb in codebooks]
    else:
        raise ValueError(f"unknown initialisation {init!r}")

    z_prev = [np.zeros(n) for _ in ys]
    div = [dict.fromkeys(users, 0.0) for users in topology.ap_users]
    result = DecodeResult(symbols=None, bits=None, beliefs=None, syndrome_ok=None, iterations=0)
    resets = [0]

    def denoise(r, tau2):
        if shared_code is not None and len(set(c.L for c in codes)) == 1:
            state = BeliefState.fresh(shared_code, (K,))
            out = bp_denoise(shared_code, np.stack(r), np.array(tau2), bp_iterations, state)
            resets[0] += state.resets
            return list(out)
        out = []
        for code, rk, tk in zip(codes, r, tau2):
            state = BeliefState.fresh(code)
            out.append(bp_denoise(code, rk, tk, bp_iterations, state))
            resets[0] += state.resets
        return out

    def readout():
        v_hat = [hard_decision(sk) for sk in s]
        ok = np.array([not syndrome(c, v).any() for c, v in zip(codes, v_hat)])
        return v_hat, ok

    v_hat, ok = readout()
    for t in range(T_amp):
        As = [cb.matrix.matvec(sk) for cb, sk in zip(codebooks, s)]
        z, tau2 = [], []
        for b, users in enumerate(topology.ap_users):
            contrib = [user_contribution(codebooks[k].matrix, s[k], z_prev[b], div[b][k], n, As[k])
                       for k in users]
            zb = residual(ys[b], contrib)
            z.append(zb)
            tau2.append(estimate_tau2(zb, n))
        if not (all(np.isfinite(zb).all() for zb in z) and np.isfinite(tau2).all()):
            result.aborted, result.abort_reason = True, f"non-finite residual at iteration {t}"
            break

        r, tau2_user = [], []
        for k, cb in enumerate(codebooks):
            aps = topology.user_aps[k]
            r_bk = [effective_observation(cb.matrix, z[b], s[k]) for b in aps]
            rk, _, tk = combine_effective_observations(r_bk, [tau2[b] for b in aps])
            r.append(rk)
            tau2_user.append(tk)

        s = denoise(r, tau2_user)
        if not all(np.isfinite(sk).all() for sk in s):
            result.aborted, result.abort_reason = True, f"non-finite state at iteration {t}"
            break
        for b, users in enumerate(topology.ap_users):
            for k in users:
                div[b][k] = onsager_divergence(s[k], tau2[b])
        z_prev = z

        v_hat, ok = readout()
        result.iterations = t + 1
        result.tau2_history.append(list(tau2))
        norms = [float(np.linalg.norm(zb)) for zb in z]
        result.residual_norms.append(norms)
        if trace is not None:
            trace.write(json.dumps({"t": t, "tau2": tau2, "residual_norm": norms,
                                    "syndrome_ok": ok.tolist()}) + "\n")
        if early_stop and ok.all():
            break

    result.beliefs = np.stack(s)
    result.symbols = np.stack(v_hat)
    result.syndrome_ok = ok
    result.bits = np.stack([extract_info_bits(c, v) for c, v in zip(codes, v_hat)])
    result.bp_resets = resets[0]
    return result


def decode_single_cell(y, codebooks, sigma2: float | None = None, T_amp: int = 25,
                       bp_iterations: int = 1, init: str = "uniform",
                       early_stop: bool = True, trace=None) -> DecodeResult:
    """Jointly decode all users from one GMAC observation.

    ``sigma2`` is informational only: the effective noise variance is
    re-estimated from the residual each iteration. ``trace``, if given, is a
    text stream receiving one JSON record per iteration.
    """
    topo = Topology.single_cell(len(codebooks))
    return _run([y], topo, list(codebooks), T_amp, bp_iterations, init, early_stop, trace)


def decode_cell_free(ys, topology: Topology, codebooks, sigma2: float | None = None,
                     T_amp: int = 25, bp_iterations: int = 1, init: str = "uniform",
                     early_stop: bool = True, trace=None) -> DecodeResult:
    """Decode users observed through per-AP observations ``ys`` over ``topology``."""
    return _run(list(ys), topology, list(codebooks), T_amp, bp_iterations, init, early_stop, trace)

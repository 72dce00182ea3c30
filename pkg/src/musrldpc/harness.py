"""Seeded Monte-Carlo experiments: trials, sweeps, BER/FER accounting, result files.

Randomness is split by keyed seed sequences derived from the master seed:

* code construction uses ``code_seed``;
* user k's sensing matrix at n channel uses is keyed by (seed, 1, k, n), so it
  is fixed for a whole sweep point, as in a deployed system;
* trial i draws messages and noise from (seed, 2, i). The same trial index
  reuses the same stream at every sweep point (common random numbers).

Trials are reduced in index order, so results do not depend on the number of
worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binomtest
from threadpoolctl import threadpool_limits

from . import amp
from .channel import (Topology, channel_uses_for, ebn0_to_sigma2, gmac_transmit,
                      cellfree_transmit, load_topology, sum_capacity_bound)
from .galois import make_field
from .nbldpc import LdpcCode, build_ldpc, ldpc_encode
from .srldpc import DEFAULT_MEMORY_BUDGET, SensingMatrix, bits_to_symbols, sr_encode, to_sparse

MATRIX_STREAM = 1
TRIAL_STREAM = 2

MODES = ("single-cell", "cell-free", "oma-baseline")

PROFILES = {
    "desk": dict(p=4, L=64, M=8, degree=3, channel_uses=280, matrix_mode="dense"),
    "paper": dict(p=8, L=766, M=30, degree=3, channel_uses=7350, matrix_mode="streamed"),
}

CSV_FIELDS = ["sweep_var", "value", "users", "n_k", "trials", "bit_errors",
              "bits_total", "ber", "frame_errors", "fer"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "single-cell"
    profile: str = "desk"
    p: int | None = None
    modulus: int | None = None
    L: int | None = None
    M: int | None = None
    degree: int | None = None
    code_seed: int = 0
    users: int = 1
    channel_uses: int | None = None
    sum_rate: list | None = None
    ebn0_db: list = field(default_factory=lambda: [5.0])
    trials: int = 2000
    T_amp: int = 25
    bp_iterations: int = 1
    init: str = "uniform"
    early_stop: bool = True
    seed: int = 0
    topology: str | dict | None = None
    matrix_mode: str | None = None
    memory_budget: int = DEFAULT_MEMORY_BUDGET
    workers: int = 1
    abort_threshold: float = 0.01
    out: str | None = None
    format: str | None = None

    def resolved(self) -> "ExperimentConfig":
        """Copy with profile defaults materialised and every field validated."""
        cfg = dataclasses.replace(self)
        if cfg.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {cfg.mode!r}")
        if cfg.profile not in PROFILES:
            raise ConfigError(f"unknown profile {cfg.profile!r}")
        prof = PROFILES[cfg.profile]
        for key in ("p", "L", "M", "degree", "matrix_mode"):
            if getattr(cfg, key) is None:
                setattr(cfg, key, prof[key])
        if cfg.modulus is None:
            from .galois import DEFAULT_MODULI
            cfg.modulus = DEFAULT_MODULI[cfg.p]

        cfg.ebn0_db = _as_list(cfg.ebn0_db, "ebn0_db")
        if cfg.sum_rate is not None:
            cfg.sum_rate = _as_list(cfg.sum_rate, "sum_rate")
        if cfg.sum_rate is not None and cfg.channel_uses is not None:
            raise ConfigError("give either channel_uses or sum_rate, not both")

        if cfg.mode == "cell-free":
            if cfg.topology is None:
                raise ConfigError("cell-free mode needs a topology")
            topo = resolve_topology(cfg.topology)
            cfg.users = topo.n_users
            if cfg.sum_rate is not None:
                raise ConfigError("cell-free mode sweeps E_b/N_0 at fixed channel_uses")
            if cfg.channel_uses is None:
                cfg.channel_uses = prof["channel_uses"]
        elif cfg.sum_rate is None and cfg.channel_uses is None:
            per_user_bits = (cfg.L - cfg.M) * cfg.p
            cfg.sum_rate = [round(per_user_bits / prof["channel_uses"], 6)]

        if cfg.sum_rate is not None and len(cfg.sum_rate) > 1 and len(cfg.ebn0_db) > 1:
            raise ConfigError("sweep either sum_rate or ebn0_db, not both")
        for db in cfg.ebn0_db:
            try:
                ebn0_to_sigma2(db, cfg.L, cfg.info_bits)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if cfg.sum_rate is not None and min(cfg.sum_rate) <= 0:
            raise ConfigError("sum rates must be positive")
        if cfg.channel_uses is not None and cfg.channel_uses < 1:
            raise ConfigError("channel_uses must be positive")
        for name in ("users", "trials", "T_amp", "workers"):
            if getattr(cfg, name) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if cfg.bp_iterations < 0:
            raise ConfigError("bp_iterations must be nonnegative")
        if cfg.init not in ("uniform", "zero"):
            raise ConfigError(f"init must be 'uniform' or 'zero', got {cfg.init!r}")
        if cfg.format is None:
            cfg.format = "json" if (cfg.out or "").endswith(".json") else "csv"
        if cfg.format not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {cfg.format!r}")
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        return cls(**d)

    def digest(self) -> str:
        d = self.to_dict()
        for key in ("workers", "out", "format"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def info_bits(self) -> int:
        return (self.L - self.M) * self.p


def _as_list(x, name):
    if isinstance(x, (int, float)):
        x = [x]
    x = [float(v) for v in x]
    if not x:
        raise ConfigError(f"{name} must be non-empty")
    return x


def resolve_topology(topology) -> Topology:
    if isinstance(topology, Topology):
        return topology
    try:
        if isinstance(topology, dict):
            return Topology.from_json(topology)
        return load_topology(topology)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"bad topology: {exc}") from exc


@dataclass(frozen=True)
class SweepPoint:
    index: int
    sweep_var: str
    value: float
    ebn0_db: float
    n: int          # channel uses seen by one decoder (per user in OMA)
    n_k: int        # total channel uses for all users


def sweep_points(cfg: ExperimentConfig) -> list[SweepPoint]:
    K, B = cfg.users, cfg.info_bits
    if cfg.sum_rate is not None and len(cfg.sum_rate) > 1:
        var, values = "sum_rate", cfg.sum_rate
    else:
        var, values = "ebn0_db", cfg.ebn0_db
    points = []
    for i, v in enumerate(values):
        ebn0 = v if var == "ebn0_db" else cfg.ebn0_db[0]
        if cfg.mode == "cell-free":
            n = n_k = cfg.channel_uses
        elif cfg.mode == "oma-baseline":
            n = cfg.channel_uses if cfg.sum_rate is None else channel_uses_for(
                1, B, v if var == "sum_rate" else cfg.sum_rate[0])
            n_k = K * n
        else:
            n = cfg.channel_uses if cfg.sum_rate is None else channel_uses_for(
                K, B, v if var == "sum_rate" else cfg.sum_rate[0])
            n_k = n
        points.append(SweepPoint(i, var, v, ebn0, n, n_k))
    return points


@dataclass
class PointContext:
    cfg: ExperimentConfig
    point: SweepPoint
    code: LdpcCode
    codebooks: list
    sigma2: float
    topology: Topology | None


_CODE_CACHE: dict = {}
_CONTEXT_CACHE: dict = {}


def build_code(cfg: ExperimentConfig) -> LdpcCode:
    key = (cfg.p, cfg.modulus, cfg.L, cfg.M, cfg.degree, cfg.code_seed)
    if key not in _CODE_CACHE:
        field_ = make_field(cfg.p, cfg.modulus)
        _CODE_CACHE[key] = build_ldpc(field_, cfg.L, cfg.M, cfg.degree, cfg.code_seed)
    return _CODE_CACHE[key]


def sensing_matrix(cfg: ExperimentConfig, user: int, n: int) -> SensingMatrix:
    return SensingMatrix((cfg.seed, MATRIX_STREAM, user, n), n, cfg.L, 1 << cfg.p,
                         mode=cfg.matrix_mode, memory_budget=cfg.memory_budget)


def point_context(cfg: ExperimentConfig, point: SweepPoint) -> PointContext:
    key = (cfg.digest(), point)
    if key not in _CONTEXT_CACHE:
        _CONTEXT_CACHE.clear()
        code = build_code(cfg)
        codebooks = [amp.UserCodebook(sensing_matrix(cfg, k, point.n), code, k)
                     for k in range(cfg.users)]
        topo = resolve_topology(cfg.topology) if cfg.mode == "cell-free" else None
        sigma2 = ebn0_to_sigma2(point.ebn0_db, cfg.L, cfg.info_bits)
        _CONTEXT_CACHE[key] = PointContext(cfg, point, code, codebooks, sigma2, topo)
    return _CONTEXT_CACHE[key]


@dataclass
class TrialRecord:
    trial: int
    bit_errors: list          # per user
    frame_errors: list        # per user, 0/1
    aborted: bool = False
    iterations: int = 0


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, TRIAL_STREAM, trial_index]))


def _simulate(ctx: PointContext, trial_index: int, sigma2: float, trace=None) -> TrialRecord:
    cfg, code = ctx.cfg, ctx.code
    K, p, q = cfg.users, cfg.p, 1 << cfg.p
    rng = trial_rng(cfg.seed, trial_index)
    bits = rng.integers(0, 2, size=(K, cfg.info_bits), dtype=np.uint8)
    v = ldpc_encode(code, bits_to_symbols(bits, p))
    xs = [sr_encode(cb.matrix, to_sparse(v[k], q)) for k, cb in enumerate(ctx.codebooks)]
    opts = dict(sigma2=sigma2, T_amp=cfg.T_amp, bp_iterations=cfg.bp_iterations,
                init=cfg.init, early_stop=cfg.early_stop, trace=trace)

    if cfg.mode == "oma-baseline":
        results = []
        for k, cb in enumerate(ctx.codebooks):
            y = gmac_transmit([xs[k]], sigma2, rng)
            results.append(amp.decode_single_cell(y, [cb], **opts))
        decoded = np.concatenate([r.bits for r in results])
        aborted = any(r.aborted for r in results)
        iterations = max(r.iterations for r in results)
    else:
        if cfg.mode == "cell-free":
            ys = cellfree_transmit(ctx.topology, xs, sigma2, rng)
            res = amp.decode_cell_free(ys, ctx.topology, ctx.codebooks, **opts)
        else:
            y = gmac_transmit(xs, sigma2, rng)
            res = amp.decode_single_cell(y, ctx.codebooks, **opts)
        decoded, aborted, iterations = res.bits, res.aborted, res.iterations

    if aborted:
        errs = np.full(K, cfg.info_bits)
    else:
        errs = (decoded != bits).sum(axis=1)
    return TrialRecord(trial_index, errs.tolist(), (errs > 0).astype(int).tolist(),
                       aborted, iterations)


def run_trial(cfg: ExperimentConfig, trial_index: int, point: int | SweepPoint = 0,
              sigma2: float | None = None, trace=None) -> TrialRecord:
    """One seeded trial at a sweep point; ``sigma2`` overrides the E_b/N_0 calibration."""
    cfg = cfg.resolved()
    if not isinstance(point, SweepPoint):
        point = sweep_points(cfg)[point]
    ctx = point_context(cfg, point)
    return _simulate(ctx, trial_index, ctx.sigma2 if sigma2 is None else sigma2, trace)


def _run_chunk(cfg: ExperimentConfig, point: SweepPoint, trials: range) -> list[TrialRecord]:
    with threadpool_limits(1):
        ctx = point_context(cfg, point)
        return [_simulate(ctx, i, ctx.sigma2) for i in trials]


@dataclass
class SweepSummary:
    sweep_var: str
    value: float
    users: int
    n_k: int
    trials: int
    bit_errors: int
    bits_total: int
    ber: float
    frame_errors: int
    fer: float
    ber_ci: tuple
    ebn0_db: float
    sigma2: float
    sum_rate: float
    c_sum: float | None
    aborted_trials: int
    mean_iterations: float
    user_bit_errors: list
    user_bits: list
    user_frame_errors: list

    def csv_row(self) -> dict:
        return {k: getattr(self, k) for k in CSV_FIELDS}


def wilson_interval(errors: int, total: int, confidence: float = 0.95) -> tuple[float, float]:
    ci = binomtest(int(errors), int(total)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def summarize(cfg: ExperimentConfig, point: SweepPoint, records: list[TrialRecord]) -> SweepSummary:
    K, B = cfg.users, cfg.info_bits
    per_user_err = np.sum([r.bit_errors for r in records], axis=0).astype(int)
    per_user_fe = np.sum([r.frame_errors for r in records], axis=0).astype(int)
    bit_errors = int(per_user_err.sum())
    bits_total = K * B * len(records)
    frame_errors = sum(1 for r in records if any(r.frame_errors))
    sigma2 = ebn0_to_sigma2(point.ebn0_db, cfg.L, B)
    c_sum = None
    if cfg.mode != "cell-free":
        c_sum = sum_capacity_bound(K * cfg.L, point.n_k, sigma2)
    return SweepSummary(
        sweep_var=point.sweep_var, value=point.value, users=K, n_k=point.n_k,
        trials=len(records), bit_errors=bit_errors, bits_total=bits_total,
        ber=bit_errors / bits_total, frame_errors=frame_errors, fer=frame_errors / len(records),
        ber_ci=wilson_interval(bit_errors, bits_total), ebn0_db=point.ebn0_db, sigma2=sigma2,
        sum_rate=K * B / point.n_k, c_sum=c_sum,
        aborted_trials=sum(r.aborted for r in records),
        mean_iterations=float(np.mean([r.iterations for r in records])),
        user_bit_errors=per_user_err.tolist(), user_bits=[B * len(records)] * K,
        user_frame_errors=per_user_fe.tolist(),
    )


def _init_worker():
    threadpool_limits(1)


def run_sweep(cfg: ExperimentConfig, workers: int | None = None,
              chunk_size: int = 100, progress=None) -> list[SweepSummary]:
    cfg = cfg.resolved()
    workers = cfg.workers if workers is None else workers
    summaries = []
    pool = ProcessPoolExecutor(workers, initializer=_init_worker) if workers > 1 else None
    try:
        for point in sweep_points(cfg):
            chunks = [range(s, min(s + chunk_size, cfg.trials))
                      for s in range(0, cfg.trials, chunk_size)]
            if pool is None:
                parts = [_run_chunk(cfg, point, c) for c in chunks]
            else:
                parts = list(pool.map(_run_chunk, [cfg] * len(chunks), [point] * len(chunks), chunks))
            records = [r for part in parts for r in part]
            summaries.append(summarize(cfg, point, records))
            if progress is not None:
                progress(summaries[-1])
    finally:
        if pool is not None:
            pool.shutdown()
    return summaries


def metadata(cfg: ExperimentConfig) -> dict:
    cfg = cfg.resolved()
    code = build_code(cfg)
    return {
        "config_digest": cfg.digest(),
        "field": {"q": code.q, "modulus": cfg.modulus},
        "code": {"L": code.L, "M": code.M, "K_sym": code.K_sym, "info_bits": cfg.info_bits,
                 "variable_degree": cfg.degree, "check_degrees": sorted(set(code.check_degree.tolist())),
                 "code_seed": cfg.code_seed},
        "decoder": {"T_amp": cfg.T_amp, "bp_iterations": cfg.bp_iterations, "init": cfg.init,
                    "early_stop": cfg.early_stop, "tau2_estimator": "residual_norm"},
        "seeds": {"master": cfg.seed, "matrix_key": [cfg.seed, MATRIX_STREAM, "user", "n"],
                  "trial_key": [cfg.seed, TRIAL_STREAM, "trial"]},
        "ebn0_convention": "Eb = L / info_bits per user; N0 = 2 sigma2; "
                           "cell-free: identical sigma2 at every AP",
    }


def results_csv(summaries: list[SweepSummary]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for s in summaries:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in s.csv_row().items()})
    return buf.getvalue()


def results_json(summaries: list[SweepSummary], cfg: ExperimentConfig) -> str:
    cfg = cfg.resolved()
    doc = {
        "config": cfg.to_dict(),
        "metadata": metadata(cfg),
        "summaries": [dataclasses.asdict(s) for s in summaries],
    }
    return json.dumps(doc, indent=2)


def emit_results(summaries: list[SweepSummary], fmt: str = "csv", path=None,
                 cfg: ExperimentConfig | None = None) -> str:
    if not summaries:
        raise ValueError("no summaries to emit")
    if fmt == "csv":
        text = results_csv(summaries)
    elif fmt == "json":
        if cfg is None:
            raise ValueError("JSON output embeds the configuration; pass cfg")
        text = results_json(summaries, cfg)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def max_rate_below(summaries: list[SweepSummary], target_ber: float):
    """Largest nominal swept sum rate whose BER is at most ``target_ber`` (None if none)."""
    ok = [s.value for s in summaries if s.sweep_var == "sum_rate" and s.ber <= target_ber]
    return max(ok) if ok else None


def max_rate_search(cfg: ExperimentConfig, target_ber: float, workers: int | None = None,
                    progress=None):
    """Walk the sum-rate grid from the top down, stopping at the first rate meeting the target.

    Returns ``(rate or None, summaries)`` with summaries in evaluation order. Only
    points above the answer are simulated, which is what makes the search cheap.
    """
    cfg = cfg.resolved()
    if cfg.sum_rate is None:
        raise ConfigError("a rate search needs a sum_rate grid")
    found, out = None, []
    for rate in sorted(cfg.sum_rate, reverse=True):
        point_cfg = dataclasses.replace(cfg, sum_rate=[rate])
        s = run_sweep(point_cfg, workers=workers)[0]
        s = dataclasses.replace(s, sweep_var="sum_rate", value=rate)
        out.append(s)
        if progress is not None:
            progress(s)
        if s.ber <= target_ber:
            found = rate
            break
    return found, out

"""Command-line front end for the Monte-Carlo harness.

    musrldpc single-cell --users 4 --ebn0-db 4.5 --sum-rate 0.8 0.85 --trials 2000 --out r.csv
    musrldpc cell-free --topology topo.json --ebn0-db 0 1 2 --trials 500
    musrldpc oma-baseline --ebn0-db 4.5 --sum-rate 0.8 --trials 2000

Exit codes: 0 success, 2 configuration error, 3 decoder-abort rate above threshold.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import ConfigError, ExperimentConfig, emit_results, run_sweep

EXIT_CONFIG = 2
EXIT_ABORTS = 3

# argparse dest -> ExperimentConfig field
_FLAG_FIELDS = {
    "users": "users", "ebn0_db": "ebn0_db", "sum_rate": "sum_rate",
    "channel_uses": "channel_uses", "trials": "trials", "seed": "seed",
    "profile": "profile", "out": "out", "format": "format", "topology": "topology",
    "t_amp": "T_amp", "bp_iterations": "bp_iterations", "workers": "workers",
    "code_seed": "code_seed", "init": "init", "abort_threshold": "abort_threshold",
}


def _common(p: argparse.ArgumentParser, single_cell: bool):
    p.add_argument("--config", help="JSON file with configuration keys; flags override it")
    p.add_argument("--ebn0-db", type=float, nargs="+")
    if single_cell:
        p.add_argument("--users", type=int)
        rate = p.add_mutually_exclusive_group()
        rate.add_argument("--sum-rate", type=float, nargs="+")
        rate.add_argument("--channel-uses", type=int)
    else:
        p.add_argument("--topology", help="topology JSON file")
        p.add_argument("--channel-uses", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--code-seed", type=int)
    p.add_argument("--profile", choices=["desk", "paper"])
    p.add_argument("--t-amp", type=int)
    p.add_argument("--bp-iterations", type=int)
    p.add_argument("--init", choices=["uniform", "zero"])
    p.add_argument("--no-early-stop", action="store_true", default=None)
    p.add_argument("--workers", type=int)
    p.add_argument("--abort-threshold", type=float)
    p.add_argument("--out", help="output path (.csv or .json); CSV to stdout if omitted")
    p.add_argument("--format", choices=["csv", "json"])
    p.add_argument("--trace", help="write per-iteration decoder diagnostics (NDJSON) here")
    p.add_argument("--emit-config", action="store_true",
                   help="print the fully resolved configuration as JSON and exit")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="musrldpc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="mode", required=True)
    _common(sub.add_parser("single-cell", help="joint AMP-BP decoding on a GMAC"), True)
    _common(sub.add_parser("cell-free", help="per-AP residuals with optimal combining"), False)
    _common(sub.add_parser("oma-baseline", help="orthogonal multiple access reference"), True)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values.update(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
    for dest, name in _FLAG_FIELDS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    if args.no_early_stop:
        values["early_stop"] = False
    if getattr(args, "sum_rate", None) is not None:
        values.pop("channel_uses", None)
    elif getattr(args, "channel_uses", None) is not None:
        values.pop("sum_rate", None)
    values["mode"] = args.mode
    return ExperimentConfig.from_dict(values).resolved()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.trace and cfg.workers > 1:
            raise ConfigError("--trace needs a single worker")
    except (ConfigError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.emit_config:
        print(json.dumps(cfg.to_dict(), indent=2))
        return 0

    def progress(s):
        if not args.quiet:
            print(f"{s.sweep_var}={s.value:g} n_k={s.n_k} BER={s.ber:.3e} FER={s.fer:.3e}",
                  file=sys.stderr)

    if args.trace:
        summaries = _run_traced(cfg, args.trace, progress)
    else:
        summaries = run_sweep(cfg, progress=progress)

    text = emit_results(summaries, cfg.format, cfg.out, cfg)
    if cfg.out is None:
        sys.stdout.write(text)

    total = sum(s.trials for s in summaries)
    aborted = sum(s.aborted_trials for s in summaries)
    if aborted / total > cfg.abort_threshold:
        print(f"decoder aborted in {aborted}/{total} trials", file=sys.stderr)
        return EXIT_ABORTS
    return 0


def _run_traced(cfg, path, progress):
    from .harness import run_trial, summarize, sweep_points

    summaries = []
    with open(path, "w") as fh:
        for point in sweep_points(cfg):
            records = []
            for i in range(cfg.trials):
                fh.write(json.dumps({"point": point.index, "trial": i}) + "\n")
                records.append(run_trial(cfg, i, point, trace=fh))
            summaries.append(summarize(cfg, point, records))
            progress(summaries[-1])
    return summaries


if __name__ == "__main__":
    sys.exit(main())

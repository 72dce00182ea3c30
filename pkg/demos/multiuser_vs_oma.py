"""
Multi-user gain over orthogonal access
======================================

At a fixed Eb/N0, compare BER against sum rate for joint decoding of two and
four users with the orthogonal baseline, where each user gets its own slice
of the channel uses. 500 trials per point give the shape; the acceptance
tests use 5000 per point.
"""

from musrldpc.harness import ExperimentConfig, max_rate_below, run_sweep

rates = [0.775, 0.825, 0.875, 0.925]
trials = 500

for label, mode, users in [("OMA", "oma-baseline", 1), ("K=2", "single-cell", 2),
                           ("K=4", "single-cell", 4)]:
    cfg = ExperimentConfig(mode=mode, users=users, ebn0_db=[4.5], sum_rate=rates,
                           trials=trials, seed=1)
    summaries = run_sweep(cfg)
    row = "  ".join(f"{s.value:.3f}:{s.ber:.1e}" for s in summaries)
    print(f"{label:4s} {row}   max rate at BER<=1e-2: {max_rate_below(summaries, 1e-2)}")

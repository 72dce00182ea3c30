"""
Cell-free decoding with overlapping access points
=================================================

Two access points each hear two of three users; the middle user is heard by
both. Every AP keeps its own residual, and the middle user's two effective
observations are merged with inverse-variance weights, which is why it sees
fewer errors than the users heard by only one AP.
"""

import numpy as np

from musrldpc.amp import combine_effective_observations
from musrldpc.harness import ExperimentConfig, run_sweep

# the merged variance is below either input
r, w, tau2 = combine_effective_observations([np.zeros(3), np.ones(3)], [1.0, 3.0])
print("weights", w, "combined variance", tau2)

topology = {"aps": 2, "users": 3, "edges": [[0, 0], [0, 1], [1, 1], [1, 2]]}
cfg = ExperimentConfig(mode="cell-free", topology=topology, channel_uses=560,
                       ebn0_db=[1.0, 2.0, 3.0], trials=200, seed=1)
for s in run_sweep(cfg):
    ber = np.array(s.user_bit_errors) / s.user_bits[0]
    print(f"Eb/N0 {s.ebn0_db:.0f} dB  UE0 {ber[0]:.2e}  UE1 {ber[1]:.2e}  UE2 {ber[2]:.2e}")

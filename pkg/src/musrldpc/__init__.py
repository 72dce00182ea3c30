"""Multi-user sparse-regression LDPC codes with joint AMP-BP decoding."""

from .amp import (UserCodebook, combine_effective_observations, decode_cell_free,
                  decode_single_cell, section_posterior)
from .channel import Topology, ebn0_to_sigma2, sum_capacity_bound
from .galois import make_field
from .harness import ExperimentConfig, emit_results, run_sweep, run_trial
from .nbldpc import LdpcCode, build_ldpc, ldpc_encode, syndrome
from .srldpc import SensingMatrix, sr_encode, to_sparse

__version__ = "0.1.0"

__all__ = [
    "UserCodebook", "combine_effective_observations", "decode_cell_free", "decode_single_cell",
    "section_posterior", "Topology", "ebn0_to_sigma2", "sum_capacity_bound", "make_field",
    "ExperimentConfig", "emit_results", "run_sweep", "run_trial", "LdpcCode", "build_ldpc",
    "ldpc_encode", "syndrome", "SensingMatrix", "sr_encode", "to_sparse",
]

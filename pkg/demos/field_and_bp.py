"""
Finite-field arithmetic and belief propagation on a small code
===============================================================

Build GF(16), construct a short non-binary LDPC code, and watch one round of
belief propagation clean up noisy symbol beliefs.
"""

import numpy as np

from musrldpc.galois import make_field
from musrldpc.nbldpc import bp_denoiser_round, build_ldpc, code_to_text, ldpc_encode, syndrome

F = make_field(4)
print("q =", F.q, "modulus =", bin(F.modulus))
print("3 * 7 =", F.mul(3, 7), "  inverse of 9 =", F.inv(9), "  5 + 12 =", F.add(5, 12))

# every nonzero element times its inverse is one
nz = np.arange(1, F.q)
assert (F.mul(nz, F.inv(nz)) == 1).all()

###############################################################################
# A rate-7/8 code with 64 symbols, column weight 3

code = build_ldpc(F, L=64, M=8, variable_degree=3, seed=0)
print(f"L={code.L}, M={code.M}, K={code.K_sym}, rate={code.rate:.3f}")
print(code_to_text(code).splitlines()[1])

rng = np.random.default_rng(1)
v = ldpc_encode(code, rng.integers(0, F.q, size=code.K_sym))
print("syndrome of a codeword:", syndrome(code, v))

###############################################################################
# Noisy beliefs: the true symbol holds 0.9 of the mass, except in six sections
# where a wrong symbol is made the favourite.

priors = np.full((code.L, F.q), 0.1 / (F.q - 1))
priors[np.arange(code.L), v] = 0.9
bad = rng.choice(code.L, size=6, replace=False)
priors[bad] = 0.2 / (F.q - 2)
priors[bad, v[bad]] = 0.3
priors[bad, (v[bad] + 1) % F.q] = 0.5

for iters in (0, 1, 3):
    beliefs = bp_denoiser_round(code, priors, iterations=iters)
    errors = (beliefs.argmax(axis=1) != v).sum()
    print(f"{iters} BP iteration(s): {errors} symbol errors")

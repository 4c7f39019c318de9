"""
Mountain ranges over committee leaves
=====================================

A horizon of ``N`` epochs is covered by perfect trees whose sizes are the
binary digits of ``N``. Their roots, the peaks, are what provers claim.
"""

import numpy as np

from popos.merkle import decompose, make_mmr, mmr_locate, verify_proof

mr = make_mmr([bytes([k]) * 4 for k in range(6)])
print("tree sizes:", mr.sizes)
print("layout:", [mr.locate(g) for g in range(6)])

# %%
# Peak count equals the number of set bits.
ns = np.arange(1, 4097)
peaks = np.array([len(decompose(int(n))) for n in ns])
bits = np.array([bin(int(n)).count("1") for n in ns])
print("popcount law holds:", bool((peaks == bits).all()), "max peaks:", peaks.max())

# %%
# An inclusion proof for global leaf 4 lives in the second tree.
tree, proof = mr.prove(4)
print("tree", tree, "local", mmr_locate(6, 4)[1], "proof depth", proof.depth)
print("verifies:", verify_proof(proof, mr.peaks[tree], mr.sizes[tree], 0, bytes([4]) * 4))

# %%
# Wider trees trade shallower proofs for more siblings per level.
for d in (2, 4, 16, 100):
    m = make_mmr([bytes([k % 256]) for k in range(1000)], d)
    t, p = m.prove(999 - 8)
    print(f"d={d:3d} depth={p.depth} siblings={sum(len(g) for g in p.siblings)}")

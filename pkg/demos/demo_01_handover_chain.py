"""
Committees, handovers and a spliced history
===========================================

Each epoch has a sync committee. The committee of epoch ``j - 1`` inaugurates
the one of epoch ``j`` by signing it. A spliced trace keeps an honest prefix and
continues with a foreign history, and its first foreign handover fails.
"""

from popos.chainsim import gen_trace, splice, threshold, validate_trace, verify_handover

# eight epochs, committees of six, four signers per handover (more than half)
honest = gen_trace(8, 6, threshold(6) + 1, seed=1)
other = gen_trace(8, 6, threshold(6) + 1, seed=2)
print(honest.genesis)
print("honest trace first invalid epoch:", validate_trace(honest))

# %%
# Graft the foreign history from epoch 5 onwards.
forged = splice(honest, other, 5)
print("forged trace first invalid epoch:", validate_trace(forged, honest.genesis))
print("handover 5 verifies:", verify_handover(honest.committees[4], 5, forged.committees[5], forged.handovers[5]))

# %%
# Commitments track the account state at the start of each epoch.
for e in (0, 3, 7):
    print(e, honest.commitments[e].hex()[:16], sum(honest.ledger.state_at(e).values()))

"""
Tournament among eight provers
==============================

One honest prover and seven adversaries, each splicing at a random epoch.
The champion plays each challenger with a different commitment. A loss means
elimination.
"""

from popos.bench import Topology, build_sessions, make_traces
from popos.clients import connect
from popos.protocol import VerifierContext, tournament, verify_outcome_state_security
from popos.transport import Meter

honest, alts = make_traces(256, 16, seed=7, alts=3)
sessions, points = build_sessions(honest, alts, Topology(1, 7), seed=7)
print("provers:", [s.name for s in sessions])

meter = Meter()
result = tournament(VerifierContext(256, honest.genesis), connect(sessions, meter=meter))
for g in result.games:
    print(f"{g.outcome.name:9} epoch={g.epoch} rounds={g.open_rounds}  {g.reason}")

# %%
print("survivors:", result.survivors)
print("honest commitment accepted:", result.commitment == honest.commitment)
print("state security:", verify_outcome_state_security(result.commitment, honest.ledger, honest.n))
print(f"download {meter.bytes_in} B, upload {meter.bytes_out} B, simulated {meter.elapsed_ms:.0f} ms")

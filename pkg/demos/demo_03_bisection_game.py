"""
A single bisection game
=======================

Two provers disagree about the history. The verifier walks down the first
tree whose peaks differ. Only one child pair is expanded per level. At the
leaf it checks the handover that links the previous committee to the
disputed one.
"""

import logging

from popos.chainsim import gen_trace, splice
from popos.clients import connect
from popos.protocol import ProverSession, VerifierContext, bisection_game, peaks_first_disagreement
from popos.transport import Meter
from popos.wire import ClaimMode, ClaimRequest

logging.basicConfig(level=logging.INFO, format="%(name)s: %(message)s")

honest = gen_trace(40, 8, 5, seed=3)
adversary = splice(honest, gen_trace(40, 8, 5, seed=4), 37)

meter = Meter(keep_transcript=True)
a, b = connect([ProverSession(honest, 2, "honest"), ProverSession(adversary, 2, "adversary")], meter=meter)
ctx = VerifierContext(40, honest.genesis)
ca = a.request(ClaimRequest(ClaimMode.FULL)).claim
cb = b.request(ClaimRequest(ClaimMode.FULL)).claim
tree = peaks_first_disagreement(ca.peaks, cb.peaks)
print("tree sizes", ctx.sizes, "first differing peak", tree)

# %%
outcome = bisection_game(ctx, a, b, ca, cb, tree)
print(outcome.outcome.name, "at epoch", outcome.epoch, "after", outcome.open_rounds, "open rounds")
print("reason:", outcome.reason)

# %%
# Every frame exchanged, by direction and size.
for peer, direction, frame in meter.transcript:
    print(f"{peer:>9} {direction:>4} tag=0x{frame[4]:02x} {len(frame):6d} B")

"""
Balances after synchronisation
==============================

With a commitment accepted, single balances can be checked against it. A
present account comes with one inclusion proof. An absent one comes with
proofs for its two sorted neighbours.
"""

from popos.chainsim import gen_trace
from popos.clients import query_balance
from popos.protocol import ProtocolViolation, ProverSession
from popos.transport import Meter, SimLink
from popos.wire import AccountEntry, BalanceResponse

trace = gen_trace(12, 8, 5, seed=9, accounts=10)
link = SimLink(ProverSession(trace), "prover", Meter())
state = trace.ledger.state_at(trace.n - 1)

for account in sorted(state)[:3]:
    print(account, query_balance(trace.commitment, account, link), "expected", state[account])
print("absent:", query_balance(trace.commitment, max(state) + 1, link))


# %%
# A prover inflating a balance is caught.
class Inflating(ProverSession):
    def balance(self, account):
        r = super().balance(account)
        e = r.entries[0]
        return BalanceResponse(r.present, (AccountEntry(e.account, e.balance * 2 + 1, e.proof),))


try:
    query_balance(trace.commitment, min(state), SimLink(Inflating(trace), "liar", Meter()))
except ProtocolViolation as exc:
    print("rejected:", exc)

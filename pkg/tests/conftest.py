from __future__ import annotations

import pytest

from popos.chainsim import gen_trace, splice
from popos.clients import connect
from popos.protocol import ProverSession
from popos.transport import Meter


@pytest.fixture(scope="session")
def pair16():
    """Honest and alternative traces, N=16, m=8."""
    return gen_trace(16, 8, 5, seed=1), gen_trace(16, 8, 5, seed=2)


@pytest.fixture(scope="session")
def pair64():
    return gen_trace(64, 8, 5, seed=11), gen_trace(64, 8, 5, seed=12)


def spliced(honest, alt, at):
    return splice(honest, alt, at)


def sim_links(traces, d=2, meter=None, names=None):
    sessions = [ProverSession(t, d, (names or {}).get(k, f"p{k}")) for k, t in enumerate(traces)]
    return connect(sessions, meter=meter or Meter())


def sample_messages(trace):
    """One instance of every wire message, built from ``trace``."""
    from popos.protocol import ProverSession, balance_response
    from popos.wire import (
        BalanceRequest,
        Children,
        ClaimMode,
        ClaimRequest,
        CommitteeBatch,
        CommitteeRangeRequest,
        Error,
        HandoverReveal,
        HashBatch,
        HashRangeRequest,
        LeafKind,
        LeafRequest,
        LeafReveal,
        Open,
        Outcome,
        PrevLeafReveal,
        Verdict,
    )

    s = ProverSession(trace, 2)
    st = trace.ledger.state_at(trace.n - 1)
    msgs = [ClaimRequest(mode) for mode in ClaimMode]
    msgs += [s.respond(ClaimRequest(mode)) for mode in ClaimMode]
    msgs += [
        Open(0, ()),
        Open(1, (1, 0, 1)),
        Children(tuple(s.children(0, []))),
        LeafRequest(LeafKind.PREV, 3),
        LeafReveal(trace.committees[3]),
        PrevLeafReveal(*s.prev_leaf(3)),
        HandoverReveal(trace.handovers[3]),
        Verdict(Outcome.WIN_B, 3),
        Verdict(Outcome.BOTH_LOSE, -1),
        HashRangeRequest(2, 5),
        HashBatch(tuple(trace.leaf_digests[2:7])),
        CommitteeRangeRequest(1, 2),
        CommitteeBatch(tuple(zip(trace.committees[1:3], trace.handovers[1:3]))),
        BalanceRequest(7),
        balance_response(st, min(st)),
        balance_response(st, max(st) + 1),
        Error("no such epoch"),
    ]
    return msgs

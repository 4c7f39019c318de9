"""Proof of proof-of-stake bootstrapping: traces, bisection games and light clients."""

from .chainsim import ExecutionTrace, SyncCommittee, gen_trace, splice
from .clients import ClientConfig, SyncReport, olc_sync, slc_sync, tlc_sync
from .protocol import ProverSession, VerifierContext, bisection_game, tournament

__all__ = [
    "ClientConfig",
    "ExecutionTrace",
    "ProverSession",
    "SyncCommittee",
    "SyncReport",
    "VerifierContext",
    "bisection_game",
    "gen_trace",
    "olc_sync",
    "slc_sync",
    "splice",
    "tlc_sync",
    "tournament",
]

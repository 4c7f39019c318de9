"""Misbehaving prover sessions used to exercise the verifier.

A splice adversary needs no class of its own: it is an ordinary
:class:`~popos.protocol.ProverSession` over a spliced trace.
"""

from __future__ import annotations

from typing import Sequence

from .crypto import Digest, hash_bytes
from .merkle import MountainRange
from .protocol import ProverSession
from .wire import Children, ClaimMode, Claim, LeafKind, LeafRequest, Message


class MalformedChildrenSession(ProverSession):
    """Returns children that do not hash to the opened node."""

    def children(self, tree: int, path: Sequence[int]) -> list[Digest]:
        seed = tree.to_bytes(4, "big") + bytes(path)
        return [hash_bytes(b"junk" + seed + bytes([k])) for k in range(self.d)]


class SilentSession(ProverSession):
    """Stops answering after ``answer`` requests."""

    def __init__(self, trace, d=2, name="silent", answer: int = 0):
        super().__init__(trace, d, name)
        self.answer = answer
        self.seen = 0

    def handle(self, frame: bytes) -> bytes | None:
        self.seen += 1
        if self.seen > self.answer:
            return None
        return super().handle(frame)


class WrongSizeSession(ProverSession):
    """Claims a mountain range over ``extra`` more leaves than the horizon."""

    def __init__(self, trace, d=2, name="wrong-size", extra: int = 1):
        super().__init__(trace, d, name)
        digests = list(trace.leaf_digests) + [hash_bytes(b"pad" + bytes([k])) for k in range(extra)]
        self.mmr = MountainRange(digests, d)

    def claim(self, mode: ClaimMode) -> Claim:
        honest = super().claim(mode)
        return Claim(honest.commitment, tuple(self.mmr.peaks), honest.latest, honest.latest_proof, honest.signatures)


class OverreachSession(ProverSession):
    """Keeps answering with children once the verifier expects a committee."""

    def respond(self, msg: Message) -> Message | None:
        if isinstance(msg, LeafRequest) and msg.kind == LeafKind.LEAF:
            return Children(tuple(hash_bytes(b"deeper" + bytes([k])) for k in range(self.d)))
        return super().respond(msg)

"""Typed protocol messages and their canonical byte encodings.

Frame layout: 4-byte big-endian payload length, 1-byte tag, payload.  All
integers are big-endian.  Tags 0x01-0x09 carry the bisection game; the
higher tags serve the linear clients and balance queries.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import ClassVar

from .chainsim import HandoverProof, SyncCommittee, decode_sig_list, encode_sig_list
from .crypto import HASH_SIZE, PK_SIZE, Digest
from .merkle import MerkleProof

HEADER = struct.Struct(">IB")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 1 << 31


class WireError(ValueError):
    """Bytes that do not decode to a well-formed message."""


class Tag(IntEnum):
    CLAIM_REQUEST = 0x01
    CLAIM_RESPONSE = 0x02
    OPEN = 0x03
    CHILDREN = 0x04
    LEAF_REQUEST = 0x05
    LEAF_REVEAL = 0x06
    PREV_LEAF_REVEAL = 0x07
    HANDOVER_REVEAL = 0x08
    VERDICT = 0x09
    HASH_RANGE_REQUEST = 0x0A
    HASH_BATCH = 0x0B
    COMMITTEE_RANGE_REQUEST = 0x0C
    COMMITTEE_BATCH = 0x0D
    BALANCE_REQUEST = 0x0E
    BALANCE_RESPONSE = 0x0F
    ERROR = 0x10


class ClaimMode(IntEnum):
    COMMITMENT = 0  # state commitment only
    FULL = 1  # + peaks, latest committee, its proof, commitment signatures
    LATEST = 2  # + latest committee, commitment signatures
    SIGNED = 3  # + commitment signatures


class LeafKind(IntEnum):
    LEAF = 0  # committee at epoch j
    PREV = 1  # committee at epoch j-1 with its inclusion proof
    HANDOVER = 2  # handover proof inaugurating epoch j


class Outcome(IntEnum):
    WIN_A = 0
    WIN_B = 1
    BOTH_LOSE = 2


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise WireError("truncated message")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def digest(self) -> Digest:
        return self.take(HASH_SIZE)

    def digests(self, count: int) -> list[Digest]:
        raw = self.take(count * HASH_SIZE)
        return [raw[k : k + HASH_SIZE] for k in range(0, len(raw), HASH_SIZE)]

    def committee(self) -> SyncCommittee:
        m = self.u32()
        epoch = self.u64()
        raw = self.take(m * PK_SIZE)
        return SyncCommittee(epoch, tuple(raw[k : k + PK_SIZE] for k in range(0, len(raw), PK_SIZE)))

    def proof(self) -> MerkleProof:
        index, size, degree, depth = self.u64(), self.u64(), self.u16(), self.u8()
        if degree < 2:
            raise WireError("proof degree below 2")
        groups = tuple(tuple(self.digests(degree - 1)) for _ in range(depth))
        return MerkleProof(index, size, degree, groups)

    def sigs(self) -> tuple[tuple[int, bytes], ...]:
        try:
            sigs, self.pos = decode_sig_list(self.data, self.pos)
        except ValueError as exc:
            raise WireError(str(exc)) from None
        return sigs

    def handover(self) -> HandoverProof:
        epoch = self.u64()
        return HandoverProof(epoch, self.sigs())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise WireError("trailing bytes in message")


def enc_committee(c: SyncCommittee) -> bytes:
    return struct.pack(">I", c.m) + c.encode()


def enc_proof(p: MerkleProof) -> bytes:
    return struct.pack(">QQHB", p.index, p.size, p.degree, p.depth) + b"".join(
        b"".join(group) for group in p.siblings
    )


def enc_handover(h: HandoverProof) -> bytes:
    return h.epoch.to_bytes(8, "big") + encode_sig_list(h.signatures)


# -- messages ------------------------------------------------------------------


class Message:
    TAG: ClassVar[Tag]

    def payload(self) -> bytes:
        raise NotImplementedError

    @classmethod
    def parse(cls, r: _Reader) -> Message:
        raise NotImplementedError

    def frame(self) -> bytes:
        body = self.payload()
        return HEADER.pack(len(body), self.TAG) + body


@dataclass(frozen=True)
class ClaimRequest(Message):
    TAG = Tag.CLAIM_REQUEST
    mode: ClaimMode = ClaimMode.COMMITMENT

    def payload(self) -> bytes:
        return bytes([self.mode])

    @classmethod
    def parse(cls, r):
        try:
            return cls(ClaimMode(r.u8()))
        except ValueError as exc:
            raise WireError(str(exc)) from None


@dataclass(frozen=True)
class Claim:
    """What a prover asserts about the latest epoch."""

    commitment: Digest
    peaks: tuple[Digest, ...] = ()
    latest: SyncCommittee | None = None
    latest_proof: MerkleProof | None = None
    signatures: tuple[tuple[int, bytes], ...] = ()

    def for_mode(self, mode: ClaimMode) -> Claim:
        """The fields a response in ``mode`` carries; the rest are dropped."""
        full = mode == ClaimMode.FULL
        return Claim(
            self.commitment,
            self.peaks if full else (),
            self.latest if mode in (ClaimMode.FULL, ClaimMode.LATEST) else None,
            self.latest_proof if full else None,
            self.signatures if mode != ClaimMode.COMMITMENT else (),
        )


@dataclass(frozen=True)
class ClaimResponse(Message):
    TAG = Tag.CLAIM_RESPONSE
    mode: ClaimMode
    claim: Claim

    def payload(self) -> bytes:
        c = self.claim
        out = [bytes([self.mode]), c.commitment]
        if self.mode == ClaimMode.FULL:
            out.append(bytes([len(c.peaks)]))
            out.extend(c.peaks)
        if self.mode in (ClaimMode.FULL, ClaimMode.LATEST):
            out.append(enc_committee(c.latest))
        if self.mode == ClaimMode.FULL:
            out.append(enc_proof(c.latest_proof))
        if self.mode != ClaimMode.COMMITMENT:
            out.append(encode_sig_list(c.signatures))
        return b"".join(out)

    @classmethod
    def parse(cls, r):
        try:
            mode = ClaimMode(r.u8())
        except ValueError as exc:
            raise WireError(str(exc)) from None
        commitment = r.digest()
        peaks: tuple[Digest, ...] = ()
        latest = proof = None
        sigs: tuple[tuple[int, bytes], ...] = ()
        if mode == ClaimMode.FULL:
            peaks = tuple(r.digests(r.u8()))
        if mode in (ClaimMode.FULL, ClaimMode.LATEST):
            latest = r.committee()
        if mode == ClaimMode.FULL:
            proof = r.proof()
        if mode != ClaimMode.COMMITMENT:
            sigs = r.sigs()
        return cls(mode, Claim(commitment, peaks, latest, proof, sigs))


@dataclass(frozen=True)
class Open(Message):
    """Ask for the children of the node reached by ``path`` in tree ``tree``."""

    TAG = Tag.OPEN
    tree: int
    path: tuple[int, ...]

    def payload(self) -> bytes:
        return struct.pack(">IB", self.tree, len(self.path)) + b"".join(struct.pack(">H", c) for c in self.path)

    @classmethod
    def parse(cls, r):
        tree, depth = r.u32(), r.u8()
        return cls(tree, tuple(r.u16() for _ in range(depth)))


@dataclass(frozen=True)
class Children(Message):
    TAG = Tag.CHILDREN
    digests: tuple[Digest, ...]

    def payload(self) -> bytes:
        return struct.pack(">H", len(self.digests)) + b"".join(self.digests)

    @classmethod
    def parse(cls, r):
        return cls(tuple(r.digests(r.u16())))


@dataclass(frozen=True)
class LeafRequest(Message):
    TAG = Tag.LEAF_REQUEST
    kind: LeafKind
    epoch: int

    def payload(self) -> bytes:
        return struct.pack(">BQ", self.kind, self.epoch)

    @classmethod
    def parse(cls, r):
        try:
            kind = LeafKind(r.u8())
        except ValueError as exc:
            raise WireError(str(exc)) from None
        return cls(kind, r.u64())


@dataclass(frozen=True)
class LeafReveal(Message):
    TAG = Tag.LEAF_REVEAL
    committee: SyncCommittee

    def payload(self) -> bytes:
        return enc_committee(self.committee)

    @classmethod
    def parse(cls, r):
        return cls(r.committee())


@dataclass(frozen=True)
class PrevLeafReveal(Message):
    TAG = Tag.PREV_LEAF_REVEAL
    committee: SyncCommittee
    proof: MerkleProof

    def payload(self) -> bytes:
        return enc_committee(self.committee) + enc_proof(self.proof)

    @classmethod
    def parse(cls, r):
        return cls(r.committee(), r.proof())


@dataclass(frozen=True)
class HandoverReveal(Message):
    TAG = Tag.HANDOVER_REVEAL
    handover: HandoverProof

    def payload(self) -> bytes:
        return enc_handover(self.handover)

    @classmethod
    def parse(cls, r):
        return cls(r.handover())


@dataclass(frozen=True)
class Verdict(Message):
    TAG = Tag.VERDICT
    outcome: Outcome
    epoch: int = -1

    def payload(self) -> bytes:
        return struct.pack(">Bq", self.outcome, self.epoch)

    @classmethod
    def parse(cls, r):
        try:
            outcome = Outcome(r.u8())
        except ValueError as exc:
            raise WireError(str(exc)) from None
        return cls(outcome, int.from_bytes(r.take(8), "big", signed=True))


@dataclass(frozen=True)
class HashRangeRequest(Message):
    TAG = Tag.HASH_RANGE_REQUEST
    start: int
    count: int

    def payload(self) -> bytes:
        return struct.pack(">QI", self.start, self.count)

    @classmethod
    def parse(cls, r):
        return cls(r.u64(), r.u32())


@dataclass(frozen=True)
class HashBatch(Message):
    TAG = Tag.HASH_BATCH
    digests: tuple[Digest, ...]

    def payload(self) -> bytes:
        return struct.pack(">I", len(self.digests)) + b"".join(self.digests)

    @classmethod
    def parse(cls, r):
        return cls(tuple(r.digests(r.u32())))


@dataclass(frozen=True)
class CommitteeRangeRequest(Message):
    TAG = Tag.COMMITTEE_RANGE_REQUEST
    start: int
    count: int

    def payload(self) -> bytes:
        return struct.pack(">QI", self.start, self.count)

    @classmethod
    def parse(cls, r):
        return cls(r.u64(), r.u32())


@dataclass(frozen=True)
class CommitteeBatch(Message):
    """Committees with the handover proofs inaugurating them."""

    TAG = Tag.COMMITTEE_BATCH
    entries: tuple[tuple[SyncCommittee, HandoverProof], ...]

    def payload(self) -> bytes:
        out = [struct.pack(">I", len(self.entries))]
        for c, h in self.entries:
            out.append(enc_committee(c))
            out.append(enc_handover(h))
        return b"".join(out)

    @classmethod
    def parse(cls, r):
        return cls(tuple((r.committee(), r.handover()) for _ in range(r.u32())))


@dataclass(frozen=True)
class BalanceRequest(Message):
    TAG = Tag.BALANCE_REQUEST
    account: int

    def payload(self) -> bytes:
        return self.account.to_bytes(8, "big")

    @classmethod
    def parse(cls, r):
        return cls(r.u64())


@dataclass(frozen=True)
class AccountEntry:
    account: int
    balance: int
    proof: MerkleProof


@dataclass(frozen=True)
class BalanceResponse(Message):
    """One entry when the account is present, otherwise its sorted neighbours."""

    TAG = Tag.BALANCE_RESPONSE
    present: bool
    entries: tuple[AccountEntry, ...]

    def payload(self) -> bytes:
        out = [struct.pack(">BB", int(self.present), len(self.entries))]
        for e in self.entries:
            out.append(struct.pack(">QQ", e.account, e.balance))
            out.append(enc_proof(e.proof))
        return b"".join(out)

    @classmethod
    def parse(cls, r):
        present, count = r.u8(), r.u8()
        return cls(bool(present), tuple(AccountEntry(r.u64(), r.u64(), r.proof()) for _ in range(count)))


@dataclass(frozen=True)
class Error(Message):
    TAG = Tag.ERROR
    reason: str

    def payload(self) -> bytes:
        return self.reason.encode()

    @classmethod
    def parse(cls, r):
        return cls(r.take(len(r.data) - r.pos).decode(errors="replace"))


MESSAGES: dict[int, type[Message]] = {
    cls.TAG: cls
    for cls in (
        ClaimRequest,
        ClaimResponse,
        Open,
        Children,
        LeafRequest,
        LeafReveal,
        PrevLeafReveal,
        HandoverReveal,
        Verdict,
        HashRangeRequest,
        HashBatch,
        CommitteeRangeRequest,
        CommitteeBatch,
        BalanceRequest,
        BalanceResponse,
        Error,
    )
}


def decode_payload(tag: int, payload: bytes) -> Message:
    try:
        cls = MESSAGES[tag]
    except KeyError:
        raise WireError(f"unknown message tag 0x{tag:02x}") from None
    r = _Reader(payload)
    msg = cls.parse(r)
    r.done()
    return msg


def decode_frame(frame: bytes) -> Message:
    if len(frame) < HEADER_SIZE:
        raise WireError("frame shorter than header")
    length, tag = HEADER.unpack_from(frame)
    if length != len(frame) - HEADER_SIZE:
        raise WireError("frame length mismatch")
    return decode_payload(tag, frame[HEADER_SIZE:])

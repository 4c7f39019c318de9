"""Simulated proof-of-stake execution.

An :class:`ExecutionTrace` holds everything a prover knows: the sync committee
of every epoch, the handover proof inaugurating it, and the state commitment
signed by each committee at the start of its epoch.  Account state is a plain
``dict`` from integer account id to non-negative balance.
"""

from __future__ import annotations

import json
import logging
import random
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import crypto
from .crypto import HASH_SIZE, PK_SIZE, SIG_SIZE, Digest, EpochKeyRegistry
from .merkle import (
    MerkleProof,
    MerkleTree,
    leaf_digest,
    node_digest,
    prove,
    verify_proof,
)

log = logging.getLogger(__name__)

State = dict[int, int]
VerifyFn = Callable[[bytes, bytes, bytes], bool]

TRACE_MAGIC = b"POPS"
TRACE_VERSION = 1


def threshold(m: int) -> int:
    """Minimum number of signatures that is more than half of ``m``."""
    return m // 2 + 1


# -- committees and handovers ------------------------------------------------


@dataclass(frozen=True)
class SyncCommittee:
    epoch: int
    keys: tuple[bytes, ...] = field(repr=False)

    @property
    def m(self) -> int:
        return len(self.keys)

    def encode(self) -> bytes:
        """Leaf encoding: 8-byte big-endian epoch followed by the keys in order."""
        return self.epoch.to_bytes(8, "big") + b"".join(self.keys)

    @classmethod
    def decode(cls, data: bytes, key_size: int = PK_SIZE) -> SyncCommittee:
        if len(data) < 8 or (len(data) - 8) % key_size:
            raise ValueError("malformed committee encoding")
        epoch = int.from_bytes(data[:8], "big")
        body = data[8:]
        return cls(epoch, tuple(body[k : k + key_size] for k in range(0, len(body), key_size)))

    @cached_property
    def digest(self) -> Digest:
        return leaf_digest(self.encode())

    def __repr__(self) -> str:
        return f"SyncCommittee(epoch={self.epoch}, m={self.m}, digest={self.digest.hex()[:12]}..)"


def handover_message(j: int, committee: SyncCommittee) -> bytes:
    """Bytes signed by the epoch ``j-1`` committee to inaugurate ``committee``."""
    return j.to_bytes(8, "big") + b"".join(committee.keys)


@dataclass(frozen=True)
class HandoverProof:
    epoch: int
    signatures: tuple[tuple[int, bytes], ...]

    def __len__(self) -> int:
        return len(self.signatures)


def check_signature_set(
    committee: SyncCommittee,
    message: bytes,
    signatures: Sequence[tuple[int, bytes]],
    verify: VerifyFn = crypto.verify,
) -> bool:
    """More than half of ``committee`` signed ``message``, each member at most once.

    Every listed signature must be valid; a single bad entry rejects the set.
    """
    m = committee.m
    if m == 0 or len(signatures) < threshold(m):
        return False
    seen = set()
    for idx, _ in signatures:
        if not 0 <= idx < m or idx in seen:
            return False
        seen.add(idx)
    return all(verify(committee.keys[idx], message, sig) for idx, sig in signatures)


def verify_handover(
    prev: SyncCommittee,
    j: int,
    nxt: SyncCommittee,
    sigma: HandoverProof,
    verify: VerifyFn = crypto.verify,
) -> bool:
    if sigma.epoch != j or nxt.epoch != j or nxt.m != prev.m:
        return False
    return check_signature_set(prev, handover_message(j, nxt), sigma.signatures, verify)


def verify_commitment(
    committee: SyncCommittee,
    commitment: Digest,
    signatures: Sequence[tuple[int, bytes]],
    verify: VerifyFn = crypto.verify,
) -> bool:
    if len(commitment) != HASH_SIZE:
        return False
    return check_signature_set(committee, commitment, signatures, verify)


# -- account state -------------------------------------------------------------


@dataclass(frozen=True)
class Transaction:
    sender: int
    receiver: int
    amount: int


class TransactionError(ValueError):
    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"tx {index}: {message}")
        self.index = index


def apply_tx(st: State, tx: Transaction) -> State:
    """Return the state after ``tx``; ``st`` is never modified."""
    if tx.amount < 0:
        raise TransactionError("negative amount")
    if st.get(tx.sender, 0) < tx.amount:
        raise TransactionError(f"insufficient balance in account {tx.sender}")
    new = dict(st)
    new[tx.sender] = new.get(tx.sender, 0) - tx.amount
    new[tx.receiver] = new.get(tx.receiver, 0) + tx.amount
    return new


def apply_all(st0: State, txs: Iterable[Transaction]) -> State:
    st = dict(st0)
    for i, tx in enumerate(txs):
        try:
            st = apply_tx(st, tx)
        except TransactionError as exc:
            raise TransactionError(str(exc), i) from None
    return st


def encode_account(account: int, balance: int) -> bytes:
    return account.to_bytes(8, "big") + balance.to_bytes(8, "big")


def state_tree(st: State) -> MerkleTree:
    if not st:
        raise ValueError("cannot commit to an empty state")
    return MerkleTree.from_leaves([encode_account(a, st[a]) for a in sorted(st)], 2)


def commit(st: State) -> Digest:
    return state_tree(st).root


@dataclass(frozen=True)
class AccountProof:
    account: int
    balance: int
    proof: MerkleProof

    def verify(self, root: Digest) -> bool:
        p = self.proof
        return p.degree == 2 and verify_proof(
            p, root, p.size, p.index, encode_account(self.account, self.balance)
        )


@dataclass(frozen=True)
class AuxProof:
    sender: AccountProof
    receiver: AccountProof


def account_proof(st: State, account: int, tree: MerkleTree | None = None) -> AccountProof:
    order = sorted(st)
    tree = tree or state_tree(st)
    i = order.index(account)
    return AccountProof(account, st[account], prove(tree, i))


def gen_aux(st: State, tx: Transaction) -> AuxProof:
    for a in (tx.sender, tx.receiver):
        if a not in st:
            raise KeyError(f"account {a} absent; succinct transfers need existing accounts")
    tree = state_tree(st)
    return AuxProof(account_proof(st, tx.sender, tree), account_proof(st, tx.receiver, tree))


def _fold_with(proof: MerkleProof, leaf: Digest, substitute: dict[tuple[int, int], Digest]) -> Digest:
    # substitute maps (level, position) -> updated node digest
    d = proof.degree
    h = leaf
    pos = proof.index
    for level, group in enumerate(proof.siblings):
        k = pos % d
        start = pos - k
        nodes = list(group[:k]) + [h] + list(group[k:])
        for off in range(d):
            if off != k and (level, start + off) in substitute:
                nodes[off] = substitute[(level, start + off)]
        h = node_digest(nodes)
        pos //= d
    return h


def _path_nodes(proof: MerkleProof, leaf: Digest) -> dict[tuple[int, int], Digest]:
    d = proof.degree
    out = {(0, proof.index): leaf}
    h, pos = leaf, proof.index
    for level, group in enumerate(proof.siblings):
        k = pos % d
        h = node_digest(group[:k] + (h,) + group[k:])
        pos //= d
        out[(level + 1, pos)] = h
    return out


def succinct_apply(root: Digest, tx: Transaction, aux: AuxProof) -> Digest | None:
    """Commitment-level transition; None signals failure."""
    s, r = aux.sender, aux.receiver
    if s.account != tx.sender or r.account != tx.receiver:
        return None
    if s.proof.size != r.proof.size or not (s.verify(root) and r.verify(root)):
        return None
    if tx.amount < 0 or s.balance < tx.amount:
        return None
    if tx.sender == tx.receiver:
        return root
    if s.proof.index == r.proof.index:
        return None
    new_s = leaf_digest(encode_account(s.account, s.balance - tx.amount))
    new_r = leaf_digest(encode_account(r.account, r.balance + tx.amount))
    updated = _path_nodes(s.proof, new_s)
    return _fold_with(r.proof, new_r, updated)


# -- ledgers and traces ------------------------------------------------------------


@dataclass
class Ledger:
    """Genesis balances plus the transactions executed during each epoch."""

    genesis: State
    epoch_txs: list[tuple[Transaction, ...]] = field(default_factory=list)

    def state_at(self, epoch: int) -> State:
        """State at the start of ``epoch``: every transaction of earlier epochs applied."""
        txs = [tx for batch in self.epoch_txs[:epoch] for tx in batch]
        return apply_all(self.genesis, txs)

    def truncate(self, n: int) -> Ledger:
        return Ledger(dict(self.genesis), list(self.epoch_txs[:n]))

    def to_json(self) -> str:
        return json.dumps(
            {
                "genesis": {str(a): b for a, b in sorted(self.genesis.items())},
                "epochs": [[[t.sender, t.receiver, t.amount] for t in batch] for batch in self.epoch_txs],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> Ledger:
        raw = json.loads(text)
        return cls(
            {int(a): int(b) for a, b in raw["genesis"].items()},
            [tuple(Transaction(*t) for t in batch) for batch in raw["epochs"]],
        )


@dataclass
class ExecutionTrace:
    m: int
    committees: list[SyncCommittee]
    handovers: list[HandoverProof | None]
    commitments: list[Digest]
    commitment_sigs: list[tuple[tuple[int, bytes], ...]]
    honest: bool = True
    ledger: Ledger | None = None
    key_size: int = PK_SIZE

    @property
    def n(self) -> int:
        return len(self.committees)

    @property
    def genesis(self) -> SyncCommittee:
        return self.committees[0]

    @property
    def succession(self) -> list[HandoverProof]:
        return [h for h in self.handovers[1:] if h is not None]

    @cached_property
    def leaf_digests(self) -> list[Digest]:
        return [c.digest for c in self.committees]

    @property
    def commitment(self) -> Digest:
        """State commitment signed at the start of the latest epoch."""
        return self.commitments[-1]

    def truncate(self, n: int) -> ExecutionTrace:
        if not 1 <= n <= self.n:
            raise ValueError(f"cannot truncate a {self.n}-epoch trace to {n}")
        return ExecutionTrace(
            self.m,
            self.committees[:n],
            self.handovers[:n],
            self.commitments[:n],
            self.commitment_sigs[:n],
            self.honest,
            self.ledger.truncate(n) if self.ledger else None,
            self.key_size,
        )

    # -- file format --

    def to_bytes(self) -> bytes:
        out = [
            TRACE_MAGIC,
            bytes([TRACE_VERSION]),
            struct.pack(">QIH", self.n, self.m, self.key_size),
        ]
        for e in range(self.n):
            out.append(b"".join(self.committees[e].keys))
            sigma = self.handovers[e]
            out.append(encode_sig_list(sigma.signatures if sigma else ()))
            out.append(self.commitments[e])
            out.append(encode_sig_list(self.commitment_sigs[e]))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes, honest: bool = True) -> ExecutionTrace:
        if data[:4] != TRACE_MAGIC or len(data) < 19:
            raise ValueError("not a trace file")
        if data[4] != TRACE_VERSION:
            raise ValueError(f"unsupported trace version {data[4]}")
        n, m, ks = struct.unpack_from(">QIH", data, 5)
        pos = 19
        committees, handovers, commitments, csigs = [], [], [], []
        for e in range(n):
            keys = tuple(data[pos + k * ks : pos + (k + 1) * ks] for k in range(m))
            pos += m * ks
            committees.append(SyncCommittee(e, keys))
            sigs, pos = decode_sig_list(data, pos)
            handovers.append(HandoverProof(e, sigs) if e > 0 else None)
            commitments.append(data[pos : pos + HASH_SIZE])
            pos += HASH_SIZE
            sigs, pos = decode_sig_list(data, pos)
            csigs.append(sigs)
        if pos != len(data):
            raise ValueError("trailing bytes after trace")
        return cls(m, committees, handovers, commitments, csigs, honest, None, ks)

    def write(self, path: str | Path, ledger_path: str | Path | None = None) -> None:
        Path(path).write_bytes(self.to_bytes())
        if ledger_path is not None and self.ledger is not None:
            Path(ledger_path).write_text(self.ledger.to_json())

    @classmethod
    def read(cls, path: str | Path, ledger_path: str | Path | None = None, honest: bool = True) -> ExecutionTrace:
        trace = cls.from_bytes(Path(path).read_bytes(), honest)
        if ledger_path is not None:
            trace.ledger = Ledger.from_json(Path(ledger_path).read_text())
        return trace


_PAIR = struct.Struct(">I")


def encode_sig_list(sigs: Sequence[tuple[int, bytes]]) -> bytes:
    return _PAIR.pack(len(sigs)) + b"".join(_PAIR.pack(i) + s for i, s in sigs)


def decode_sig_list(data: bytes, pos: int) -> tuple[tuple[tuple[int, bytes], ...], int]:
    if pos + 4 > len(data):
        raise ValueError("truncated signature list")
    (count,) = _PAIR.unpack_from(data, pos)
    pos += 4
    end = pos + count * (4 + SIG_SIZE)
    if end > len(data):
        raise ValueError("truncated signature list")
    sigs = tuple(
        (_PAIR.unpack_from(data, p)[0], data[p + 4 : p + 4 + SIG_SIZE]) for p in range(pos, end, 4 + SIG_SIZE)
    )
    return sigs, end


# -- generation --------------------------------------------------------------------


def _validator_keys(seed: int, count: int) -> list[crypto.KeyPair]:
    tag = b"popos/validator" + seed.to_bytes(8, "big", signed=True)
    return [crypto.keygen(crypto.hash_bytes(tag + i.to_bytes(4, "big"))) for i in range(count)]


def _random_transfers(rng: random.Random, st: State, count: int) -> tuple[tuple[Transaction, ...], State]:
    accounts = sorted(st)
    txs = []
    for _ in range(count):
        funded = [a for a in accounts if st[a] > 0]
        if not funded or len(accounts) < 2:
            break
        s = rng.choice(funded)
        r = rng.choice([a for a in accounts if a != s])
        tx = Transaction(s, r, rng.randint(0, st[s]))
        st = apply_tx(st, tx)
        txs.append(tx)
    return tuple(txs), st


def gen_trace(
    n: int,
    m: int,
    signers_per_epoch: int,
    seed: int,
    *,
    pool_size: int | None = None,
    accounts: int = 16,
    txs_per_epoch: int = 4,
    succession_seed: int | None = None,
    fork_at: int | None = None,
    fork_seed: int | None = None,
) -> ExecutionTrace:
    """Generate a well-formed trace of ``n`` epochs.

    Committees of ``m`` keys are sampled from a seed-derived validator pool.
    Every handover proof and every commitment carries exactly
    ``signers_per_epoch`` signatures.  ``succession_seed`` reselects which
    members sign without changing any committee.  ``fork_at``/``fork_seed``
    switch committee sampling (from epoch ``fork_at``) and the workload (from
    epoch ``fork_at - 1``) to a different random stream while keeping the
    signing keys, which is how the equivocation fixture is built.
    """
    if n < 1 or m < 1:
        raise ValueError("need at least one epoch and one committee member")
    if not threshold(m) <= signers_per_epoch <= m:
        raise ValueError(f"signers_per_epoch must be in [{threshold(m)}, {m}], got {signers_per_epoch}")
    pool = _validator_keys(seed, pool_size or max(4 * m, 16))
    if len(pool) < m:
        raise ValueError("validator pool smaller than the committee")
    committee_rng = random.Random(f"{seed}/committee")
    signer_rng = random.Random(f"{seed if succession_seed is None else succession_seed}/signers")
    work_rng = random.Random(f"{seed}/workload")
    genesis_rng = random.Random(f"{seed}/genesis")
    fork_committee_rng = random.Random(f"{fork_seed}/fork-committee")
    fork_work_rng = random.Random(f"{fork_seed}/fork-workload")

    def sample(e: int, avoid: tuple[bytes, ...] | None = None) -> tuple[list[int], SyncCommittee]:
        rng = fork_committee_rng if fork_at is not None and e >= fork_at else committee_rng
        while True:
            members = rng.sample(range(len(pool)), m)
            c = SyncCommittee(e, tuple(pool[i].pk for i in members))
            if avoid is None or c.keys != avoid:
                return members, c

    genesis = {a: genesis_rng.randint(100, 1000) for a in range(accounts)}
    ledger = Ledger(dict(genesis))
    st = dict(genesis)
    registry = EpochKeyRegistry()
    members, comm = sample(0)
    committees = [comm]
    handovers: list[HandoverProof | None] = [None]
    commitments: list[Digest] = []
    csigs = []
    for e in range(n):
        for i, v in enumerate(members):
            registry.register(e, i, pool[v].sk)
        c = commit(st)
        signers = sorted(signer_rng.sample(range(m), signers_per_epoch))
        commitments.append(c)
        csigs.append(tuple((i, crypto.sign(registry.get(e, i), c)) for i in signers))

        rng = fork_work_rng if fork_at is not None and e >= fork_at - 1 else work_rng
        batch, st = _random_transfers(rng, st, txs_per_epoch)
        ledger.epoch_txs.append(batch)

        if e + 1 < n:
            avoid = None
            if fork_at is not None and e + 1 == fork_at:
                # the fork must actually change the committee
                avoid = _shadow_committee(seed, pool, m, fork_at)
            nxt_members, nxt = sample(e + 1, avoid)
            msg = handover_message(e + 1, nxt)
            signers = sorted(signer_rng.sample(range(m), signers_per_epoch))
            handovers.append(HandoverProof(e + 1, tuple((i, crypto.sign(registry.get(e, i), msg)) for i in signers)))
            committees.append(nxt)
            members = nxt_members
        registry.advance(e + 1)
    log.debug("generated trace n=%d m=%d seed=%d", n, m, seed)
    return ExecutionTrace(m, committees, handovers, commitments, csigs, True, ledger)


def _shadow_committee(seed: int, pool: list[crypto.KeyPair], m: int, fork_at: int) -> tuple[bytes, ...]:
    """Committee that the unforked stream would pick at ``fork_at``."""
    rng = random.Random(f"{seed}/committee")
    keys: tuple[bytes, ...] = ()
    for _ in range(fork_at + 1):
        keys = tuple(pool[i].pk for i in rng.sample(range(len(pool)), m))
    return keys


def splice(honest: ExecutionTrace, alt: ExecutionTrace, at_epoch: int) -> ExecutionTrace:
    """Honest prefix before ``at_epoch`` joined to ``alt`` from ``at_epoch`` on.

    Handover signatures are not regenerated, so the handover at ``at_epoch``
    does not verify against the honest committee before it.
    """
    if alt.n != honest.n or alt.m != honest.m:
        raise ValueError("spliced traces must share horizon and committee size")
    if not 0 < at_epoch < honest.n:
        raise ValueError(f"splice point must lie in [1, {honest.n - 1}], got {at_epoch}")
    j = at_epoch
    return ExecutionTrace(
        honest.m,
        honest.committees[:j] + alt.committees[j:],
        honest.handovers[:j] + alt.handovers[j:],
        honest.commitments[:j] + alt.commitments[j:],
        honest.commitment_sigs[:j] + alt.commitment_sigs[j:],
        False,
        alt.ledger,
        honest.key_size,
    )


def equivocating_committee_trace(
    n: int, m: int, seed: int, at_epoch: int, signers: int | None = None
) -> tuple[ExecutionTrace, ExecutionTrace]:
    """Two well-formed traces whose epoch ``at_epoch - 1`` committee signed two successors."""
    if not 1 <= at_epoch < n:
        raise ValueError(f"equivocation epoch must lie in [1, {n - 1}]")
    k = signers or threshold(m)
    a = gen_trace(n, m, k, seed)
    b = gen_trace(n, m, k, seed, fork_at=at_epoch, fork_seed=seed + 1_000_003)
    a.honest = b.honest = False
    return a, b


def first_disagreement(a: Sequence[bytes], b: Sequence[bytes]) -> int | None:
    """Linear-scan oracle: smallest index where the sequences differ."""
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def validate_trace(trace: ExecutionTrace, genesis: SyncCommittee | None = None) -> int | None:
    """Full revalidation pass; returns the first ill-formed epoch, or None."""
    if genesis is not None and trace.committees[0] != genesis:
        return 0
    if not (len(trace.handovers) == len(trace.commitments) == len(trace.commitment_sigs) == trace.n):
        return 0
    for e, c in enumerate(trace.committees):
        if c.epoch != e or c.m != trace.m:
            return e
        if e > 0:
            sigma = trace.handovers[e]
            if sigma is None or not verify_handover(trace.committees[e - 1], e, c, sigma):
                return e
        if not verify_commitment(c, trace.commitments[e], trace.commitment_sigs[e]):
            return e
    return None

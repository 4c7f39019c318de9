"""Bisection games between provers, refereed by a light verifier.

The prover side is :class:`ProverSession`, a stateless request handler over an
immutable trace.  The verifier side is a set of functions that talk to provers
through :mod:`popos.transport` links and validate every reply the same way,
since the verifier cannot tell which prover is honest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

from . import crypto
from .chainsim import (
    ExecutionTrace,
    HandoverProof,
    Ledger,
    State,
    SyncCommittee,
    commit,
    encode_account,
    state_tree,
    verify_commitment,
    verify_handover,
)
from .crypto import HASH_SIZE, Digest
from .merkle import (
    SENTINEL,
    MountainRange,
    decompose,
    is_last_leaf,
    leaf_digest,
    mmr_offsets,
    node_digest,
    prove,
    tree_depth,
    verify_digest,
)
from .transport import Link, ProverTimeout
from .wire import (
    AccountEntry,
    BalanceRequest,
    BalanceResponse,
    Children,
    Claim,
    ClaimMode,
    ClaimRequest,
    ClaimResponse,
    CommitteeBatch,
    CommitteeRangeRequest,
    Error,
    HandoverReveal,
    HashBatch,
    HashRangeRequest,
    LeafKind,
    LeafRequest,
    LeafReveal,
    Message,
    Open,
    Outcome,
    PrevLeafReveal,
    Verdict,
    WireError,
    decode_frame,
)

log = logging.getLogger(__name__)


# -- prover ------------------------------------------------------------------


class ProverSession:
    """Answers verifier requests from one execution trace.

    Every request carries its full position (tree index and path, or epoch),
    so one session can serve any number of concurrent games.
    """

    def __init__(self, trace: ExecutionTrace, d: int = 2, name: str = "prover"):
        self.trace = trace
        self.d = d
        self.name = name
        self.mmr = MountainRange(trace.leaf_digests, d)

    # answers, overridable by adversarial sessions

    def claim(self, mode: ClaimMode) -> Claim:
        t = self.trace
        latest = t.committees[-1]
        proof = prove(self.mmr.trees[-1], self.mmr.sizes[-1] - 1)
        return Claim(t.commitment, tuple(self.mmr.peaks), latest, proof, t.commitment_sigs[-1])

    def children(self, tree: int, path: Sequence[int]) -> list[Digest]:
        return self.mmr.trees[tree].children(path)

    def leaf(self, epoch: int) -> SyncCommittee:
        return self.trace.committees[epoch]

    def prev_leaf(self, epoch: int):
        tree, proof = self.mmr.prove(epoch - 1)
        return self.trace.committees[epoch - 1], proof

    def handover(self, epoch: int) -> HandoverProof:
        h = self.trace.handovers[epoch]
        if h is None:
            raise IndexError("genesis has no handover proof")
        return h

    def hashes(self, start: int, count: int) -> list[Digest]:
        return self.trace.leaf_digests[start : start + count]

    def committee_range(self, start: int, count: int):
        t = self.trace
        return [
            (t.committees[e], t.handovers[e] or HandoverProof(e, ()))
            for e in range(start, min(start + count, t.n))
        ]

    @cached_property
    def state(self) -> State:
        if self.trace.ledger is None:
            raise LookupError("this prover holds no account state")
        return self.trace.ledger.state_at(self.trace.n - 1)

    def balance(self, account: int) -> BalanceResponse:
        return balance_response(self.state, account)

    # dispatch

    def respond(self, msg: Message) -> Message | None:
        if isinstance(msg, ClaimRequest):
            return ClaimResponse(msg.mode, self.claim(msg.mode).for_mode(msg.mode))
        if isinstance(msg, Open):
            return Children(tuple(self.children(msg.tree, msg.path)))
        if isinstance(msg, LeafRequest):
            if not 0 <= msg.epoch < self.trace.n:
                return Error(f"epoch {msg.epoch} beyond horizon")
            if msg.kind == LeafKind.LEAF:
                return LeafReveal(self.leaf(msg.epoch))
            if msg.kind == LeafKind.PREV:
                return PrevLeafReveal(*self.prev_leaf(msg.epoch))
            return HandoverReveal(self.handover(msg.epoch))
        if isinstance(msg, HashRangeRequest):
            return HashBatch(tuple(self.hashes(msg.start, msg.count)))
        if isinstance(msg, CommitteeRangeRequest):
            return CommitteeBatch(tuple(self.committee_range(msg.start, msg.count)))
        if isinstance(msg, BalanceRequest):
            return self.balance(msg.account)
        if isinstance(msg, Verdict):
            log.debug("%s received verdict %s", self.name, msg)
            return None
        return Error(f"unexpected request {type(msg).__name__}")

    def handle(self, frame: bytes) -> bytes | None:
        try:
            reply = self.respond(decode_frame(frame))
        except (WireError, IndexError, LookupError, ValueError) as exc:
            reply = Error(str(exc))
        return None if reply is None else reply.frame()


def prover_init(trace: ExecutionTrace, d: int = 2, name: str = "prover") -> ProverSession:
    return ProverSession(trace, d, name)


def balance_response(st: State, account: int) -> BalanceResponse:
    order = sorted(st)
    tree = state_tree(st)

    def entry(i: int) -> AccountEntry:
        return AccountEntry(order[i], st[order[i]], prove(tree, i))

    if account in st:
        return BalanceResponse(True, (entry(order.index(account)),))
    # sorted neighbours bracket the missing account
    right = next((i for i, a in enumerate(order) if a > account), len(order))
    idx = [i for i in (right - 1, right) if 0 <= i < len(order)]
    return BalanceResponse(False, tuple(entry(i) for i in idx))


# -- verifier ------------------------------------------------------------------


@dataclass
class VerifierContext:
    """What the verifier knows before talking to anyone."""

    n: int
    genesis: SyncCommittee
    d: int = 2
    sig_verifications: int = 0
    open_rounds: int = 0

    @property
    def m(self) -> int:
        return self.genesis.m

    @property
    def sizes(self) -> list[int]:
        return decompose(self.n)

    def step_budget(self, tree_index: int) -> int:
        return tree_depth(self.sizes[tree_index], self.d)

    def verify(self, pk: bytes, message: bytes, sig: bytes) -> bool:
        self.sig_verifications += 1
        return crypto.verify(pk, message, sig)


def check_claim(claim: Claim, ctx: VerifierContext) -> bool:
    """Validate a full claim: peak count, latest committee proof, commitment signatures."""
    sizes = ctx.sizes
    if len(claim.peaks) != len(sizes) or any(len(p) != HASH_SIZE for p in claim.peaks):
        return False
    latest, proof = claim.latest, claim.latest_proof
    if latest is None or proof is None or len(claim.commitment) != HASH_SIZE:
        return False
    if latest.epoch != ctx.n - 1 or latest.m != ctx.m:
        return False
    last = sizes[-1]
    if not verify_digest(proof, claim.peaks[-1], last, last - 1, latest.digest, ctx.d):
        return False
    return verify_commitment(latest, claim.commitment, claim.signatures, ctx.verify)


def peaks_first_disagreement(a: Sequence[Digest], b: Sequence[Digest]) -> int | None:
    if len(a) != len(b):
        raise ValueError("peak lists of different length")
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    return None


@dataclass
class GameOutcome:
    outcome: Outcome
    epoch: int | None = None
    open_rounds: int = 0
    reason: str = ""
    tree_index: int | None = None
    leaves: tuple[SyncCommittee | None, SyncCommittee | None] = (None, None)
    prev_leaves: tuple[SyncCommittee | None, SyncCommittee | None] = (None, None)

    @property
    def winner(self) -> int | None:
        return {Outcome.WIN_A: 0, Outcome.WIN_B: 1}.get(self.outcome)

    @property
    def losers(self) -> tuple[int, ...]:
        return {Outcome.WIN_A: (1,), Outcome.WIN_B: (0,), Outcome.BOTH_LOSE: (0, 1)}[self.outcome]


class CheckFailed(Exception):
    def __init__(self, sides: list[int], reason: str):
        self.sides = sides
        self.reason = reason


def ask(link: Link, msg: Message, expect: type) -> tuple[Message | None, str]:
    try:
        reply = link.request(msg)
    except ProverTimeout:
        return None, "timeout"
    except WireError as exc:
        return None, f"malformed reply ({exc})"
    if isinstance(reply, Children) and expect is not Children:
        return None, "step budget exceeded"
    if not isinstance(reply, expect):
        return None, f"expected {expect.__name__}, got {type(reply).__name__}"
    return reply, ""


def ask_both(links, msg, expect, check) -> list:
    """Ask both provers, validate each reply with ``check(side, reply) -> reason``."""
    replies, failed, reasons = [], [], []
    for k, link in enumerate(links):
        reply, why = ask(link, msg, expect)
        if reply is not None:
            why = check(k, reply)
        if why:
            failed.append(k)
            reasons.append(f"{link.name}: {why}")
        replies.append(reply)
    if failed:
        raise CheckFailed(failed, "; ".join(reasons))
    return replies


def bisection_game(
    ctx: VerifierContext,
    a: Link,
    b: Link,
    claim_a: Claim,
    claim_b: Claim,
    tree_index: int,
) -> GameOutcome:
    """Referee one game on the mountain-range tree where the peaks first differ."""
    links = (a, b)
    claims = (claim_a, claim_b)
    result = GameOutcome(Outcome.BOTH_LOSE, tree_index=tree_index)
    try:
        _play(ctx, links, claims, tree_index, result)
        result.outcome = Outcome.BOTH_LOSE
        result.reason = result.reason or "both handovers verify: equivocating committee"
    except CheckFailed as f:
        result.reason = f.reason
        if len(f.sides) == 2:
            result.outcome = Outcome.BOTH_LOSE
        else:
            result.outcome = Outcome.WIN_B if f.sides == [0] else Outcome.WIN_A
    for link in links:
        link.notify(Verdict(result.outcome, -1 if result.epoch is None else result.epoch))
    log.info("game on tree %d: %s at epoch %s (%s)", tree_index, result.outcome.name, result.epoch, result.reason)
    return result


def _play(ctx, links, claims, tree_index, result: GameOutcome) -> None:
    d = ctx.d
    size = ctx.sizes[tree_index]
    offset = mmr_offsets(ctx.n)[tree_index]
    current = [claims[0].peaks[tree_index], claims[1].peaks[tree_index]]
    if current[0] == current[1]:
        raise ValueError("peaks agree on this tree; nothing to bisect")
    path: list[int] = []

    for _ in range(ctx.step_budget(tree_index)):

        def check_children(k, reply):
            ds = reply.digests
            if len(ds) != d or any(len(x) != HASH_SIZE for x in ds):
                return "wrong number of children"
            if node_digest(ds) != current[k]:
                return "children do not hash to the opened node"
            return ""

        replies = ask_both(links, Open(tree_index, tuple(path)), Children, check_children)
        result.open_rounds += 1
        ctx.open_rounds += 1
        ca, cb = replies[0].digests, replies[1].digests
        diff = next((i for i in range(d) if ca[i] != cb[i]), None)
        if diff is None:
            raise CheckFailed([0, 1], "children agree under differing parents")
        path.append(diff)
        current = [ca[diff], cb[diff]]

    local = 0
    for c in path:
        local = local * d + c
    if local >= size:
        # padding position: whoever put data there is lying
        liars = [k for k in (0, 1) if current[k] != SENTINEL]
        raise CheckFailed(liars, "claimed data in a padding leaf")
    j = offset + local
    result.epoch = j

    def check_leaf(k, reply):
        c = reply.committee
        if c.epoch != j or c.m != ctx.m:
            return "malformed committee"
        if c.digest != current[k]:
            return "committee does not match the leaf"
        if j == 0 and c != ctx.genesis:
            return "first committee differs from genesis"
        return ""

    leaves = ask_both(links, LeafRequest(LeafKind.LEAF, j), LeafReveal, check_leaf)
    result.leaves = (leaves[0].committee, leaves[1].committee)
    if j == 0:
        raise CheckFailed([0, 1], "both committees match genesis")  # unreachable without a hash collision

    if local > 0:
        anchor_tree, anchor_size, anchor_local = tree_index, size, local - 1
    else:
        anchor_tree = tree_index - 1
        anchor_size = ctx.sizes[anchor_tree]
        anchor_local = anchor_size - 1

    def check_prev(k, reply):
        c = reply.committee
        if c.epoch != j - 1 or c.m != ctx.m:
            return "malformed previous committee"
        root = claims[k].peaks[anchor_tree]
        if not verify_digest(reply.proof, root, anchor_size, anchor_local, c.digest, d):
            return "previous leaf proof fails"
        return ""

    prevs = ask_both(links, LeafRequest(LeafKind.PREV, j), PrevLeafReveal, check_prev)
    result.prev_leaves = (prevs[0].committee, prevs[1].committee)
    if prevs[0].committee != prevs[1].committee:
        raise CheckFailed([0, 1], "previous committees differ")

    def check_handover(k, reply):
        if not verify_handover(result.prev_leaves[k], j, result.leaves[k], reply.handover, ctx.verify):
            return "handover proof invalid"
        return ""

    ask_both(links, LeafRequest(LeafKind.HANDOVER, j), HandoverReveal, check_handover)


def cross_tree_prev_leaf(ctx: VerifierContext, link: Link, claim: Claim, tree_index: int):
    """Fetch the leaf before tree ``tree_index`` with its proof against the previous peak."""
    if tree_index < 1:
        raise ValueError("the first tree has no predecessor; leaf 0 is checked against genesis")
    j = mmr_offsets(ctx.n)[tree_index]
    reply, why = ask(link, LeafRequest(LeafKind.PREV, j), PrevLeafReveal)
    if reply is None:
        raise ProtocolViolation(why)
    size = ctx.sizes[tree_index - 1]
    if reply.committee.epoch != j - 1 or not verify_digest(
        reply.proof, claim.peaks[tree_index - 1], size, size - 1, reply.committee.digest, ctx.d
    ):
        raise ProtocolViolation("previous leaf does not verify against the previous peak")
    return reply.committee, reply.proof


class ProtocolViolation(Exception):
    pass


class NoSurvivor(Exception):
    """Every prover was eliminated; the verifier is eclipsed."""


@dataclass
class TournamentResult:
    commitment: Digest
    games: list[GameOutcome] = field(default_factory=list)
    survivors: list[str] = field(default_factory=list)
    eliminated: dict[str, str] = field(default_factory=dict)


def request_claims(links: Sequence[Link], mode: ClaimMode, eliminated: dict[str, str]) -> dict[int, Claim]:
    claims = {}
    for k, link in enumerate(links):
        if link.name in eliminated:
            continue
        reply, why = ask(link, ClaimRequest(mode), ClaimResponse)
        if reply is None or reply.mode != mode:
            eliminated[link.name] = why or "wrong claim mode"
        else:
            claims[k] = reply.claim
    return claims


def tournament(ctx: VerifierContext, links: Sequence[Link]) -> TournamentResult:
    """Pit provers with different commitments against each other until one commitment remains."""
    eliminated: dict[str, str] = {}
    quick = request_claims(links, ClaimMode.COMMITMENT, eliminated)
    if not quick:
        raise NoSurvivor("no prover answered")
    if len({c.commitment for c in quick.values()}) == 1:
        commitment = next(iter(quick.values())).commitment
        return TournamentResult(commitment, [], [links[k].name for k in quick], eliminated)

    claims = request_claims(links, ClaimMode.FULL, eliminated)
    for k in list(claims):
        if not check_claim(claims[k], ctx):
            eliminated[links[k].name] = "invalid claim"
            del claims[k]
    alive = sorted(claims)
    games: list[GameOutcome] = []
    while alive:
        champion = alive[0]
        challenger = next((k for k in alive if claims[k].commitment != claims[champion].commitment), None)
        if challenger is None:
            break
        ca, cb = claims[champion], claims[challenger]
        tree = peaks_first_disagreement(ca.peaks, cb.peaks)
        if tree is None:
            # one committee signed two commitments: it cannot be the honest one
            game = GameOutcome(Outcome.BOTH_LOSE, reason="identical ranges with different commitments")
        else:
            game = bisection_game(ctx, links[champion], links[challenger], ca, cb, tree)
        games.append(game)
        for side in game.losers:
            k = (champion, challenger)[side]
            eliminated[links[k].name] = f"lost game: {game.reason}"
            alive.remove(k)
    if not alive:
        raise NoSurvivor("all provers eliminated")
    return TournamentResult(claims[alive[0]].commitment, games, [links[k].name for k in alive], eliminated)


def verify_outcome_state_security(commitment: Digest, ledger: Ledger, n: int) -> bool:
    """The accepted commitment is the honest state at the start of epoch ``n - 1``."""
    return commit(ledger.state_at(n - 1)) == commitment


def verify_balance(commitment: Digest, account: int, reply: BalanceResponse) -> int:
    """Balance of ``account`` proven against ``commitment``; absent accounts hold 0.

    Raises :class:`ProtocolViolation` when the proof does not check out.
    """

    def ok(e: AccountEntry) -> bool:
        p = e.proof
        return p.degree == 2 and verify_digest(
            p, commitment, p.size, p.index, _account_leaf(e.account, e.balance), 2
        )

    entries = reply.entries
    if not entries or not all(ok(e) for e in entries):
        raise ProtocolViolation("balance proof does not verify")
    if reply.present:
        if len(entries) != 1 or entries[0].account != account:
            raise ProtocolViolation("proof is for a different account")
        return entries[0].balance
    size = entries[0].proof.size
    if len({e.proof.size for e in entries}) != 1:
        raise ProtocolViolation("neighbour proofs disagree on tree size")
    if len(entries) == 2:
        lo, hi = entries
        adjacent = hi.proof.index == lo.proof.index + 1
        if adjacent and lo.account < account < hi.account:
            return 0
    elif len(entries) == 1:
        e = entries[0]
        if e.proof.index == 0 and account < e.account:
            return 0
        if e.proof.index == size - 1 and account > e.account and is_last_leaf(e.proof):
            return 0
    raise ProtocolViolation("neighbours do not bracket the account")


def _account_leaf(account: int, balance: int) -> Digest:
    return leaf_digest(encode_account(account, balance))

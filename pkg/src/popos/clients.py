"""The three bootstrapping clients and post-sync balance queries.

* TLC downloads every committee and handover proof from one prover at a time.
* OLC downloads one hash per epoch from every prover, even when all claims
  agree, and resolves conflicts at the first differing hash.
* SLC runs the bisection tournament of :mod:`popos.protocol`.

Each run returns a :class:`SyncReport` built from the shared transport meter.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from typing import Sequence

from .chainsim import SyncCommittee, first_disagreement, verify_commitment, verify_handover
from .crypto import Digest
from .protocol import (
    NoSurvivor,
    ProtocolViolation,
    VerifierContext,
    ask,
    CheckFailed,
    ask_both,
    request_claims,
    tournament,
    verify_balance,
)
from .transport import Link, LinkConfig, Meter, SimLink
from .wire import (
    BalanceRequest,
    BalanceResponse,
    ClaimMode,
    ClaimRequest,
    ClaimResponse,
    CommitteeBatch,
    CommitteeRangeRequest,
    HandoverReveal,
    HashBatch,
    HashRangeRequest,
    LeafKind,
    LeafRequest,
    LeafReveal,
)

log = logging.getLogger(__name__)

FLAVORS = ("tlc", "olc", "slc")
DEFAULT_PARAM = {"tlc": 200, "olc": 500, "slc": 100}
CSV_COLUMNS = (
    "flavor",
    "N",
    "m",
    "param",
    "bytes_down",
    "bytes_up",
    "rounds",
    "sig_verifs",
    "elapsed_ms",
    "result_hex",
)


@dataclass
class ClientConfig:
    """``param`` is the batch size b for TLC/OLC and the tree degree d for SLC."""

    flavor: str = "slc"
    param: int | None = None
    link: LinkConfig = field(default_factory=LinkConfig)

    def __post_init__(self):
        self.flavor = self.flavor.lower()
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown client flavor {self.flavor!r}")
        if self.param is None:
            self.param = DEFAULT_PARAM[self.flavor]
        if self.param < (2 if self.flavor == "slc" else 1):
            raise ValueError(f"parameter {self.param} too small for {self.flavor}")


@dataclass
class SyncReport:
    flavor: str
    n: int
    m: int
    param: int
    bytes_down: int = 0
    bytes_up: int = 0
    interaction_rounds: int = 0
    signature_verifications: int = 0
    simulated_elapsed_ms: float = 0.0
    commitment: Digest | None = None
    games: int = 0
    error: str | None = None
    bytes_down_by_tag: dict[int, int] = field(default_factory=dict)

    @property
    def total_bytes(self) -> int:
        return self.bytes_down + self.bytes_up

    def csv_row(self) -> list:
        result = self.commitment.hex() if self.commitment else f"error:{self.error}"
        return [
            self.flavor,
            self.n,
            self.m,
            self.param,
            self.bytes_down,
            self.bytes_up,
            self.interaction_rounds,
            self.signature_verifications,
            f"{self.simulated_elapsed_ms:.3f}",
            result,
        ]


def reports_to_csv(reports: Sequence[SyncReport], header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


class SyncFailed(Exception):
    def __init__(self, report: SyncReport):
        super().__init__(report.error)
        self.report = report


def connect(sessions: Sequence, config: LinkConfig | None = None, meter: Meter | None = None) -> list[Link]:
    """Simulated links to in-process sessions, all feeding one meter."""
    meter = meter if meter is not None else Meter()
    return [SimLink(s, getattr(s, "name", f"p{k}"), meter, config) for k, s in enumerate(sessions)]


def _shared_meter(links: Sequence[Link]) -> Meter:
    meters = {id(link.meter) for link in links}
    if len(meters) != 1:
        raise ValueError("all prover links of one run must share a meter")
    return links[0].meter


def _report(cfg: ClientConfig, ctx: VerifierContext, meter: Meter, start: Meter) -> SyncReport:
    return SyncReport(
        cfg.flavor,
        ctx.n,
        ctx.m,
        cfg.param,
        meter.bytes_in - start.bytes_in,
        meter.bytes_out - start.bytes_out,
        meter.rounds - start.rounds,
        ctx.sig_verifications,
        (meter.clock_us - start.clock_us) / 1000,
        bytes_down_by_tag={k: v - start.bytes_in_by_tag.get(k, 0) for k, v in meter.bytes_in_by_tag.items()},
    )


def _snapshot(meter: Meter) -> Meter:
    return Meter(meter.bytes_in, meter.bytes_out, meter.messages, meter.rounds, meter.clock_us,
                 bytes_in_by_tag=meter.bytes_in_by_tag.copy())


def _finish(report: SyncReport, commitment: Digest | None, error: str | None = None) -> SyncReport:
    report.commitment = commitment
    report.error = error
    if commitment is None:
        raise SyncFailed(report)
    return report


# -- TLC -------------------------------------------------------------------------


def tlc_sync(cfg: ClientConfig, links: Sequence[Link], n: int, genesis: SyncCommittee) -> SyncReport:
    ctx = VerifierContext(n, genesis)
    meter = _shared_meter(links)
    start = _snapshot(meter)
    b = cfg.param
    for link in links:
        latest = _tlc_chain(ctx, link, b)
        if latest is None:
            continue
        reply, why = ask(link, ClaimRequest(ClaimMode.SIGNED), ClaimResponse)
        claim = reply.claim if reply is not None else None
        if claim is not None and verify_commitment(latest, claim.commitment, claim.signatures, ctx.verify):
            return _finish(_report(cfg, ctx, meter, start), claim.commitment)
        log.info("tlc: %s commitment rejected (%s)", link.name, why or "bad signatures")
    return _finish(_report(cfg, ctx, meter, start), None, "all provers exhausted")


def _tlc_chain(ctx: VerifierContext, link: Link, b: int) -> SyncCommittee | None:
    accepted = ctx.genesis
    e = 1
    while e < ctx.n:
        count = min(b, ctx.n - e)
        reply, why = ask(link, CommitteeRangeRequest(e, count), CommitteeBatch)
        if reply is None or len(reply.entries) != count:
            log.info("tlc: %s failed batch at %d (%s)", link.name, e, why or "short batch")
            return None
        for committee, sigma in reply.entries:
            if committee.epoch != e or not verify_handover(accepted, e, committee, sigma, ctx.verify):
                log.info("tlc: %s handover invalid at epoch %d", link.name, e)
                return None
            accepted = committee
            e += 1
    return accepted


# -- OLC -------------------------------------------------------------------------


def _fetch_hashes(link: Link, n: int, b: int) -> list[Digest] | None:
    out: list[Digest] = []
    while len(out) < n:
        count = min(b, n - len(out))
        reply, _ = ask(link, HashRangeRequest(len(out), count), HashBatch)
        if reply is None or len(reply.digests) != count:
            return None
        out.extend(reply.digests)
    return out


def olc_game(ctx: VerifierContext, links, hashes, j: int) -> list[int]:
    """Resolve a disagreement first seen at epoch ``j``; returns losing sides."""

    def check_leaf(epoch):
        def check(k, reply):
            c = reply.committee
            if c.epoch != epoch or c.m != ctx.m or c.digest != hashes[k][epoch]:
                return f"committee {epoch} does not match its hash"
            return ""

        return check

    try:
        leaves = ask_both(links, LeafRequest(LeafKind.LEAF, j), LeafReveal, check_leaf(j))
        prevs = ask_both(links, LeafRequest(LeafKind.LEAF, j - 1), LeafReveal, check_leaf(j - 1))

        def check_handover(k, reply):
            ok = verify_handover(prevs[k].committee, j, leaves[k].committee, reply.handover, ctx.verify)
            return "" if ok else "handover proof invalid"

        ask_both(links, LeafRequest(LeafKind.HANDOVER, j), HandoverReveal, check_handover)
    except CheckFailed as f:
        return f.sides
    return [0, 1]


def olc_sync(cfg: ClientConfig, links: Sequence[Link], n: int, genesis: SyncCommittee) -> SyncReport:
    ctx = VerifierContext(n, genesis)
    meter = _shared_meter(links)
    start = _snapshot(meter)
    eliminated: dict[str, str] = {}
    report = lambda: _report(cfg, ctx, meter, start)  # noqa: E731
    claims = request_claims(links, ClaimMode.LATEST, eliminated)
    hashes: dict[int, list[Digest]] = {}
    for k in list(claims):
        seq = _fetch_hashes(links[k], n, cfg.param)
        c = claims[k]
        valid = (
            seq is not None
            and seq[0] == genesis.digest
            and c.latest is not None
            and c.latest.epoch == n - 1
            and c.latest.digest == seq[-1]
            and verify_commitment(c.latest, c.commitment, c.signatures, ctx.verify)
        )
        if valid:
            hashes[k] = seq
        else:
            eliminated[links[k].name] = "invalid hash sequence or claim"
            del claims[k]

    alive = sorted(claims)
    if not alive:
        return _finish(report(), None, "no valid claim")
    games = 0
    while alive:
        champion = alive[0]
        challenger = next((k for k in alive if claims[k].commitment != claims[champion].commitment), None)
        if challenger is None:
            break
        j = first_disagreement(hashes[champion], hashes[challenger])
        games += 1
        if j is None:
            losers = [0, 1]
        else:
            losers = olc_game(ctx, (links[champion], links[challenger]), (hashes[champion], hashes[challenger]), j)
        for side in losers:
            k = (champion, challenger)[side]
            eliminated[links[k].name] = f"lost at epoch {j}"
            alive.remove(k)
    rep = report()
    rep.games = games
    if not alive:
        return _finish(rep, None, "all provers eliminated")
    return _finish(rep, claims[alive[0]].commitment)


# -- SLC -------------------------------------------------------------------------


def slc_sync(cfg: ClientConfig, links: Sequence[Link], n: int, genesis: SyncCommittee) -> SyncReport:
    ctx = VerifierContext(n, genesis, cfg.param)
    meter = _shared_meter(links)
    start = _snapshot(meter)
    try:
        result = tournament(ctx, links)
    except NoSurvivor as exc:
        return _finish(_report(cfg, ctx, meter, start), None, f"eclipsed: {exc}")
    rep = _report(cfg, ctx, meter, start)
    rep.games = len(result.games)
    return _finish(rep, result.commitment)


SYNC = {"tlc": tlc_sync, "olc": olc_sync, "slc": slc_sync}


def sync(cfg: ClientConfig, links: Sequence[Link], n: int, genesis: SyncCommittee) -> SyncReport:
    return SYNC[cfg.flavor](cfg, links, n, genesis)


def query_balance(commitment: Digest, account: int, link: Link) -> tuple[int, bool]:
    """Return ``(balance, present)`` proven against an accepted commitment.

    Raises :class:`ProtocolViolation` if the prover's proof does not verify.
    """
    reply, why = ask(link, BalanceRequest(account), BalanceResponse)
    if reply is None:
        raise ProtocolViolation(why)
    return verify_balance(commitment, account, reply), reply.present

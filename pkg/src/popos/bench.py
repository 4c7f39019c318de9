"""Experiment topologies and byte-growth analysis.

The default topology is the one used throughout the tests:
one honest prover and several adversaries, each splicing the honest trace
onto an alternative trace at a random epoch.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chainsim import ExecutionTrace, gen_trace, splice, threshold
from .clients import ClientConfig, SyncFailed, SyncReport, connect, sync
from .protocol import ProverSession
from .transport import LinkConfig, Meter

log = logging.getLogger(__name__)


@dataclass
class Topology:
    honest: int = 1
    adversaries: int = 7

    @classmethod
    def parse(cls, spec: str) -> Topology:
        """``"1:7"`` means one honest prover and seven splice adversaries."""
        try:
            h, a = (int(x) for x in spec.split(":"))
        except ValueError:
            raise ValueError(f"prover spec must look like HONEST:ADVERSARIES, got {spec!r}") from None
        if h < 0 or a < 0 or h + a < 1:
            raise ValueError("need at least one prover")
        return cls(h, a)


def make_traces(
    n: int, m: int, seed: int, alts: int = 1, signers: int | None = None
) -> tuple[ExecutionTrace, list[ExecutionTrace]]:
    """The honest trace (from ``seed``) and ``alts`` alternative traces."""
    k = signers or threshold(m)
    honest = gen_trace(n, m, k, seed)
    others = [gen_trace(n, m, k, seed + 1 + i) for i in range(alts)]
    for t in others:
        t.honest = False
    return honest, others


def build_sessions(
    honest: ExecutionTrace,
    alts: Sequence[ExecutionTrace],
    topology: Topology,
    seed: int,
    d: int = 2,
) -> tuple[list[ProverSession], list[int]]:
    """Sessions in a seeded random order; returns them with the splice points used."""
    rng = random.Random(f"{seed}/topology/{honest.n}")
    n = honest.n
    sessions, points = [], []
    for i in range(topology.adversaries):
        if n < 2:
            raise ValueError("splice adversaries need a horizon of at least 2")
        j = rng.randint(1, n - 1)
        alt = alts[i % len(alts)]
        sessions.append(ProverSession(splice(honest, alt, j), d, f"adv{i}@{j}"))
        points.append(j)
    for i in range(topology.honest):
        sessions.insert(rng.randint(0, len(sessions)), ProverSession(honest, d, f"honest{i}"))
    return sessions, points


def run_client(
    cfg: ClientConfig,
    honest: ExecutionTrace,
    alts: Sequence[ExecutionTrace],
    topology: Topology,
    seed: int,
    meter: Meter | None = None,
) -> SyncReport:
    d = cfg.param if cfg.flavor == "slc" else 2
    sessions, _ = build_sessions(honest, alts, topology, seed, d)
    links = connect(sessions, cfg.link, meter)
    try:
        return sync(cfg, links, honest.n, honest.genesis)
    except SyncFailed as exc:
        return exc.report


def run_bench(
    flavor: str,
    horizons: Sequence[int],
    param: int | None = None,
    topology: Topology | None = None,
    m: int = 32,
    seed: int = 0,
    signers: int | None = None,
    link: LinkConfig | None = None,
    alts: int = 1,
) -> list[SyncReport]:
    """One report per horizon; traces are generated once and truncated."""
    if not horizons:
        raise ValueError("empty horizon list")
    topology = topology or Topology()
    honest, others = make_traces(max(horizons), m, seed, alts, signers)
    cfg = ClientConfig(flavor, param, link or LinkConfig())
    out = []
    for n in horizons:
        rep = run_client(cfg, honest.truncate(n), [t.truncate(n) for t in others], topology, seed)
        log.info("%s N=%d down=%d up=%d", flavor, n, rep.bytes_down, rep.bytes_up)
        out.append(rep)
    return out


def fit_r2(x: Sequence[float], y: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares line through ``(x, y)``: slope, intercept, R^2."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot else 1.0
    return float(slope), float(intercept), r2


def growth_ratios(values: Sequence[float]) -> list[float]:
    v = np.asarray(values, float)
    return list(v[1:] / v[:-1])

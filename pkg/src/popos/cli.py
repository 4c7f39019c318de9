"""Command-line harness: ``popos gen | splice | serve | bench``.

Log verbosity comes from ``POPOS_LOG_LEVEL`` (default ``WARNING``).
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import time
from pathlib import Path

from .bench import Topology, run_bench
from .chainsim import ExecutionTrace, gen_trace, splice, threshold, validate_trace
from .clients import DEFAULT_PARAM, FLAVORS, ClientConfig, SyncFailed, SyncReport, reports_to_csv, sync
from .protocol import ProverSession
from .transport import LinkConfig, Meter, TcpLink, serve_tcp

log = logging.getLogger("popos")

SCALED_M = 32
FULL_M = 512
DEFAULT_PORT = 7650
_ENDPOINT = re.compile(r"^(?P<host>[^:,\s]+):(?P<port>\d{1,5})$")


def _horizons(text: str) -> list[int]:
    try:
        values = [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizons must be integers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty horizon list")
    if min(values) < 1:
        raise argparse.ArgumentTypeError("horizons must be at least 1")
    return values


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="popos", description="Proof-of-stake bootstrapping simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a valid execution trace")
    g.add_argument("--epochs", type=_positive, required=True)
    g.add_argument("--committee", type=_positive, default=None, help=f"committee size (default {SCALED_M})")
    g.add_argument("--full", action="store_true", help=f"use the full committee size m={FULL_M}")
    g.add_argument("--signers", type=_positive, default=None, help="handover signers per epoch (default m//2+1)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path, required=True)
    g.add_argument("--ledger", action="store_true", help="also write the transaction ledger sidecar")

    s = sub.add_parser("splice", help="graft an alternative trace onto an honest prefix")
    s.add_argument("--honest", type=Path, required=True)
    s.add_argument("--alt", type=Path, required=True)
    s.add_argument("--at", type=int, required=True)
    s.add_argument("--out", type=Path, required=True)

    v = sub.add_parser("serve", help="serve a trace as a TCP prover endpoint")
    v.add_argument("--trace", type=Path, required=True)
    v.add_argument("--port", type=int, default=DEFAULT_PORT)
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--degree", type=int, default=DEFAULT_PARAM["slc"], help="handover tree degree")
    v.add_argument("--duration", type=float, default=None, help="stop after this many seconds")

    b = sub.add_parser("bench", help="run sync experiments and write CSV rows")
    b.add_argument("--client", choices=FLAVORS, required=True)
    b.add_argument("--horizons", type=_horizons, required=True, help="comma separated epoch counts")
    b.add_argument("--param", type=_positive, default=None, help="batch size (tlc/olc) or tree degree (slc)")
    b.add_argument(
        "--provers",
        default="1:7",
        help="HONEST:ADVERSARIES for simulated provers, or host:port[,host:port...] endpoints",
    )
    b.add_argument("--genesis", type=Path, default=None, help="trace file giving genesis and N for endpoints")
    b.add_argument("--committee", type=_positive, default=None)
    b.add_argument("--full", action="store_true", help=f"use the full committee size m={FULL_M}")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--latency-ms", type=float, default=20.0)
    b.add_argument("--csv", type=Path, default=None, help="append rows here (default: stdout)")
    return p


def _committee(args) -> int:
    if args.full and args.committee not in (None, FULL_M):
        raise SystemExit("popos: --full conflicts with --committee")
    return FULL_M if args.full else (args.committee or SCALED_M)


def ledger_sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".ledger.json")


def _read(path: Path) -> ExecutionTrace:
    if not path.exists():
        raise SystemExit(f"popos: no such trace file: {path}")
    side = ledger_sidecar(path)
    try:
        return ExecutionTrace.read(path, side if side.exists() else None)
    except ValueError as exc:
        raise SystemExit(f"popos: {path}: {exc}") from None


def cmd_gen(args) -> int:
    m = _committee(args)
    k = args.signers or threshold(m)
    if k > m:
        raise SystemExit(f"popos: --signers {k} exceeds committee size {m}")
    trace = gen_trace(args.epochs, m, k, args.seed)
    trace.write(args.out, ledger_sidecar(args.out) if args.ledger else None)
    log.info("wrote %d epochs to %s", trace.n, args.out)
    print(trace.commitment.hex())
    return 0


def cmd_splice(args) -> int:
    honest = _read(args.honest)
    alt = _read(args.alt)
    if not 1 <= args.at < min(honest.n, alt.n):
        raise SystemExit(f"popos: --at must lie in [1, {min(honest.n, alt.n) - 1}]")
    out = splice(honest, alt, args.at)
    out.write(args.out, ledger_sidecar(args.out) if out.ledger is not None else None)
    bad = validate_trace(out, honest.genesis)
    print(f"spliced at {args.at}; first invalid epoch {bad}")
    return 0


def cmd_serve(args) -> int:
    trace = _read(args.trace)
    server = serve_tcp(ProverSession(trace, args.degree, str(args.trace)), args.host, args.port)
    host, port = server.server_address[:2]
    print(f"serving {trace.n} epochs on {host}:{port}", flush=True)
    try:
        if args.duration is None:
            while True:
                time.sleep(3600)
        time.sleep(args.duration)
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


def _endpoints(spec: str) -> list[tuple[str, int]] | None:
    parts = [x.strip() for x in spec.split(",") if x.strip()]
    matches = [_ENDPOINT.match(x) for x in parts]
    if not parts or not all(matches):
        raise SystemExit(f"popos: cannot parse --provers {spec!r}")
    if len(parts) == 1 and matches[0]["host"].isdigit():
        return None
    return [(mt["host"], int(mt["port"])) for mt in matches]


def _remote_bench(args, endpoints, cfg: ClientConfig) -> list[SyncReport]:
    if args.genesis is None:
        raise SystemExit("popos: endpoint provers need --genesis TRACE")
    ref = _read(args.genesis)
    if args.horizons != [ref.n]:
        raise SystemExit(f"popos: endpoints serve a fixed horizon of {ref.n} epochs")
    meter = Meter()
    links = [TcpLink(h, p, f"{h}:{p}", meter, cfg.link) for h, p in endpoints]
    try:
        return [sync(cfg, links, ref.n, ref.genesis)]
    except SyncFailed as exc:
        return [exc.report]
    finally:
        for link in links:
            link.close()


def cmd_bench(args) -> int:
    cfg = ClientConfig(args.client, args.param, LinkConfig(latency_ms=args.latency_ms))
    endpoints = _endpoints(args.provers)
    if endpoints is not None:
        reports = _remote_bench(args, endpoints, cfg)
    else:
        try:
            topo = Topology.parse(args.provers)
        except ValueError as exc:
            raise SystemExit(f"popos: {exc}") from None
        if topo.adversaries and min(args.horizons) < 2:
            raise SystemExit("popos: adversarial topologies need horizons of at least 2")
        reports = run_bench(args.client, args.horizons, cfg.param, topo, _committee(args), args.seed, link=cfg.link)
    if args.csv is None:
        sys.stdout.write(reports_to_csv(reports))
    else:
        fresh = not args.csv.exists() or args.csv.stat().st_size == 0
        with open(args.csv, "a", newline="") as fh:
            fh.write(reports_to_csv(reports, header=fresh))
    return 0


COMMANDS = {"gen": cmd_gen, "splice": cmd_splice, "serve": cmd_serve, "bench": cmd_bench}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("POPOS_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())

"""
Provers over loopback TCP
=========================

The same sessions can sit behind sockets. The frames are identical to the
in-process links, so the metered transcript matches byte for byte.
"""

from popos.bench import Topology, build_sessions, make_traces
from popos.clients import ClientConfig, slc_sync
from popos.transport import Meter, SimLink, TcpLink, serve_tcp

honest, alts = make_traces(64, 8, seed=11)
sessions, _ = build_sessions(honest, alts, Topology(1, 3), seed=11, d=4)
servers = [serve_tcp(s) for s in sessions]

tcp_meter, sim_meter = Meter(), Meter()
tcp_links = [TcpLink(*srv.server_address[:2], s.name, tcp_meter) for srv, s in zip(servers, sessions)]
sim_links = [SimLink(s, s.name, sim_meter) for s in sessions]
cfg = ClientConfig("slc", 4)
over_tcp = slc_sync(cfg, tcp_links, 64, honest.genesis)
in_process = slc_sync(cfg, sim_links, 64, honest.genesis)

for link in tcp_links:
    link.close()
for srv in servers:
    srv.shutdown()
    srv.server_close()

# %%
print("tcp:", over_tcp.commitment.hex()[:16], over_tcp.bytes_down, tcp_meter.transcript_digest[:16])
print("sim:", in_process.commitment.hex()[:16], in_process.bytes_down, sim_meter.transcript_digest[:16])

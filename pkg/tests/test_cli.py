from __future__ import annotations

import re
import subprocess
import sys

import pytest

from popos.chainsim import ExecutionTrace, validate_trace
from popos.cli import main
from popos.transport import TcpLink
from popos.wire import ClaimMode, ClaimRequest, ClaimResponse


def gen(tmp_path, name, seed, epochs=8, extra=()):
    out = tmp_path / name
    assert main(["gen", "--epochs", str(epochs), "--committee", "6", "--seed", str(seed), "--out", str(out), *extra]) == 0
    return out


def test_gen_smoke_and_revalidation(tmp_path, capsys):
    path = gen(tmp_path, "a.pops", 1, extra=["--ledger"])
    t = ExecutionTrace.read(path)
    assert t.n == 8 and t.m == 6
    assert validate_trace(t) is None
    assert capsys.readouterr().out.strip() == t.commitment.hex()
    assert (tmp_path / "a.pops.ledger.json").exists()


def test_gen_is_deterministic(tmp_path):
    a, b = gen(tmp_path, "a.pops", 4), gen(tmp_path, "b.pops", 4)
    assert a.read_bytes() == b.read_bytes()


def test_gen_rejects_bad_params(tmp_path):
    with pytest.raises(SystemExit):
        main(["gen", "--epochs", "0", "--out", str(tmp_path / "x")])
    with pytest.raises(SystemExit):
        main(["gen", "--epochs", "4", "--committee", "4", "--signers", "9", "--out", str(tmp_path / "x")])
    with pytest.raises(ValueError):
        main(["gen", "--epochs", "4", "--committee", "4", "--signers", "2", "--out", str(tmp_path / "x")])


def test_splice_fails_revalidation_at_point(tmp_path, capsys):
    a, b = gen(tmp_path, "a.pops", 1), gen(tmp_path, "b.pops", 2)
    out = tmp_path / "s.pops"
    assert main(["splice", "--honest", str(a), "--alt", str(b), "--at", "5", "--out", str(out)]) == 0
    s = ExecutionTrace.read(out)
    assert validate_trace(s, ExecutionTrace.read(a).genesis) == 5
    assert "first invalid epoch 5" in capsys.readouterr().out


@pytest.mark.parametrize("at", ["0", "8", "-2"])
def test_splice_rejects_out_of_range(tmp_path, at):
    a, b = gen(tmp_path, "a.pops", 1), gen(tmp_path, "b.pops", 2)
    with pytest.raises(SystemExit):
        main(["splice", "--honest", str(a), "--alt", str(b), "--at", at, "--out", str(tmp_path / "s")])


def test_missing_file_reported(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["splice", "--honest", str(tmp_path / "no"), "--alt", str(tmp_path / "no"), "--at", "1", "--out", "x"])
    assert "no such trace" in str(err.value)


def test_serve_answers_claims(tmp_path):
    a = gen(tmp_path, "a.pops", 1)
    proc = subprocess.Popen(
        [sys.executable, "-m", "popos.cli", "serve", "--trace", str(a), "--port", "0", "--duration", "20"],
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        line = proc.stdout.readline()
        port = int(re.search(r":(\d+)$", line.strip()).group(1))
        link = TcpLink("127.0.0.1", port)
        reply = link.request(ClaimRequest(ClaimMode.COMMITMENT))
        link.close()
        assert isinstance(reply, ClaimResponse)
        assert reply.claim.commitment == ExecutionTrace.read(a).commitment
    finally:
        proc.terminate()
        proc.wait(10)


def test_bench_empty_horizons_is_usage_error(capsys):
    with pytest.raises(SystemExit) as err:
        main(["bench", "--client", "slc", "--horizons", ""])
    assert err.value.code == 2
    assert "empty horizon list" in capsys.readouterr().err


def test_bench_is_reproducible(tmp_path):
    args = ["bench", "--client", "slc", "--horizons", "8,16", "--param", "2", "--provers", "1:3", "--committee", "6"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    main(args + ["--csv", str(first)])
    main(args + ["--csv", str(second)])
    assert first.read_text() == second.read_text()
    lines = first.read_text().splitlines()
    assert lines[0].startswith("flavor,N,m,param")
    assert len(lines) == 3
    main(args + ["--csv", str(first)])
    assert len(first.read_text().splitlines()) == 5


def test_bench_stdout_all_flavors(capsys):
    for flavor in ("tlc", "olc", "slc"):
        main(["bench", "--client", flavor, "--horizons", "6", "--provers", "1:1", "--committee", "4", "--param", "3"])
    rows = [l for l in capsys.readouterr().out.splitlines() if not l.startswith("flavor")]
    assert len({r.split(",")[-1] for r in rows}) == 1


def test_bench_unreachable_endpoints_reported_per_row(tmp_path, capsys):
    a = gen(tmp_path, "a.pops", 1)
    import socket

    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    main(["bench", "--client", "slc", "--horizons", "8", "--provers", f"localhost:{port}", "--genesis", str(a)])
    row = capsys.readouterr().out.splitlines()[-1]
    assert row.split(",")[-1].startswith("error:")


def test_bench_rejects_bad_prover_spec():
    with pytest.raises(SystemExit):
        main(["bench", "--client", "slc", "--horizons", "8", "--provers", "one:two:three"])
    with pytest.raises(SystemExit):
        main(["bench", "--client", "slc", "--horizons", "8", "--provers", "localhost:1"])

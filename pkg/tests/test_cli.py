import pytest

import reference as ref
from vanetsec import cli, mutesla

MASTER = "000102030405060708090a0b0c0d0e0f"
SMALL_SCENARIO = """\
vehicle_count = 8
sim_duration_s = 6
warmup_s = 2
traffic_load = 1, 2
protocol_mode = SECURE_PRIMITIVES, GPSR
"""


@pytest.fixture
def keys(tmp_path):
    assert cli.main(["keygen", "--master-hex", MASTER, "--id-a", "3", "--id-b", "9",
                     "--out-dir", str(tmp_path)]) == 0
    return tmp_path / "node-3.keys", tmp_path / "node-9.keys"


class TestKeygen:
    def test_writes_both_sides_and_keeps_keys_off_stdout(self, tmp_path, capsys):
        cli.main(["keygen", "--master-hex", MASTER, "--id-a", "3", "--id-b", "9",
                  "--out-dir", str(tmp_path)])
        out = capsys.readouterr().out
        a = cli.read_key_file(tmp_path / "node-3.keys")
        b = cli.read_key_file(tmp_path / "node-9.keys")
        assert (a.local_id, a.peer_id, b.local_id, b.peer_id) == (3, 9, 9, 3)
        assert a.k_enc_send == b.k_enc_recv and a.k_mac_recv == b.k_mac_send
        assert MASTER not in out and a.k_enc_send.hex() not in out

    def test_keys_match_oracle(self, keys):
        shared, directional = ref.pair_keys(bytes.fromhex(MASTER), 3, 9)
        a = cli.read_key_file(keys[0])
        assert {a.k_enc_send, a.k_mac_send, a.k_enc_recv, a.k_mac_recv} == set(directional.values())

    def test_print_flag(self, tmp_path, capsys):
        cli.main(["keygen", "--master-hex", MASTER, "--id-a", "1", "--id-b", "2",
                  "--out-dir", str(tmp_path), "--print"])
        assert f"master_key = {MASTER}" in capsys.readouterr().out

    def test_seeded_is_deterministic(self, tmp_path):
        for d in ("x", "y"):
            cli.main(["keygen", "--seed", "5", "--id-a", "1", "--id-b", "2",
                      "--out-dir", str(tmp_path / d)])
        assert (tmp_path / "x/node-1.keys").read_text() == (tmp_path / "y/node-1.keys").read_text()

    @pytest.mark.parametrize("argv", [
        ["--master-hex", "zz", "--id-a", "1", "--id-b", "2"],
        ["--master-hex", "00" * 8, "--id-a", "1", "--id-b", "2"],
        ["--master-hex", MASTER, "--id-a", "4", "--id-b", "4"],
    ])
    def test_bad_input(self, tmp_path, argv):
        assert cli.main(["keygen", *argv, "--out-dir", str(tmp_path)]) == 2


class TestChain:
    def test_table(self, capsys):
        assert cli.main(["chain", "--seed", "0102030405060708", "--n", "2",
                         "--t0", "500", "--t-int", "1000"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "index,key_hex,interval_start_ms"
        rows = [ln.split(",") for ln in lines[1:]]
        assert [r[0] for r in rows] == ["0", "1", "2"]
        assert [r[2] for r in rows] == ["500", "1500", "2500"]
        seed = bytes.fromhex("0102030405060708")
        want = [ref.chain_step(ref.chain_step(seed)), ref.chain_step(seed), seed]
        assert [bytes.fromhex(r[1]) for r in rows] == want
        assert [bytes.fromhex(r[1]) for r in rows] == mutesla.chain_keys(seed, 2)

    def test_verify_round_trip_and_corruption(self, tmp_path, capsys):
        path = tmp_path / "chain.csv"
        assert cli.main(["chain", "--seed", "0102030405060708", "--n", "4", "--out", str(path)]) == 0
        assert cli.main(["chain", "--verify", str(path)]) == 0
        lines = path.read_text().splitlines()
        idx, key, t = lines[3].split(",")
        lines[3] = ",".join([idx, ("ff" if key[:2] != "ff" else "00") + key[2:], t])
        path.write_text("\n".join(lines) + "\n")
        capsys.readouterr()
        assert cli.main(["chain", "--verify", str(path)]) == 1
        assert "linkage broken" in capsys.readouterr().err

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "chain.csv"
        path.write_text("index,key_hex,interval_start_ms\n0,abc,0\n")
        assert cli.main(["chain", "--verify", str(path)]) == 1

    @pytest.mark.parametrize("argv", [
        ["--seed", "nothex", "--n", "2"],
        ["--seed", "0102", "--n", "2"],
        ["--seed", "0102030405060708", "--n", "0"],
        ["--n", "3"],
    ])
    def test_usage_errors(self, argv):
        assert cli.main(["chain", *argv]) == 2


class TestSealOpen:
    def test_round_trip(self, keys, tmp_path, capsys):
        msg = tmp_path / "msg.bin"
        msg.write_bytes(bytes(range(30)))
        pkt, plain = tmp_path / "pkt.bin", tmp_path / "plain.bin"
        assert cli.main(["seal", "--keys", str(keys[0]), "--counter", "41",
                         "--in", str(msg), "--out", str(pkt)]) == 0
        assert len(pkt.read_bytes()) == 50
        assert cli.main(["open", "--keys", str(keys[1]), "--counter", "41",
                         "--in", str(pkt), "--out", str(plain)]) == 0
        assert plain.read_bytes() == msg.read_bytes()
        assert "next counter 42" in capsys.readouterr().out

    def _sealed(self, keys, tmp_path):
        msg = tmp_path / "msg.bin"
        msg.write_bytes(b"hello")
        pkt = tmp_path / "pkt.bin"
        cli.main(["seal", "--keys", str(keys[0]), "--counter", "0", "--in", str(msg), "--out", str(pkt)])
        return pkt

    def test_truncated(self, keys, tmp_path, capsys):
        pkt = self._sealed(keys, tmp_path)
        pkt.write_bytes(pkt.read_bytes()[:10])
        capsys.readouterr()
        assert cli.main(["open", "--keys", str(keys[1]), "--counter", "0", "--in", str(pkt)]) == 1
        err = capsys.readouterr().err
        assert "MalformedPacket" in err
        assoc = cli.read_key_file(keys[1])
        assert assoc.k_mac_recv.hex() not in err and assoc.k_enc_recv.hex() not in err

    def test_tampered(self, keys, tmp_path, capsys):
        pkt = self._sealed(keys, tmp_path)
        raw = bytearray(pkt.read_bytes())
        raw[-1] ^= 1
        pkt.write_bytes(bytes(raw))
        assert cli.main(["open", "--keys", str(keys[1]), "--counter", "0", "--in", str(pkt)]) == 1
        assert "MacMismatch" in capsys.readouterr().err

    def test_wrong_counter_fails(self, keys, tmp_path):
        pkt = self._sealed(keys, tmp_path)
        assert cli.main(["open", "--keys", str(keys[1]), "--counter", "1", "--in", str(pkt)]) == 1

    def test_wrong_direction_fails(self, keys, tmp_path):
        pkt = self._sealed(keys, tmp_path)
        assert cli.main(["open", "--keys", str(keys[0]), "--counter", "0", "--in", str(pkt)]) == 1

    def test_counter_out_of_range(self, keys, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["seal", "--keys", str(keys[0]), "--counter", str(2**32),
                      "--in", "x", "--out", str(tmp_path / "p")])
        assert exc.value.code == 2

    def test_bad_key_file(self, tmp_path):
        bad = tmp_path / "bad.keys"
        bad.write_text("local_id = 1\n")
        assert cli.main(["open", "--keys", str(bad), "--counter", "0", "--in", str(bad)]) == 2


class TestRunSim:
    def test_seeded_runs_are_identical(self, tmp_path, capsys):
        cfg = tmp_path / "s.scenario"
        cfg.write_text(SMALL_SCENARIO)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert cli.main(["run-sim", str(cfg), "--seed", "7", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert len(a.read_text().splitlines()) == 1 + 4
        summary = capsys.readouterr().out.splitlines()
        assert len(summary) == 8 and summary[0].startswith("load=1 mode=SECURE_PRIMITIVES")

    def test_trace_file(self, tmp_path):
        cfg = tmp_path / "s.scenario"
        cfg.write_text(SMALL_SCENARIO)
        trace = tmp_path / "t.log"
        cli.main(["run-sim", str(cfg), "--out", str(tmp_path / "m.csv"), "--trace", str(trace)])
        text = trace.read_text()
        assert text.startswith("# load=1 mode=SECURE_PRIMITIVES") and "SEND" in text

    def test_missing_config(self, tmp_path):
        assert cli.main(["run-sim", str(tmp_path / "none.scenario")]) == 2

    def test_unknown_key(self, tmp_path, capsys):
        cfg = tmp_path / "s.scenario"
        cfg.write_text("warp_speed = 9\n")
        assert cli.main(["run-sim", str(cfg)]) == 2
        assert "unknown key" in capsys.readouterr().err


class TestReport:
    def _csv(self, tmp_path, name, modes):
        cfg = tmp_path / f"{name}.scenario"
        cfg.write_text(SMALL_SCENARIO.replace("SECURE_PRIMITIVES, GPSR", modes))
        out = tmp_path / f"{name}.csv"
        cli.main(["run-sim", str(cfg), "--out", str(out)])
        return out

    def test_pivot(self, tmp_path):
        sec, dsdv = self._csv(tmp_path, "sec", "SECURE_PRIMITIVES"), self._csv(tmp_path, "dsdv", "DSDV")
        out = tmp_path / "pivot.csv"
        assert cli.main(["report", str(sec), str(dsdv), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("load,storage_secure,storage_dsdv")
        assert len(lines) == 3

    def test_mismatch(self, tmp_path, capsys):
        sec = self._csv(tmp_path, "sec", "SECURE_PRIMITIVES")
        other = tmp_path / "other.csv"
        other.write_text("\n".join(sec.read_text().splitlines()[:2]).replace("SECURE_PRIMITIVES", "DSDV") + "\n")
        assert cli.main(["report", str(sec), str(other)]) == 2
        assert "grid" in capsys.readouterr().err

    def test_not_a_metrics_file(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("x,y\n")
        assert cli.main(["report", str(bad)]) == 2


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        cli.main(["chain", "--bogus"])
    assert exc.value.code == 2

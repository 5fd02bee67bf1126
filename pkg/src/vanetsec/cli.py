"""Command line for the vanetsec toolkit.

Exit codes: 0 success, 1 protocol or verification failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

from . import crypto, mutesla, snep
from .sim import engine, report
from .sim.config import ConfigError, default_scenario_path, load_config
from .wire import MalformedPacket, SecurePacket

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

KEY_FIELDS = ("local_id", "peer_id", "k_enc_send", "k_mac_send", "k_enc_recv", "k_mac_recv")


class UsageError(Exception):
    pass


class VerificationError(Exception):
    pass


def _hex(value: str, size: int | None, what: str) -> bytes:
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise UsageError(f"{what} is not valid hex") from None
    if size is not None and len(raw) != size:
        raise UsageError(f"{what} must be {size} bytes, got {len(raw)}")
    return raw


def write_key_file(path: Path, keys: crypto.PairKeys) -> None:
    lines = [f"local_id = {keys.local_id}", f"peer_id = {keys.peer_id}"]
    for name in KEY_FIELDS[2:]:
        lines.append(f"{name} = {getattr(keys, name).hex()}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_key_file(path: Path) -> snep.SecurityAssociation:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read key file {path}: {exc.strerror}") from None
    values = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = (s.strip() for s in line.partition("="))
        if not sep or key not in KEY_FIELDS:
            raise UsageError(f"bad line in key file {path}: {line!r}")
        values[key] = val
    missing = [k for k in KEY_FIELDS if k not in values]
    if missing:
        raise UsageError(f"key file {path} is missing {', '.join(missing)}")
    try:
        ids = int(values["local_id"]), int(values["peer_id"])
    except ValueError:
        raise UsageError(f"key file {path} has non-numeric ids") from None
    keys = [_hex(values[k], crypto.KEY_SIZE, k) for k in KEY_FIELDS[2:]]
    try:
        return snep.SecurityAssociation(*ids, *keys)
    except ValueError as exc:
        raise UsageError(f"key file {path}: {exc}") from None


def _read_bytes(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _counter(value: str) -> int:
    try:
        ctr = int(value, 0)
    except ValueError:
        raise argparse.ArgumentTypeError("counter must be an integer") from None
    if not 0 <= ctr <= snep.COUNTER_MAX:
        raise argparse.ArgumentTypeError("counter must fit in 32 bits")
    return ctr


def cmd_keygen(args) -> int:
    if args.master_hex:
        km = _hex(args.master_hex, crypto.KEY_SIZE, "master key")
    else:
        km = random.Random(f"{args.seed}/keygen").randbytes(crypto.KEY_SIZE)
    try:
        keys = crypto.derive_pair_keys(km, args.id_a, args.id_b)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k in (keys, keys.swapped()):
        path = out / f"node-{k.local_id}.keys"
        write_key_file(path, k)
        print(f"wrote {path}")
    if args.print:
        print(f"master_key = {km.hex()}")
        print(f"shared_key = {keys.shared.hex()}")
    return EXIT_OK


def _chain_rows(keys: list[bytes], t0: int, t_int: int) -> list[str]:
    return [f"{i},{k.hex()},{t0 + i * t_int}" for i, k in enumerate(keys)]


def cmd_chain(args) -> int:
    if args.verify:
        return _verify_chain_table(args.verify)
    if args.seed is None or args.n is None:
        raise UsageError("chain needs --seed and --n (or --verify FILE)")
    seed = _hex(args.seed, crypto.CHAIN_KEY_SIZE, "seed")
    if args.n < 1 or args.t_int <= 0 or args.d < 2:
        raise UsageError("need n >= 1, t_int > 0 and d >= 2")
    keys = mutesla.chain_keys(seed, args.n)
    for i in range(len(keys) - 1):
        if crypto.chain_step(keys[i + 1]) != keys[i]:
            print(f"chain linkage broken at index {i}", file=sys.stderr)
            return EXIT_FAIL
    lines = ["index,key_hex,interval_start_ms"] + _chain_rows(keys, args.t0, args.t_int)
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _verify_chain_table(path: str) -> int:
    lines = [ln.strip() for ln in _read_bytes(path).decode("utf-8", "replace").splitlines() if ln.strip()]
    if not lines or lines[0] != "index,key_hex,interval_start_ms":
        raise UsageError(f"{path} is not a chain table")
    keys = []
    for n, line in enumerate(lines[1:]):
        parts = line.split(",")
        try:
            if len(parts) != 3 or int(parts[0]) != n:
                raise ValueError
            key = bytes.fromhex(parts[1])
            if len(key) != crypto.CHAIN_KEY_SIZE:
                raise ValueError
        except ValueError:
            print(f"row {n}: malformed chain row", file=sys.stderr)
            return EXIT_FAIL
        keys.append(key)
    for i in range(len(keys) - 1):
        if crypto.chain_step(keys[i + 1]) != keys[i]:
            print(f"chain linkage broken between index {i} and {i + 1}", file=sys.stderr)
            return EXIT_FAIL
    print(f"chain of {len(keys)} keys verified")
    return EXIT_OK


def cmd_seal(args) -> int:
    assoc = read_key_file(args.keys)
    assoc.ctr_send = args.counter
    message = _read_bytes(args.input)
    try:
        pkt = snep.seal(assoc, message)
    except (ValueError, snep.SnepError) as exc:
        raise UsageError(str(exc)) from None
    Path(args.out).write_bytes(pkt.to_bytes())
    print(f"sealed {len(message)}-byte message into {len(pkt)}-byte packet; next counter {assoc.ctr_send}")
    return EXIT_OK


def cmd_open(args) -> int:
    assoc = read_key_file(args.keys)
    assoc.ctr_recv = args.counter
    data = _read_bytes(args.input)
    try:
        plain = snep.open_packet(assoc, SecurePacket.from_bytes(data))
    except MalformedPacket as exc:
        raise VerificationError(f"MalformedPacket: {exc}") from None
    except snep.SnepError as exc:
        raise VerificationError(f"{type(exc).__name__}: {exc}") from None
    if args.out:
        Path(args.out).write_bytes(plain)
        print(f"opened packet: {len(plain)} bytes; next counter {assoc.ctr_recv}")
    else:
        sys.stdout.buffer.write(plain)
        sys.stdout.flush()
    return EXIT_OK


def _load_scenario(path: str, seed: int | None):
    overrides = {} if seed is None else {"rng_seed": seed}
    if path == "default" and not Path(path).exists():
        path = str(default_scenario_path())
    try:
        return load_config(path, **overrides)
    except ConfigError as exc:
        raise UsageError(f"config error: {exc}") from None


def cmd_run_sim(args) -> int:
    config = _load_scenario(args.config, args.seed)

    def progress(res):
        m = res.metrics
        print(f"load={report.fmt_load(m.load)} mode={m.mode.value} "
              f"delay={m.avg_e2e_delay_ms:.3f}ms auth_delay={m.avg_auth_delay_ms:.1f}ms "
              f"delivery={m.delivery_ratio:.3f} storage={m.avg_storage_bytes:.1f}B "
              f"sent={m.packets_sent}")

    result = engine.run(config, trace=bool(args.trace), progress=progress)
    text = report.csv_text(result.rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for p in result.points:
                m = p.metrics
                fh.write(f"# load={report.fmt_load(m.load)} mode={m.mode.value}\n")
                fh.writelines(line + "\n" for line in p.trace)
    return EXIT_OK


def cmd_report(args) -> int:
    tables = []
    for path in args.csv:
        try:
            with open(path, encoding="utf-8", newline="") as fh:
                tables.append(report.read_csv(fh))
        except OSError as exc:
            raise UsageError(f"cannot read {path}: {exc.strerror}") from None
        except (report.ReportError, ValueError) as exc:
            raise UsageError(f"{path}: {exc}") from None
    try:
        header, body = report.pivot(tables)
    except (report.ReportError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            report.write_pivot(header, body, fh)
    else:
        report.write_pivot(header, body, sys.stdout)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vanetsec", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="derive a node pair's SNEP key files")
    src = k.add_mutually_exclusive_group(required=True)
    src.add_argument("--master-hex", help="16-byte master key as hex")
    src.add_argument("--seed", type=int, help="derive the master key from this seed")
    k.add_argument("--id-a", type=int, required=True)
    k.add_argument("--id-b", type=int, required=True)
    k.add_argument("--out-dir", default=".")
    k.add_argument("--print", action="store_true", help="also print the master and shared keys")
    k.set_defaults(func=cmd_keygen)

    c = sub.add_parser("chain", help="print or verify a μTESLA key chain table")
    c.add_argument("--seed", help="8-byte chain seed K_n as hex")
    c.add_argument("--n", type=int)
    c.add_argument("--t0", type=int, default=0)
    c.add_argument("--t-int", type=int, default=1000)
    c.add_argument("--d", type=int, default=2)
    c.add_argument("--out")
    c.add_argument("--verify", metavar="FILE", help="check F-linkage of a printed chain table")
    c.set_defaults(func=cmd_chain)

    s = sub.add_parser("seal", help="seal one message file into a SNEP packet")
    s.add_argument("--keys", required=True)
    s.add_argument("--counter", type=_counter, required=True)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_seal)

    o = sub.add_parser("open", help="verify and decrypt one SNEP packet file")
    o.add_argument("--keys", required=True)
    o.add_argument("--counter", type=_counter, required=True, help="expected receive counter")
    o.add_argument("--in", dest="input", required=True)
    o.add_argument("--out")
    o.set_defaults(func=cmd_open)

    r = sub.add_parser("run-sim", help="run a scenario sweep and write the metrics CSV")
    r.add_argument("config", help="scenario file, or 'default' for the bundled one")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--trace", metavar="FILE", help="write the event trace")
    r.set_defaults(func=cmd_run_sim)

    rep = sub.add_parser("report", help="pivot metrics CSVs into one plot-ready table")
    rep.add_argument("csv", nargs="+")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except VerificationError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

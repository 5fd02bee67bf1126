"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The lines are also gathered into the pytest terminal summary (see conftest).
"""

import random
import time

import pytest

import reference as ref
from vanetsec import crypto, mutesla, snep, zones
from vanetsec.mutesla import RecvStatus
from vanetsec.sim import Mode, ScenarioConfig, engine, report
from vanetsec.wire import HEADER_SIZE, SecurePacket

CRITERIA = {
    1: "RC5-32/12/16 conformance",
    2: "SNEP property suite",
    3: "μTESLA safety and completeness",
    4: "security overhead of a 30-byte message",
    5: "handoff cheaper than bootstrap, no resets",
    6: "storage ordering SECURE < GPSR <= BMFR < DSDV",
    7: "crypto share of delay below 5%",
    8: "determinism of the default sweep",
}
RESULTS: dict[int, str] = {}


def verdict(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {CRITERIA[n]} ({detail})"
    RESULTS[n] = line
    print(line)
    assert ok, line


def test_criterion_1_rc5_conformance():
    start = time.perf_counter()
    mismatches = 0
    for key, pt, ct in ref.RC5_VECTORS:
        k, p = bytes.fromhex(key), bytes.fromhex(pt)
        sched = crypto.rc5_setup(k)
        got = crypto.rc5_encrypt_block(sched, p)
        oracle = ref.encrypt(ref.key_schedule(k), p)
        mismatches += got.hex() != ct or oracle.hex() != ct
        mismatches += crypto.rc5_decrypt_block(sched, got) != p
        mismatches += list(sched.words) != ref.key_schedule(k)
    elapsed = time.perf_counter() - start
    verdict(1, mismatches == 0 and elapsed < 1.0,
            f"{len(ref.RC5_VECTORS)} vectors, {mismatches} mismatches, {elapsed * 1000:.1f} ms")


def _tamper(pkt, rng):
    raw = bytearray(pkt.to_bytes())
    # keep version/type/length intact so the packet still parses
    pos = rng.choice([rng.randrange(2, 10), rng.randrange(HEADER_SIZE, len(raw))])
    raw[pos] ^= 1 << rng.randrange(8)
    return SecurePacket.from_bytes(bytes(raw))


def test_criterion_2_snep_properties():
    start = time.perf_counter()
    rng = random.Random(2024)
    km = rng.randbytes(16)
    a = snep.SecurityAssociation.derive(km, 11, 22, rng=random.Random(1))
    b = snep.SecurityAssociation.derive(km, 22, 11, rng=random.Random(2))
    trials = 10_000
    stats = dict(genuine=0, genuine_ok=0, tampered=0, tampered_ok=0, replays=0, replays_ok=0,
                 desync_expected=0, desync_failed=0, syncs=0)
    accepted = []
    gap = 0  # counters consumed since the last accepted packet
    for n in range(trials):
        msg = rng.randbytes(rng.randint(0, 64))
        pkt = snep.seal(a, msg)
        r = rng.random()
        if r < 0.08:
            # start a loss burst; lengths straddle the window edge
            burst = rng.choice([1, 2, 5, 14, 15, 16, 17, 30])
            for _ in range(burst - 1):
                snep.seal(a, b"lost")
            gap += burst
            continue
        if r < 0.16:
            stats["tampered"] += 1
            try:
                snep.open_packet(b, _tamper(pkt, rng))
                stats["tampered_ok"] += 1
            except snep.SnepError:
                pass
            gap += 1
            continue
        if r < 0.20 and accepted:
            stats["replays"] += 1
            try:
                snep.open_packet(b, rng.choice(accepted))
                stats["replays_ok"] += 1
            except snep.SnepError:
                pass
        stats["genuine"] += 1
        in_window = gap <= snep.RESYNC_WINDOW - 1
        try:
            out = snep.open_packet(b, pkt)
        except snep.MacMismatch:
            out = None
        if in_window:
            stats["genuine_ok"] += out == msg
        else:
            stats["desync_expected"] += 1
            stats["desync_failed"] += out is None
            snep.counter_sync(b, a)
            stats["syncs"] += 1
            stats["genuine"] -= 1
            gap = 0
            continue
        accepted.append(pkt)
        if len(accepted) > 64:
            accepted.pop(0)
        gap = 0

    # explicit burst sweep on fresh sessions
    window_ok = True
    for burst in range(0, 21):
        x = snep.SecurityAssociation.derive(km, 1, 2, rng=random.Random(burst))
        y = snep.SecurityAssociation.derive(km, 2, 1, rng=random.Random(-burst))
        for _ in range(burst):
            snep.seal(x, b"lost")
        try:
            recovered = snep.open_packet(y, snep.seal(x, b"next")) == b"next"
        except snep.MacMismatch:
            recovered = False
        if recovered != (burst <= 15):
            window_ok = False
        if not recovered:
            snep.counter_sync(x, y)
            window_ok &= snep.open_packet(y, snep.seal(x, b"after")) == b"after"
    elapsed = time.perf_counter() - start
    ok = (stats["genuine_ok"] == stats["genuine"] and stats["tampered_ok"] == 0
          and stats["replays_ok"] == 0 and stats["desync_failed"] == stats["desync_expected"]
          and window_ok and elapsed < 10.0)
    verdict(2, ok, f"{trials} trials: {stats['genuine_ok']}/{stats['genuine']} genuine opened, "
                   f"{stats['tampered_ok']}/{stats['tampered']} tampered opened, "
                   f"{stats['replays_ok']}/{stats['replays']} replays accepted, "
                   f"{stats['desync_failed']}/{stats['desync_expected']} over-window bursts failed, "
                   f"window sweep {'ok' if window_ok else 'wrong'}, {elapsed:.2f} s")


T_INT, D, MAX_SKEW = 1000, 2, 100.0


def _forgery_run(rng, attempts):
    """Adversary learns every key the moment it is disclosed and forges with it."""
    intervals = attempts // 50 + 10
    ch = mutesla.generate_chain(rng.randbytes(8), intervals + D + 2, 0, T_INT, D)
    st = mutesla.BroadcastAuthState(0, ch.commitment, ch.schedule, MAX_SKEW)
    offset = rng.uniform(-MAX_SKEW, MAX_SKEW)
    events = []
    for k in range(D, intervals + D):
        events.append((k * T_INT, 0, "disclose", k - D))
    made = 0
    while made < attempts:
        t = rng.uniform(D * T_INT, (intervals + D - 1) * T_INT)
        events.append((t, 1, "forge", None))
        made += 1
    events.sort(key=lambda e: (e[0], e[1]))
    forged_accepted = 0
    tried = 0
    for t, _, kind, arg in events:
        if kind == "disclose":
            res = mutesla.process_disclosure(st, arg, ch.keys[arg])
            forged_accepted += len(res.authenticated)
            continue
        known = ch.interval_of(t) - D         # newest key disclosed by sender time t
        strategy = rng.randrange(3)
        if strategy == 0:
            i = rng.randint(0, known)         # correctly MACed under a disclosed key
            tag_key = mutesla.interval_mac_key(ch, i)
        elif strategy == 1:
            i = known + rng.randint(1, D + 1) # claims an undisclosed interval
            tag_key = mutesla.interval_mac_key(ch, known)
        else:
            i = known + rng.randint(1, D + 1)
            tag_key = rng.randbytes(16)
        body = b"forged" + rng.randbytes(4)
        payload = i.to_bytes(4, "big") + max(i - D, 0).to_bytes(4, "big") + bytes(8) + body
        header = SecurePacket(mutesla.PacketType.TESLA_BCAST, 9, 0xFFFFFFFF, payload, bytes(8)).header()
        pkt = SecurePacket(mutesla.PacketType.TESLA_BCAST, 9, 0xFFFFFFFF, payload,
                           crypto.cbc_mac(tag_key, header + payload))
        tried += 1
        status, rel = mutesla.recv_check_and_buffer(st, pkt, t + offset)
        forged_accepted += status is RecvStatus.AUTHENTICATED
    # flush: disclose everything that remains
    res = mutesla.process_disclosure(st, ch.n, ch.keys[ch.n])
    forged_accepted += len(res.authenticated)
    return tried, forged_accepted


def _completeness_run(rng, loss, offset, packets):
    intervals = packets // 20 + 4
    ch = mutesla.generate_chain(rng.randbytes(8), intervals + 60, 0, T_INT, D)
    st = mutesla.BroadcastAuthState(0, ch.commitment, ch.schedule, MAX_SKEW)
    events = []
    for n in range(packets):
        t_send = rng.uniform(0, intervals * T_INT)
        delay = rng.uniform(0, 50)
        events.append((t_send + delay, 1, n, mutesla.bcast_seal(ch, t_send, 1, n.to_bytes(4, "big"))))
    # one standalone disclosure per interval, each lost with probability ``loss``;
    # disclosures continue past the traffic so every key eventually arrives
    for k in range(D, ch.n + 1):
        if rng.random() >= loss:
            events.append((k * T_INT + rng.uniform(0, 50), 0, None, k - D))
    events.sort(key=lambda e: (e[0], e[1]))
    released = []
    rejected = 0
    for t, kind, n, item in events:
        if kind == 1:
            status, rel = mutesla.recv_check_and_buffer(st, item, t + offset, token=n)
            if status not in (RecvStatus.BUFFERED, RecvStatus.AUTHENTICATED):
                rejected += 1
            if rel is not None:
                released.append(rel)
        else:
            res = mutesla.process_disclosure(st, item, ch.keys[item])
            released.extend(res.authenticated)
            rejected += len(res.failed)
    order = [r.interval for r in released]
    complete = sorted(r.token for r in released) == list(range(packets))
    return complete and rejected == 0, order == sorted(order), len(released)


def test_criterion_3_tesla_safety_completeness():
    start = time.perf_counter()
    rng = random.Random(77)
    tried, accepted = _forgery_run(rng, 10_000)
    complete_all = ordered_all = True
    runs = []
    for loss in (0.0, 0.25, 0.5):
        for offset in (-MAX_SKEW, 0.0, MAX_SKEW, rng.uniform(-MAX_SKEW, MAX_SKEW)):
            complete, ordered, n = _completeness_run(rng, loss, offset, 800)
            complete_all &= complete
            ordered_all &= ordered
            runs.append(n)
    elapsed = time.perf_counter() - start
    ok = tried == 10_000 and accepted == 0 and complete_all and ordered_all and elapsed < 30.0
    verdict(3, ok, f"{accepted}/{tried} forgeries accepted; {len(runs)} runs up to 50% disclosure "
                   f"loss and ±{MAX_SKEW:.0f} ms skew: complete={complete_all} ordered={ordered_all}; "
                   f"{elapsed:.2f} s")


def test_criterion_4_overhead():
    a = snep.SecurityAssociation.derive(bytes(16), 1, 2, rng=random.Random(0))
    pkt = snep.seal(a, bytes(30))
    tag = len(pkt.tag)
    ratio = tag / (len(pkt.payload) + tag)
    ok = tag == 8 and 0.20 <= ratio <= 0.22 and ratio == snep.overhead_ratio(30)
    verdict(4, ok, f"{tag}-byte MAC on a 30-byte message, {ratio:.1%} of {len(pkt.payload) + tag} bytes")


def test_criterion_5_handoff(default_sweep):
    result, _ = default_sweep
    secure = [p for p in result.points if p.metrics.mode is Mode.SECURE_PRIMITIVES]
    handoffs = bootstraps = 0
    problems = []
    for point in secure:
        last = {}
        for c in point.crossings:
            if c.kind == "handoff":
                handoffs += 1
                if not c.messages < zones.BOOTSTRAP_MESSAGES or c.messages != 1:
                    problems.append(f"handoff with {c.messages} messages")
                if c.vehicle_ctr_after <= c.vehicle_ctr_before or c.infra_ctr_after < c.infra_ctr_before:
                    problems.append(f"counter reset for vehicle {c.vehicle}")
                if c.commit_after < c.commit_before:
                    problems.append(f"commitment regressed for vehicle {c.vehicle}")
            elif c.kind == "bootstrap":
                bootstraps += 1
                if c.messages != zones.BOOTSTRAP_MESSAGES:
                    problems.append(f"bootstrap with {c.messages} messages")
            else:
                problems.append(f"{c.kind} at t={c.time:.0f} for vehicle {c.vehicle}")
            prev = last.get(c.vehicle)
            now = (c.vehicle_ctr_after, c.infra_ctr_after, c.commit_after)
            if prev is not None and any(x < y for x, y in zip(now, prev)):
                problems.append(f"vehicle {c.vehicle} state went backwards")
            last[c.vehicle] = now
    ok = handoffs > 0 and not problems
    verdict(5, ok, f"{handoffs} handoffs at 1 message, {bootstraps} bootstraps at 4, "
                   f"{len(problems)} violations" + (f": {problems[0]}" if problems else ""))


def test_criterion_6_storage_ordering(default_sweep):
    result, _ = default_sweep
    bad = []
    cfg = ScenarioConfig()
    for load in cfg.traffic_load:
        s = {m: result.point(load, m).metrics.avg_storage_bytes for m in Mode}
        if not s[Mode.SECURE_PRIMITIVES] < s[Mode.GPSR] <= s[Mode.BMFR] < s[Mode.DSDV]:
            bad.append(load)
    first = {m.short: round(result.point(1.0, m).metrics.avg_storage_bytes, 1) for m in Mode}
    verdict(6, not bad and len(cfg.traffic_load) == 10,
            f"{10 - len(bad)}/10 load points ordered; load 1: {first}")


def test_criterion_7_crypto_delay(default_sweep):
    result, elapsed = default_sweep
    cfg = ScenarioConfig()
    shares, auth = [], []
    for load in cfg.traffic_load:
        p = result.point(load, Mode.SECURE_PRIMITIVES)
        shares.append(p.avg_crypto_delay_ms / p.metrics.avg_e2e_delay_ms)
        auth.append(p.metrics.avg_auth_delay_ms)
    lag_ok = all((cfg.tesla_delay - 1) * cfg.tesla_interval <= a <= (cfg.tesla_delay + 1) * cfg.tesla_interval
                 for a in auth)
    ok = max(shares) < 0.05 and lag_ok and elapsed < 60.0
    verdict(7, ok, f"max crypto share {max(shares):.2%}, auth delay {min(auth):.0f}-{max(auth):.0f} ms "
                   f"vs d*t_int = {cfg.tesla_delay * cfg.tesla_interval} ms, sweep {elapsed:.1f} s")


def test_criterion_8_determinism(default_sweep):
    first, _ = default_sweep
    second = engine.run(ScenarioConfig())
    a, b = report.csv_text(first.rows), report.csv_text(second.rows)
    verdict(8, a == b and len(a.splitlines()) == 41,
            f"{len(a.splitlines()) - 1} rows, byte-identical={a == b}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

"""μTESLA broadcast authentication.

The base station MACs each broadcast with the key of the current time interval
and discloses that key ``d`` intervals later. Receivers buffer a packet only
if, under the worst-case clock skew, its key cannot have been disclosed yet,
and authenticate it once the disclosed key chains back to their commitment.
"""

from __future__ import annotations

import hmac
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum

from . import crypto
from .snep import SecurityAssociation, nonce_request, nonce_respond, nonce_verify
from .wire import BROADCAST_ID, PacketType, SecurePacket, header_bytes

BUFFER_CAP = 4096
ZERO_KEY = bytes(crypto.CHAIN_KEY_SIZE)
TESLA_HEADER_SIZE = 16
LABEL_MAC_KEY_1 = 0x05
LABEL_MAC_KEY_2 = 0x06

_COMMITMENT = struct.Struct(">8sqIII")
COMMITMENT_SIZE = _COMMITMENT.size  # key(8) + t0(8) + t_int(4) + d(4) + n(4)


class TeslaError(Exception):
    pass


class ChainMismatch(TeslaError):
    """A disclosed key does not chain back to the receiver's commitment."""


class ChainExhausted(TeslaError):
    pass


def chain_keys(seed: bytes, n: int) -> list[bytes]:
    """``[K_0, ..., K_n]`` with ``K_n = seed`` and ``K_i = F(K_{i+1})``."""
    if len(seed) != crypto.CHAIN_KEY_SIZE:
        raise ValueError("chain seed must be 8 bytes")
    if n < 1:
        raise ValueError("a chain needs at least one step")
    keys = [bytes(seed)]
    for _ in range(n):
        keys.append(crypto.chain_step(keys[-1]))
    keys.reverse()
    return keys


def walk_chain(key: bytes, steps: int) -> bytes:
    for _ in range(steps):
        key = crypto.chain_step(key)
    return key


@dataclass(frozen=True)
class Schedule:
    t0: int
    t_int: int
    d: int

    def __post_init__(self) -> None:
        if self.t_int <= 0:
            raise ValueError("t_int must be positive")
        if self.d < 2:
            raise ValueError("disclosure delay d must be at least 2 intervals")

    def interval_of(self, t: float) -> int:
        if t < self.t0:
            raise ValueError(f"time {t} precedes the chain epoch {self.t0}")
        return int((t - self.t0) // self.t_int)

    def interval_start(self, i: int) -> int:
        return self.t0 + i * self.t_int


@dataclass(frozen=True)
class KeyChain:
    keys: tuple[bytes, ...]
    schedule: Schedule

    @property
    def n(self) -> int:
        return len(self.keys) - 1

    @property
    def commitment(self) -> bytes:
        return self.keys[0]

    def interval_of(self, t: float) -> int:
        return self.schedule.interval_of(t)


def generate_chain(seed: bytes, n: int, t0: int = 0, t_int: int = 1000, d: int = 2) -> KeyChain:
    schedule = Schedule(t0, t_int, d)
    if n < d + 1:
        raise ValueError(f"chain length {n} too short for disclosure delay {d}")
    return KeyChain(tuple(chain_keys(seed, n)), schedule)


def interval_of(chain: KeyChain | Schedule, t: float) -> int:
    return chain.interval_of(t)


def mac_key_for(chain_key: bytes) -> bytes:
    ext = bytes(chain_key) + bytes(8)
    return crypto.prf(ext, bytes((LABEL_MAC_KEY_1,))) + crypto.prf(ext, bytes((LABEL_MAC_KEY_2,)))


def interval_mac_key(chain: KeyChain, i: int) -> bytes:
    if not 0 <= i <= chain.n:
        raise IndexError(f"interval {i} outside chain 0..{chain.n}")
    return mac_key_for(chain.keys[i])


@dataclass(frozen=True)
class TeslaPacket:
    """Decoded TESLA_BCAST payload."""

    interval: int
    disclosed_index: int
    disclosed_key: bytes
    body: bytes
    packet: SecurePacket

    @classmethod
    def parse(cls, pkt: SecurePacket) -> "TeslaPacket":
        if pkt.ptype != PacketType.TESLA_BCAST or len(pkt.payload) < TESLA_HEADER_SIZE:
            raise ValueError("not a TESLA broadcast packet")
        i, j = struct.unpack_from(">II", pkt.payload)
        return cls(i, j, pkt.payload[8:16], pkt.payload[16:], pkt)


def bcast_seal(chain: KeyChain, t_now: float, src_id: int, body: bytes) -> SecurePacket:
    """Broadcast ``body`` under the current interval key, piggybacking ``K_{i-d}``."""
    i = chain.interval_of(t_now)
    if i > chain.n - 1:
        raise ChainExhausted(f"interval {i} is past the chain's last usable interval")
    d = chain.schedule.d
    j = max(i - d, 0)
    disclosed = chain.keys[i - d] if i >= d else ZERO_KEY
    payload = struct.pack(">II", i, j) + disclosed + bytes(body)
    header = header_bytes(PacketType.TESLA_BCAST, src_id, BROADCAST_ID, len(payload))
    tag = crypto.cbc_mac(interval_mac_key(chain, i), header + payload)
    return SecurePacket(PacketType.TESLA_BCAST, src_id, BROADCAST_ID, payload, tag)


def disclose_packet(chain: KeyChain, j: int, src_id: int) -> SecurePacket:
    """Standalone TESLA_DISCLOSE for ``K_j``; authenticity comes from the chain."""
    if not 0 <= j <= chain.n:
        raise IndexError(f"key index {j} outside chain 0..{chain.n}")
    payload = j.to_bytes(4, "big") + chain.keys[j]
    header = header_bytes(PacketType.TESLA_DISCLOSE, src_id, BROADCAST_ID, len(payload))
    tag = crypto.cbc_mac(interval_mac_key(chain, j), header + payload)
    return SecurePacket(PacketType.TESLA_DISCLOSE, src_id, BROADCAST_ID, payload, tag)


def parse_disclosure(pkt: SecurePacket) -> tuple[int, bytes]:
    if pkt.ptype != PacketType.TESLA_DISCLOSE or len(pkt.payload) != 12:
        raise ValueError("not a TESLA disclosure packet")
    return int.from_bytes(pkt.payload[:4], "big"), pkt.payload[4:]


class RecvStatus(Enum):
    BUFFERED = "buffered"
    AUTHENTICATED = "authenticated"
    REJECTED_UNSAFE = "rejected_unsafe"
    REJECTED_STALE = "rejected_stale"


@dataclass(frozen=True)
class Released:
    interval: int
    body: bytes
    token: object = None


@dataclass
class DisclosureResult:
    authenticated: list[Released] = field(default_factory=list)
    failed: list[Released] = field(default_factory=list)


@dataclass
class BroadcastAuthState:
    """Receiver-side μTESLA state; ``max_skew`` bounds clock error plus propagation (ms)."""

    commit_index: int
    commit_key: bytes
    schedule: Schedule
    max_skew: float
    cap: int = BUFFER_CAP
    buffer: dict[int, list[tuple[SecurePacket, object]]] = field(
        default_factory=lambda: defaultdict(list))
    buffered_count: int = 0
    buffered_bytes: int = 0
    evicted: int = 0

    @property
    def d(self) -> int:
        return self.schedule.d

    def key_at(self, i: int) -> bytes:
        if i > self.commit_index:
            raise KeyError(f"key {i} not yet authenticated")
        return walk_chain(self.commit_key, self.commit_index - i)

    def is_safe(self, interval: int, t_arrival: float) -> bool:
        return self.schedule.interval_of(t_arrival + self.max_skew) < interval + self.schedule.d

    def _evict_oldest(self) -> None:
        oldest = min(self.buffer)
        pkt, _ = self.buffer[oldest].pop(0)
        if not self.buffer[oldest]:
            del self.buffer[oldest]
        self.buffered_count -= 1
        self.buffered_bytes -= len(pkt)
        self.evicted += 1


def _tag_ok(mac_key: bytes, pkt: SecurePacket) -> bool:
    expected = crypto.cbc_mac(mac_key, pkt.header() + pkt.payload)
    return hmac.compare_digest(expected, pkt.tag)


def recv_check_and_buffer(state: BroadcastAuthState, pkt: SecurePacket, t_arrival: float,
                          token: object = None) -> tuple[RecvStatus, Released | None]:
    """Apply the security condition to an arriving broadcast.

    ``t_arrival`` is the receiver's local clock. Unsafe packets are rejected
    outright. A safe packet whose key is already committed is verified on the
    spot; otherwise it is buffered until disclosure. ``token`` rides along and
    comes back in the Released record.
    """
    tp = TeslaPacket.parse(pkt)
    if not state.is_safe(tp.interval, t_arrival):
        return RecvStatus.REJECTED_UNSAFE, None
    if tp.interval <= state.commit_index:
        if _tag_ok(mac_key_for(state.key_at(tp.interval)), pkt):
            return RecvStatus.AUTHENTICATED, Released(tp.interval, tp.body, token)
        return RecvStatus.REJECTED_STALE, None
    while state.buffered_count >= state.cap:
        state._evict_oldest()
    state.buffer[tp.interval].append((pkt, token))
    state.buffered_count += 1
    state.buffered_bytes += len(pkt)
    return RecvStatus.BUFFERED, None


def process_disclosure(state: BroadcastAuthState, j: int, key: bytes) -> DisclosureResult:
    """Authenticate ``key`` as ``K_j`` against the commitment and release buffered packets.

    Keys at or below the current commitment are ignored. Raises ChainMismatch,
    leaving the state untouched, if ``key`` does not chain back.
    """
    result = DisclosureResult()
    if j <= state.commit_index:
        return result
    if len(key) != crypto.CHAIN_KEY_SIZE:
        raise ChainMismatch("disclosed key has the wrong length")
    keys = [bytes(key)]
    for _ in range(j - state.commit_index):
        keys.append(crypto.chain_step(keys[-1]))
    if not hmac.compare_digest(keys[-1], state.commit_key):
        raise ChainMismatch(f"K_{j} does not chain to commitment K_{state.commit_index}")
    # keys[m] is K_{j-m}
    for interval in sorted(i for i in state.buffer if i <= j):
        mac_key = mac_key_for(keys[j - interval])
        for pkt, token in state.buffer.pop(interval):
            state.buffered_count -= 1
            state.buffered_bytes -= len(pkt)
            rel = Released(interval, TeslaPacket.parse(pkt).body, token)
            (result.authenticated if _tag_ok(mac_key, pkt) else result.failed).append(rel)
    state.commit_index = j
    state.commit_key = keys[0]
    return result


def receive(state: BroadcastAuthState, pkt: SecurePacket, t_arrival: float,
            token: object = None) -> tuple[RecvStatus, DisclosureResult]:
    """Handle any broadcast frame: buffer/verify it, then apply its disclosure.

    Chain mismatches on the piggybacked or standalone key are swallowed; the
    key is discarded and the state stays as it was.
    """
    status = None
    result = DisclosureResult()
    if pkt.ptype == PacketType.TESLA_DISCLOSE:
        j, key = parse_disclosure(pkt)
    else:
        status, rel = recv_check_and_buffer(state, pkt, t_arrival, token)
        if rel is not None:
            result.authenticated.append(rel)
        tp = TeslaPacket.parse(pkt)
        j, key = tp.disclosed_index, tp.disclosed_key
        if tp.interval < state.d:
            return status, result
    try:
        released = process_disclosure(state, j, key)
    except ChainMismatch:
        return status, result
    result.authenticated.extend(released.authenticated)
    result.failed.extend(released.failed)
    return status, result


def encode_commitment(chain: KeyChain) -> bytes:
    s = chain.schedule
    return _COMMITMENT.pack(chain.commitment, s.t0, s.t_int, s.d, chain.n)


def decode_commitment(data: bytes) -> tuple[bytes, Schedule, int]:
    if len(data) != COMMITMENT_SIZE:
        raise ValueError("commitment payload has the wrong length")
    key, t0, t_int, d, n = _COMMITMENT.unpack(data)
    return key, Schedule(t0, t_int, d), n


def commitment_response(bs_assoc: SecurityAssociation, nonce: bytes | SecurePacket,
                        chain: KeyChain) -> SecurePacket:
    """BS side: deliver ``(K_0, t0, t_int, d, n)`` as a nonce-bound SNEP response."""
    return nonce_respond(bs_assoc, nonce, encode_commitment(chain))


def accept_commitment(assoc: SecurityAssociation, pending: bytes, response: SecurePacket,
                      max_skew: float) -> BroadcastAuthState:
    """Vehicle side: verify the commitment response and build receiver state.

    SNEP errors propagate and no state is created.
    """
    key, schedule, _ = decode_commitment(nonce_verify(assoc, pending, response))
    return BroadcastAuthState(0, key, schedule, max_skew)


def bootstrap_commitment(vehicle_assoc: SecurityAssociation, bs_assoc: SecurityAssociation,
                         chain: KeyChain, max_skew: float) -> BroadcastAuthState:
    """Run the nonce request and commitment response in-process."""
    req, pending = nonce_request(vehicle_assoc)
    resp = commitment_response(bs_assoc, req, chain)
    return accept_commitment(vehicle_assoc, pending, resp, max_skew)

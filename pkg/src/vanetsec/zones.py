"""Base-station zones and session inheritance.

A vehicle's SNEP association is with the infrastructure as a whole (node id
``INFRA_ID``), and every base station holds the same μTESLA chain. Joining the
first zone costs a four-message bootstrap; moving to the next zone ships the
session over the backbone and costs one sealed hello over the air.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass, field
from typing import Callable

from . import crypto
from .mutesla import BroadcastAuthState, KeyChain, accept_commitment, commitment_response
from .snep import (
    MacMismatch,
    SecurityAssociation,
    SnepError,
    nonce_request,
    nonce_respond,
    nonce_verify,
    open_packet,
    read_nonce_request,
    seal,
    sync_accept,
    sync_offer,
)
from .wire import SecurePacket

INFRA_ID = 0
BOOTSTRAP_MESSAGES = 4
HANDOFF_MESSAGES = 1
V2V_SETUP_MESSAGES = 2
HELLO_PREFIX = b"HELLO"
V2V_PREFIX = b"V2VK"
LABEL_ZONE_1 = 0x21


class ZoneError(Exception):
    pass


class OutOfRange(ZoneError):
    pass


class TicketError(ZoneError):
    pass


@dataclass
class SessionRecord:
    vehicle_id: int
    association: SecurityAssociation
    commit_index: int
    commit_key: bytes
    created_at: float
    last_handoff_at: float

    def to_bytes(self) -> bytes:
        a = self.association
        fields = [
            struct.pack(">I", self.vehicle_id),
            struct.pack(">I", a.local_id),
            struct.pack(">I", a.peer_id),
            a.k_enc_send, a.k_mac_send, a.k_enc_recv, a.k_mac_recv,
            struct.pack(">I", a.ctr_send),
            struct.pack(">I", a.ctr_recv),
            struct.pack(">I", self.commit_index),
            self.commit_key,
            struct.pack(">d", self.created_at),
            struct.pack(">d", self.last_handoff_at),
        ]
        return _pack_fields(fields)

    @classmethod
    def from_bytes(cls, data: bytes, rng: random.Random | None = None) -> "SessionRecord":
        f = _unpack_fields(data, 13)
        try:
            (vid,), (local,), (peer,) = (struct.unpack(">I", x) for x in f[:3])
            (ctr_s,), (ctr_r,), (commit,) = (struct.unpack(">I", x) for x in f[7:10])
            (created,), (last,) = (struct.unpack(">d", x) for x in f[11:13])
            assoc = SecurityAssociation(local, peer, f[3], f[4], f[5], f[6], ctr_s, ctr_r,
                                        rng=rng if rng is not None else random.SystemRandom())
        except (struct.error, ValueError) as exc:
            raise TicketError(f"malformed session record: {exc}") from None
        if len(f[10]) != crypto.CHAIN_KEY_SIZE:
            raise TicketError("malformed session record: commit key length")
        return cls(vid, assoc, commit, f[10], created, last)


def _pack_fields(fields: list[bytes]) -> bytes:
    return b"".join(struct.pack(">H", len(x)) + x for x in fields)


def _unpack_fields(data: bytes, count: int) -> list[bytes]:
    out, off = [], 0
    for _ in range(count):
        if off + 2 > len(data):
            raise TicketError("truncated field length")
        (n,) = struct.unpack_from(">H", data, off)
        off += 2
        if off + n > len(data):
            raise TicketError("truncated field")
        out.append(bytes(data[off:off + n]))
        off += n
    if off != len(data):
        raise TicketError("trailing bytes after last field")
    return out


@dataclass(frozen=True)
class HandoffTicket:
    vehicle_id: int
    record: bytes
    issuing_bs: int
    target_bs: int

    def to_bytes(self) -> bytes:
        return _pack_fields([struct.pack(">I", self.vehicle_id), self.record,
                             struct.pack(">I", self.issuing_bs), struct.pack(">I", self.target_bs)])

    @classmethod
    def from_bytes(cls, data: bytes) -> "HandoffTicket":
        f = _unpack_fields(data, 4)
        try:
            (vid,), (src,), (dst,) = (struct.unpack(">I", x) for x in (f[0], f[2], f[3]))
        except struct.error as exc:
            raise TicketError(f"malformed ticket: {exc}") from None
        return cls(vid, f[1], src, dst)


@dataclass(eq=False)
class V2VLink:
    association: SecurityAssociation
    peer: "Vehicle"
    zone: int


@dataclass(eq=False)
class Vehicle:
    """Vehicle endpoint provisioned with a credential derived from the master key."""

    id: int
    master_key: bytes
    position: float = 0.0
    max_skew: float = 100.0
    rng: random.Random = field(default_factory=random.SystemRandom, repr=False)
    assoc: SecurityAssociation = field(init=False, repr=False)
    auth_state: BroadcastAuthState | None = field(default=None, repr=False)
    zone: int | None = None
    v2v: dict[int, V2VLink] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.assoc = SecurityAssociation.derive(self.master_key, self.id, INFRA_ID, rng=self.rng)

    def drop_v2v(self) -> None:
        for peer_id, link in list(self.v2v.items()):
            link.peer.v2v.pop(self.id, None)
            del self.v2v[peer_id]


@dataclass(eq=False)
class BaseStation:
    id: int
    position: float
    radius: float
    master_key: bytes
    chain: KeyChain
    rng: random.Random = field(default_factory=random.SystemRandom, repr=False)
    sessions: dict[int, SessionRecord] = field(default_factory=dict, repr=False)
    pending_tickets: dict[int, bytes] = field(default_factory=dict, repr=False)

    def covers(self, position: float) -> bool:
        return abs(position - self.position) <= self.radius

    def issue_ticket(self, vehicle_id: int, target_bs: int) -> bytes:
        record = self.sessions.pop(vehicle_id)
        return HandoffTicket(vehicle_id, record.to_bytes(), self.id, target_bs).to_bytes()

    def accept_ticket(self, blob: bytes) -> None:
        """Store a ticket from the backbone; unparseable tickets are dropped."""
        try:
            ticket = HandoffTicket.from_bytes(blob)
        except TicketError:
            return
        if ticket.target_bs == self.id:
            self.pending_tickets[ticket.vehicle_id] = ticket.record

    def zone_secret(self) -> bytes:
        return crypto.expand_key(self.master_key, LABEL_ZONE_1, struct.pack(">I", self.id))


@dataclass
class Exchange:
    """Outcome of a bootstrap or handoff: the live session and the over-the-air packets."""

    record: SessionRecord
    messages: list[SecurePacket]
    kind: str

    @property
    def message_count(self) -> int:
        return len(self.messages)


def bootstrap(vehicle: Vehicle, bs: BaseStation, t_now: float) -> Exchange:
    """Full join: beacon, nonce-bound parameters, counter sync, chain commitment.

    The join beacon carries the vehicle's receive counter so the base station
    continues the infrastructure send counter rather than restarting it.
    """
    if not bs.covers(vehicle.position):
        raise OutOfRange(f"vehicle {vehicle.id} at {vehicle.position} m outside BS {bs.id}")
    v = vehicle.assoc
    existing = bs.sessions.get(vehicle.id)
    infra = existing.association if existing else SecurityAssociation.derive(
        bs.master_key, INFRA_ID, vehicle.id, rng=bs.rng)

    # 1. join beacon
    join, nv = nonce_request(v, struct.pack(">I", v.ctr_recv))
    nonce_v, hint = read_nonce_request(infra, join)
    if len(hint) != 4:
        raise MacMismatch("join beacon carries no counter hint")
    infra.ctr_send = max(infra.ctr_send, struct.unpack(">I", hint)[0])

    # 2. nonce-bound parameter response
    nb = infra.fresh_nonce()
    params = nonce_respond(infra, nonce_v, nb + struct.pack(">I", bs.id))
    body = nonce_verify(v, nv, params)
    nb_seen = body[:8]

    # 3. counter sync from the vehicle, bound to the BS nonce
    offer, nv2 = sync_offer(v, nb_seen)
    nv2_seen = sync_accept(infra, nb, offer)

    # 4. μTESLA commitment, bound to the vehicle's second nonce
    commit = commitment_response(infra, nv2_seen, bs.chain)
    state = accept_commitment(v, nv2, commit, vehicle.max_skew)
    old = vehicle.auth_state
    if old is None or old.schedule != state.schedule or old.key_at(0) != state.commit_key:
        vehicle.auth_state = state

    created = existing.created_at if existing else t_now
    record = SessionRecord(vehicle.id, infra, vehicle.auth_state.commit_index,
                           vehicle.auth_state.commit_key, created, t_now)
    bs.sessions[vehicle.id] = record
    vehicle.zone = bs.id
    return Exchange(record, [join, params, offer, commit], "bootstrap")


def resume(vehicle: Vehicle, to_bs: BaseStation, t_now: float) -> Exchange:
    """Install the pending ticket at ``to_bs`` and send the single hello.

    Any failure (no ticket, bad ticket, hello rejected) falls back to a full
    bootstrap at ``to_bs``.
    """
    if not to_bs.covers(vehicle.position):
        raise OutOfRange(f"vehicle {vehicle.id} at {vehicle.position} m outside BS {to_bs.id}")
    vehicle.drop_v2v()
    blob = to_bs.pending_tickets.pop(vehicle.id, None)
    record = None
    if blob is not None:
        try:
            record = SessionRecord.from_bytes(blob, rng=to_bs.rng)
        except TicketError:
            record = None
    if record is not None and (record.vehicle_id != vehicle.id or record.association.peer_id != vehicle.id):
        record = None

    commit_index = vehicle.auth_state.commit_index if vehicle.auth_state else 0
    hello = seal(vehicle.assoc, HELLO_PREFIX + struct.pack(">I", commit_index))
    if record is not None:
        try:
            open_packet(record.association, hello)
        except SnepError:
            record = None
    if record is None:
        fallback = bootstrap(vehicle, to_bs, t_now)
        return Exchange(fallback.record, [hello] + fallback.messages, "fallback")

    if vehicle.auth_state is not None:
        record.commit_index = vehicle.auth_state.commit_index
        record.commit_key = vehicle.auth_state.commit_key
    record.last_handoff_at = t_now
    to_bs.sessions[vehicle.id] = record
    vehicle.zone = to_bs.id
    return Exchange(record, [hello], "handoff")


def handoff(vehicle: Vehicle, from_bs: BaseStation, to_bs: BaseStation, t_now: float,
            backbone: Callable[[bytes], bytes | None] | None = None) -> Exchange:
    """Move ``vehicle``'s session from ``from_bs`` to ``to_bs``.

    ``backbone`` models the wired transfer of the ticket; it receives the
    serialized ticket and returns what arrives (``None`` for a lost ticket).
    """
    if vehicle.id in from_bs.sessions:
        blob = from_bs.issue_ticket(vehicle.id, to_bs.id)
        if backbone is not None:
            blob = backbone(blob)
        if blob is not None:
            to_bs.accept_ticket(blob)
    return resume(vehicle, to_bs, t_now)


def v2v_association(a: Vehicle, b: Vehicle, bs: BaseStation) -> tuple[SecurityAssociation, SecurityAssociation, list[SecurePacket]]:
    """Have ``bs`` hand a zone-scoped pair key to two of its vehicles."""
    rec_a, rec_b = bs.sessions.get(a.id), bs.sessions.get(b.id)
    if rec_a is None or rec_b is None:
        raise ZoneError("both vehicles need a live session at this base station")
    shared = crypto.derive_shared_key(bs.zone_secret(), a.id, b.id)
    messages = []
    assocs = []
    for rec, me, peer in ((rec_a, a, b), (rec_b, b, a)):
        pkt = seal(rec.association, V2V_PREFIX + struct.pack(">I", peer.id) + shared)
        messages.append(pkt)
        body = open_packet(me.assoc, pkt)
        if not body.startswith(V2V_PREFIX) or struct.unpack(">I", body[4:8])[0] != peer.id:
            raise ZoneError("unexpected V2V key delivery")
        keys = crypto.pair_keys_from_shared(body[8:], me.id, peer.id)
        assocs.append(SecurityAssociation.from_keys(keys, rng=me.rng))
    a.v2v[b.id] = V2VLink(assocs[0], b, bs.id)
    b.v2v[a.id] = V2VLink(assocs[1], a, bs.id)
    return assocs[0], assocs[1], messages

"""SNEP unicast channel: counter-mode encryption plus CBC-MAC over an implicit
counter that never goes on the wire.

Typical use::

    a = SecurityAssociation.derive(km, 1, 2)
    b = SecurityAssociation.derive(km, 2, 1)
    pkt = seal(a, b"hello")
    assert open_packet(b, pkt) == b"hello"
"""

from __future__ import annotations

import hmac
import random
from dataclasses import dataclass, field

from . import crypto
from .wire import HEADER_SIZE, TAG_SIZE, PacketType, SecurePacket, header_bytes

MTU = 1024
RESYNC_WINDOW = 16
NONCE_SIZE = 8
COUNTER_MAX = crypto.MASK32

# NONCE_REQ carries no secret and no MAC; its tag is a checksum under this public key.
PUBLIC_CHECKSUM_KEY = bytes(crypto.KEY_SIZE)


class SnepError(Exception):
    """Base class for SNEP protocol failures."""


class MacMismatch(SnepError):
    """No counter in the resync window makes the tag verify."""


class FreshnessFailure(MacMismatch):
    """A nonce-bound response does not bind the pending nonce."""


class WrongAddressee(SnepError):
    pass


class UnexpectedPacketType(SnepError):
    pass


class CounterExhausted(SnepError):
    """The send counter reached 2**32 - 1; the session must be re-keyed."""


@dataclass(eq=False)
class SecurityAssociation:
    """One endpoint's half of a SNEP session."""

    local_id: int
    peer_id: int
    k_enc_send: bytes
    k_mac_send: bytes
    k_enc_recv: bytes
    k_mac_recv: bytes
    ctr_send: int = 0
    ctr_recv: int = 0
    window: int = RESYNC_WINDOW
    rng: random.Random = field(default_factory=random.SystemRandom, repr=False)
    _issued_nonces: set = field(default_factory=set, repr=False)

    def __post_init__(self) -> None:
        keys = (self.k_enc_send, self.k_mac_send, self.k_enc_recv, self.k_mac_recv)
        for k in keys:
            if len(k) != crypto.KEY_SIZE:
                raise ValueError("association keys must be 16 bytes")
        if len(set(keys)) != 4:
            raise ValueError("association keys must be pairwise distinct")
        if self.local_id == self.peer_id:
            raise ValueError("an association needs two distinct endpoints")

    @classmethod
    def from_keys(cls, keys: crypto.PairKeys, rng: random.Random | None = None,
                  **kwargs) -> "SecurityAssociation":
        return cls(keys.local_id, keys.peer_id, keys.k_enc_send, keys.k_mac_send,
                   keys.k_enc_recv, keys.k_mac_recv,
                   rng=rng if rng is not None else random.SystemRandom(), **kwargs)

    @classmethod
    def derive(cls, km: bytes, local_id: int, peer_id: int,
               rng: random.Random | None = None, **kwargs) -> "SecurityAssociation":
        return cls.from_keys(crypto.derive_pair_keys(km, local_id, peer_id), rng, **kwargs)

    def fresh_nonce(self) -> bytes:
        while True:
            nonce = self.rng.getrandbits(8 * NONCE_SIZE).to_bytes(NONCE_SIZE, "big")
            if nonce not in self._issued_nonces:
                self._issued_nonces.add(nonce)
                return nonce


def _mac_input(prefix: bytes, header: bytes, ctr: int, payload: bytes) -> bytes:
    return prefix + header + ctr.to_bytes(4, "big") + payload


def _seal(assoc: SecurityAssociation, ptype: PacketType, plaintext: bytes,
          prefix: bytes = b"") -> SecurePacket:
    if len(plaintext) > MTU:
        raise ValueError(f"plaintext of {len(plaintext)} bytes exceeds MTU {MTU}")
    if assoc.ctr_send >= COUNTER_MAX:
        raise CounterExhausted(f"send counter exhausted for peer {assoc.peer_id}")
    ctr = assoc.ctr_send
    payload = crypto.ctr_encrypt(assoc.k_enc_send, ctr, plaintext)
    header = header_bytes(ptype, assoc.local_id, assoc.peer_id, len(payload))
    tag = crypto.cbc_mac(assoc.k_mac_send, _mac_input(prefix, header, ctr, payload))
    assoc.ctr_send = ctr + 1
    return SecurePacket(ptype, assoc.local_id, assoc.peer_id, payload, tag)


def _check_inbound(assoc: SecurityAssociation, pkt: SecurePacket, ptype: PacketType) -> None:
    if pkt.ptype != ptype:
        raise UnexpectedPacketType(f"expected {ptype.name}, got {pkt.ptype.name}")
    if pkt.dst_id != assoc.local_id:
        raise WrongAddressee(f"packet for node {pkt.dst_id}, this endpoint is {assoc.local_id}")


def _find_counter(assoc: SecurityAssociation, pkt: SecurePacket, prefix: bytes) -> int | None:
    header = pkt.header()
    for off in range(assoc.window):
        ctr = assoc.ctr_recv + off
        if ctr > COUNTER_MAX:
            break
        expected = crypto.cbc_mac(assoc.k_mac_recv, _mac_input(prefix, header, ctr, pkt.payload))
        if hmac.compare_digest(expected, pkt.tag):
            return ctr
    return None


def _unseal(assoc: SecurityAssociation, pkt: SecurePacket, prefix: bytes,
            error: type[MacMismatch]) -> bytes:
    ctr = _find_counter(assoc, pkt, prefix)
    if ctr is None:
        raise error(f"tag did not verify for counters {assoc.ctr_recv}..{assoc.ctr_recv + assoc.window - 1}")
    assoc.ctr_recv = ctr + 1
    return crypto.ctr_decrypt(assoc.k_enc_recv, ctr, pkt.payload)


def seal(assoc: SecurityAssociation, plaintext: bytes) -> SecurePacket:
    """Encrypt and MAC ``plaintext`` as a DATA packet, advancing ``ctr_send``."""
    return _seal(assoc, PacketType.DATA, plaintext)


def open_packet(assoc: SecurityAssociation, pkt: SecurePacket) -> bytes:
    """Verify and decrypt a DATA packet.

    Counters ``ctr_recv .. ctr_recv + window - 1`` are tried in order, so up to
    ``window - 1`` lost packets are absorbed. Raises MacMismatch otherwise.
    """
    _check_inbound(assoc, pkt, PacketType.DATA)
    return _unseal(assoc, pkt, b"", MacMismatch)


def nonce_request(assoc: SecurityAssociation, body: bytes = b"") -> tuple[SecurePacket, bytes]:
    """Build a cleartext NONCE_REQ carrying a fresh nonce; returns (packet, nonce)."""
    nonce = assoc.fresh_nonce()
    payload = nonce + bytes(body)
    header = header_bytes(PacketType.NONCE_REQ, assoc.local_id, assoc.peer_id, len(payload))
    tag = crypto.cbc_mac(PUBLIC_CHECKSUM_KEY, header + payload)
    return SecurePacket(PacketType.NONCE_REQ, assoc.local_id, assoc.peer_id, payload, tag), nonce


def read_nonce_request(assoc: SecurityAssociation, request: SecurePacket) -> tuple[bytes, bytes]:
    """Return ``(nonce, body)`` from a NONCE_REQ addressed to ``assoc``."""
    _check_inbound(assoc, request, PacketType.NONCE_REQ)
    if request.src_id != assoc.peer_id or len(request.payload) < NONCE_SIZE:
        raise MacMismatch("nonce request is not from this association's peer")
    expected = crypto.cbc_mac(PUBLIC_CHECKSUM_KEY, request.header() + request.payload)
    if not hmac.compare_digest(expected, request.tag):
        raise MacMismatch("nonce request checksum failed")
    return request.payload[:NONCE_SIZE], request.payload[NONCE_SIZE:]


def nonce_respond(assoc: SecurityAssociation, request: SecurePacket | bytes,
                  body: bytes) -> SecurePacket:
    """Seal ``body`` as a NONCE_RESP whose tag binds the requester's nonce.

    ``request`` is either the NONCE_REQ packet or the raw 8-byte nonce.
    """
    if isinstance(request, SecurePacket):
        nonce, _ = read_nonce_request(assoc, request)
    else:
        nonce = bytes(request)
        if len(nonce) != NONCE_SIZE:
            raise ValueError("nonce must be 8 bytes")
    return _seal(assoc, PacketType.NONCE_RESP, body, prefix=nonce)


def nonce_verify(assoc: SecurityAssociation, pending: bytes, response: SecurePacket) -> bytes:
    """Open a NONCE_RESP, requiring that it binds the nonce ``pending``."""
    _check_inbound(assoc, response, PacketType.NONCE_RESP)
    return _unseal(assoc, response, bytes(pending), FreshnessFailure)


def sync_offer(assoc: SecurityAssociation, bound_nonce: bytes) -> tuple[SecurePacket, bytes]:
    """CTR_SYNC carrying a fresh nonce and our send counter, bound to the peer's nonce.

    The MAC cannot cover an implicit counter (that is what is being synced); the
    peer's nonce provides freshness instead. Returns (packet, our new nonce).
    """
    own = assoc.fresh_nonce()
    payload = own + assoc.ctr_send.to_bytes(4, "big")
    header = header_bytes(PacketType.CTR_SYNC, assoc.local_id, assoc.peer_id, len(payload))
    tag = crypto.cbc_mac(assoc.k_mac_send, bytes(bound_nonce) + header + payload)
    return SecurePacket(PacketType.CTR_SYNC, assoc.local_id, assoc.peer_id, payload, tag), own


def sync_accept(assoc: SecurityAssociation, pending: bytes, pkt: SecurePacket) -> bytes:
    """Verify a CTR_SYNC bound to ``pending`` and adopt the peer's counter.

    Returns the nonce the peer included, for binding our own offer.
    """
    _check_inbound(assoc, pkt, PacketType.CTR_SYNC)
    if len(pkt.payload) != NONCE_SIZE + 4:
        raise MacMismatch("CTR_SYNC payload has the wrong length")
    expected = crypto.cbc_mac(assoc.k_mac_recv, bytes(pending) + pkt.header() + pkt.payload)
    if not hmac.compare_digest(expected, pkt.tag):
        raise MacMismatch("CTR_SYNC tag did not verify")
    peer_ctr = int.from_bytes(pkt.payload[NONCE_SIZE:], "big")
    assoc.ctr_recv = max(assoc.ctr_recv, peer_ctr)
    return pkt.payload[:NONCE_SIZE]


def counter_sync(a: SecurityAssociation, b: SecurityAssociation) -> list[SecurePacket]:
    """Resynchronize both directions of a session; returns the three packets exchanged.

    ``a`` asks with a nonce, ``b`` answers with its counter bound to that nonce
    plus a nonce of its own, and ``a`` answers that one with its counter.
    """
    req, na = nonce_request(a)
    nonce_ab, _ = read_nonce_request(b, req)
    offer_b, nb = sync_offer(b, nonce_ab)
    sync_accept(a, na, offer_b)
    offer_a, _ = sync_offer(a, nb)
    sync_accept(b, nb, offer_a)
    return [req, offer_b, offer_a]


def seal_block_ops(plaintext_len: int, prefix_len: int = 0) -> int:
    """Block-cipher invocations needed to seal or open ``plaintext_len`` bytes."""
    mac_len = prefix_len + HEADER_SIZE + 4 + plaintext_len
    return crypto.ctr_keystream_blocks(plaintext_len) + crypto.cbc_mac_blocks(mac_len)


def wire_length(plaintext_len: int) -> int:
    return HEADER_SIZE + plaintext_len + TAG_SIZE


def overhead_ratio(message_len: int) -> float:
    """Share of a packet spent on security: tag bytes over message-plus-tag bytes."""
    return TAG_SIZE / (message_len + TAG_SIZE)

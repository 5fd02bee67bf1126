"""Bit-exact packet layout shared by SNEP and μTESLA.

    version(1) | ptype(1) | src_id(4) | dst_id(4) | payload_len(2) | payload | tag(8)

All integers are big-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

VERSION = 0x01
BROADCAST_ID = 0xFFFFFFFF
HEADER_SIZE = 12
TAG_SIZE = 8
MAX_PAYLOAD = 0xFFFF

_HEADER = struct.Struct(">BBIIH")


class PacketType(IntEnum):
    DATA = 0x01
    NONCE_REQ = 0x02
    NONCE_RESP = 0x03
    CTR_SYNC = 0x04
    TESLA_BCAST = 0x10
    TESLA_DISCLOSE = 0x11


class MalformedPacket(ValueError):
    """Raised when bytes cannot be parsed as a SecurePacket."""


@dataclass(frozen=True)
class SecurePacket:
    ptype: PacketType
    src_id: int
    dst_id: int
    payload: bytes
    tag: bytes = bytes(TAG_SIZE)
    version: int = VERSION

    def header(self) -> bytes:
        return _HEADER.pack(self.version, int(self.ptype), self.src_id, self.dst_id,
                            len(self.payload))

    def to_bytes(self) -> bytes:
        return self.header() + self.payload + self.tag

    def __len__(self) -> int:
        return HEADER_SIZE + len(self.payload) + TAG_SIZE

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecurePacket":
        if len(data) < HEADER_SIZE + TAG_SIZE:
            raise MalformedPacket(f"packet too short: {len(data)} bytes")
        version, ptype, src, dst, plen = _HEADER.unpack_from(data)
        if version != VERSION:
            raise MalformedPacket(f"unsupported version 0x{version:02x}")
        try:
            ptype = PacketType(ptype)
        except ValueError:
            raise MalformedPacket(f"unknown packet type 0x{ptype:02x}") from None
        if len(data) != HEADER_SIZE + plen + TAG_SIZE:
            raise MalformedPacket(
                f"length mismatch: header says {plen} payload bytes, "
                f"packet has {len(data) - HEADER_SIZE - TAG_SIZE}"
            )
        payload = bytes(data[HEADER_SIZE:HEADER_SIZE + plen])
        return cls(ptype, src, dst, payload, bytes(data[HEADER_SIZE + plen:]), version)


def header_bytes(ptype: PacketType, src_id: int, dst_id: int, payload_len: int) -> bytes:
    if payload_len > MAX_PAYLOAD:
        raise ValueError(f"payload too long: {payload_len}")
    return _HEADER.pack(VERSION, int(ptype), src_id, dst_id, payload_len)

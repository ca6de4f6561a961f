"""Notification payloads and the NotificationMessage wire form."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .crypto import MAX_PREFIX_BITS, OVERHEAD, Ciphertext, PrefixTag, tag_length

GEO_SCALE = 10_000


class Status(enum.IntEnum):
    NOT_INFECTED = 0
    CLOSE_CONTACT = 1
    INFECTED = 2


class DisclosureLevel(enum.IntEnum):
    STATUS_ONLY = 1
    WITH_TIMESTAMP = 2
    WITH_LOCATION = 3
    FULL = 4

    @property
    def has_timestamp(self) -> bool:
        return self in (DisclosureLevel.WITH_TIMESTAMP, DisclosureLevel.FULL)

    @property
    def has_location(self) -> bool:
        return self in (DisclosureLevel.WITH_LOCATION, DisclosureLevel.FULL)


_STATUS_MASK = 0x03
_HAS_TIMESTAMP = 0x04
_HAS_LOCATION = 0x08


def quantize_degrees(value: float) -> int:
    """Fixed-point degrees x 10^4 (about 11 m), fitting a signed 32-bit field."""
    q = round(value * GEO_SCALE)
    if not -(2**31) <= q < 2**31:
        raise ValueError("coordinate out of range")
    return q


@dataclass(frozen=True)
class NotificationPayload:
    status: Status
    timestamp: int | None = None
    latitude_q: int | None = None
    longitude_q: int | None = None

    def __post_init__(self) -> None:
        if (self.latitude_q is None) != (self.longitude_q is None):
            raise ValueError("latitude and longitude must be both present or both absent")

    @classmethod
    def for_level(cls, level: DisclosureLevel, status: Status, timestamp: int, latitude_q: int, longitude_q: int):
        level = DisclosureLevel(level)
        return cls(
            Status(status),
            timestamp if level.has_timestamp else None,
            latitude_q if level.has_location else None,
            longitude_q if level.has_location else None,
        )

    def to_bytes(self) -> bytes:
        flags = int(self.status) & _STATUS_MASK
        out = b""
        if self.timestamp is not None:
            flags |= _HAS_TIMESTAMP
            out += struct.pack(">I", self.timestamp)
        if self.latitude_q is not None:
            flags |= _HAS_LOCATION
            out += struct.pack(">ii", self.latitude_q, self.longitude_q)
        return bytes([flags]) + out

    @classmethod
    def from_bytes(cls, data: bytes) -> "NotificationPayload":
        if not data:
            raise ValueError("empty payload")
        flags = data[0]
        if flags & ~(_STATUS_MASK | _HAS_TIMESTAMP | _HAS_LOCATION):
            raise ValueError("unknown payload flags")
        expected = 1 + (4 if flags & _HAS_TIMESTAMP else 0) + (8 if flags & _HAS_LOCATION else 0)
        if len(data) != expected:
            raise ValueError(f"payload length {len(data)} does not match flags (expected {expected})")
        pos = 1
        ts = lat = lon = None
        if flags & _HAS_TIMESTAMP:
            (ts,) = struct.unpack_from(">I", data, pos)
            pos += 4
        if flags & _HAS_LOCATION:
            lat, lon = struct.unpack_from(">ii", data, pos)
        return cls(Status(flags & _STATUS_MASK), ts, lat, lon)


@dataclass(frozen=True)
class NotificationMessage:
    """prefix_bits (1 byte) || tag bytes || ciphertext."""

    tag: PrefixTag
    ciphertext: Ciphertext

    def to_bytes(self) -> bytes:
        return bytes([self.tag.n_bits]) + bytes(self.tag) + bytes(self.ciphertext)

    @classmethod
    def from_bytes(cls, blob: bytes) -> "NotificationMessage":
        if not blob:
            raise ValueError("empty message")
        n_bits = blob[0]
        if n_bits > MAX_PREFIX_BITS:
            raise ValueError("prefix_bits out of range")
        start = 1 + tag_length(n_bits)
        if len(blob) < start + OVERHEAD:
            raise ValueError("message too short")
        return cls(PrefixTag(n_bits, blob[1:start]), Ciphertext.from_bytes(blob[start:]))

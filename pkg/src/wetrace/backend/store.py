"""Retained ciphertext log of the untrusted relay.

The store treats every message as an opaque blob. It records the arrival time
and a sequence number, nothing about the submitter.
"""

from __future__ import annotations

import bisect
import hashlib
import hmac
import json
import struct
import threading
from dataclasses import dataclass

MAX_BATCH = 1000
DEFAULT_RETENTION = 14 * 24 * 3600
DEFAULT_DIFFICULTY = 20
NONCE_SIZE = 8
MAX_BLOB = 64 * 1024 + 128


class PublishError(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


INVALID_POW = "invalid proof of work"
CAP_EXCEEDED = "recipient cap exceeded"
DUPLICATE = "duplicate batch"
EMPTY = "empty batch"
MALFORMED = "malformed message"


def batch_digest(messages) -> bytes:
    """SHA-256 over the length-prefixed blobs in sorted order, so ordering does not matter."""
    h = hashlib.sha256()
    for blob in sorted(bytes(m) for m in messages):
        h.update(struct.pack(">I", len(blob)))
        h.update(blob)
    return h.digest()


def leading_zero_bits(data: bytes) -> int:
    n = int.from_bytes(data, "big")
    return len(data) * 8 - n.bit_length()


def pow_ok(digest: bytes, nonce: bytes, difficulty: int) -> bool:
    if len(nonce) != NONCE_SIZE:
        return False
    return leading_zero_bits(hashlib.sha256(digest + nonce).digest()) >= difficulty


def solve_pow(digest: bytes, difficulty: int, start: int = 0) -> bytes:
    """Search nonces upward from ``start``; expected work is 2**difficulty hashes."""
    if not 0 <= difficulty <= 32:
        raise ValueError("difficulty must be in 0..32")
    counter = start
    while True:
        nonce = counter.to_bytes(NONCE_SIZE, "big")
        if pow_ok(digest, nonce, difficulty):
            return nonce
        counter += 1


@dataclass(frozen=True)
class PublishRequest:
    messages: tuple[bytes, ...]
    pow_nonce: bytes
    token: str | None = None

    @classmethod
    def build(cls, messages, difficulty: int, token: str | None = None) -> "PublishRequest":
        messages = tuple(bytes(m) for m in messages)
        nonce = bytes(NONCE_SIZE) if token else solve_pow(batch_digest(messages), difficulty)
        return cls(messages, nonce, token)

    @property
    def digest(self) -> bytes:
        return batch_digest(self.messages)

    def pow_difficulty_met(self, difficulty: int) -> bool:
        return pow_ok(self.digest, self.pow_nonce, difficulty)


@dataclass(frozen=True)
class StoredMessage:
    cursor: int
    received_at: float
    blob: bytes


class BackendStore:
    """Thread-safe append-only log with retention.

    Writers serialize on a lock; readers grab the current immutable tuple, so a
    poll never blocks on a publish and always sees a consistent prefix.
    """

    def __init__(self, retention: float = DEFAULT_RETENTION, difficulty: int = DEFAULT_DIFFICULTY,
                 token: str | None = None):
        if retention <= 0:
            raise ValueError("retention must be positive")
        if not 0 <= difficulty <= 32:
            raise ValueError("difficulty must be in 0..32")
        self.retention = retention
        self.difficulty = difficulty
        self.token = token
        self.rejected = 0
        self._lock = threading.Lock()
        self._log: tuple[StoredMessage, ...] = ()
        self._next_cursor = 1
        self._digests: dict[bytes, float] = {}

    @property
    def messages(self) -> tuple[StoredMessage, ...]:
        return self._log

    def __len__(self) -> int:
        return len(self._log)

    def _authorized(self, request: PublishRequest, digest: bytes) -> bool:
        if self.token is not None and request.token is not None:
            return hmac.compare_digest(request.token.encode(), self.token.encode())
        return pow_ok(digest, request.pow_nonce, self.difficulty)

    def publish(self, request: PublishRequest, now: float) -> int:
        try:
            return self._publish(request, now)
        except PublishError:
            with self._lock:
                self.rejected += 1
            raise

    def _publish(self, request: PublishRequest, now: float) -> int:
        blobs = request.messages
        if not blobs:
            raise PublishError(EMPTY)
        if len(blobs) > MAX_BATCH:
            raise PublishError(CAP_EXCEEDED)
        if any(not 1 <= len(b) <= MAX_BLOB for b in blobs):
            raise PublishError(MALFORMED)
        digest = batch_digest(blobs)
        if not self._authorized(request, digest):
            raise PublishError(INVALID_POW)
        with self._lock:
            if digest in self._digests:
                raise PublishError(DUPLICATE)
            self._digests[digest] = now
            first = self._next_cursor
            added = tuple(StoredMessage(first + i, now, bytes(b)) for i, b in enumerate(blobs))
            self._next_cursor = first + len(added)
            self._log = self._log + added
        return len(added)

    def poll(self, cursor: int) -> tuple[list[bytes], int]:
        """Messages with sequence number above ``cursor`` and the highest sequence number returned."""
        log = self._log
        start = bisect.bisect_right(log, cursor, key=lambda m: m.cursor)
        tail = log[start:]
        newest = tail[-1].cursor if tail else max(cursor, 0)
        return [m.blob for m in tail], newest

    def purge(self, now: float) -> int:
        cutoff = now - self.retention
        with self._lock:
            keep = tuple(m for m in self._log if m.received_at >= cutoff)
            removed = len(self._log) - len(keep)
            self._log = keep
            self._digests = {d: t for d, t in self._digests.items() if t >= cutoff}
        return removed

    def persisted_bytes(self) -> bytes:
        """Everything the store holds, serialized; used by privacy scans."""
        doc = {
            "next_cursor": self._next_cursor,
            "messages": [[m.cursor, m.received_at, m.blob.hex()] for m in self._log],
            "digests": sorted([d.hex(), t] for d, t in self._digests.items()),
        }
        return json.dumps(doc, separators=(",", ":")).encode() + b"\n" + b"".join(m.blob for m in self._log)

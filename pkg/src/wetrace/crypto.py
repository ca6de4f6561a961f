"""Cryptographic building blocks of the protocol.

Window keys are X25519 key pairs derived with HKDF-SHA256 from the device's
32-byte master seed and the little-endian window index. Notifications use an
ephemeral-static X25519 agreement, HKDF-SHA256 and ChaCha20-Poly1305. Each
ephemeral key is used exactly once, so the AEAD nonce is fixed at zero and the
wire form stays at ``ephemeral_public || body || tag`` (48 bytes of overhead).
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

SEED_SIZE = 32
PUBLIC_KEY_SIZE = 32
TAG_SIZE = 16
OVERHEAD = PUBLIC_KEY_SIZE + TAG_SIZE
MAX_PLAINTEXT = 64 * 1024
MAX_PREFIX_BITS = 32
DEFAULT_WINDOW_DURATION = 900

_WINDOW_INFO = b"wetrace/window-key/v1"
_MESSAGE_INFO = b"wetrace/notification/v1"
_NONCE = bytes(12)


def _hkdf(ikm: bytes, info: bytes, salt: bytes | None = None) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=salt, info=info).derive(ikm)


def _clamp(scalar: bytes) -> bytes:
    b = bytearray(scalar)
    b[0] &= 248
    b[31] &= 127
    b[31] |= 64
    return bytes(b)


def _raw_public(key: X25519PrivateKey) -> bytes:
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


@dataclass(frozen=True)
class MasterSeed:
    """The device's root secret. Never leaves the device except via explicit state persistence."""

    secret: bytes = field(repr=False)

    def __post_init__(self) -> None:
        if not isinstance(self.secret, (bytes, bytearray)) or len(self.secret) != SEED_SIZE:
            raise ValueError(f"master seed must be exactly {SEED_SIZE} bytes")
        object.__setattr__(self, "secret", bytes(self.secret))

    @classmethod
    def generate(cls) -> "MasterSeed":
        return cls(os.urandom(SEED_SIZE))

    def __bytes__(self) -> bytes:
        return self.secret


@dataclass(frozen=True)
class WindowKeyPair:
    window_index: int
    public_key: bytes
    secret_key: bytes = field(repr=False)
    _private: X25519PrivateKey = field(repr=False, compare=False, hash=False, default=None)

    def __post_init__(self) -> None:
        if self._private is None:
            object.__setattr__(self, "_private", X25519PrivateKey.from_private_bytes(self.secret_key))


def derive_window_keypair(seed: MasterSeed | bytes, window_index: int) -> WindowKeyPair:
    """Derive the key pair for one rotation window. Pure in (seed, window_index)."""
    if window_index < 0:
        raise ValueError("window_index must be non-negative")
    raw = bytes(seed)
    if len(raw) != SEED_SIZE:
        raise ValueError(f"master seed must be exactly {SEED_SIZE} bytes")
    scalar = _clamp(_hkdf(raw, _WINDOW_INFO + struct.pack("<Q", window_index)))
    private = X25519PrivateKey.from_private_bytes(scalar)
    return WindowKeyPair(window_index, _raw_public(private), scalar, private)


def window_index_for(timestamp: float, window_duration: float = DEFAULT_WINDOW_DURATION) -> int:
    if window_duration <= 0:
        raise ValueError("window_duration must be positive")
    if timestamp < 0:
        raise ValueError("timestamp must be non-negative")
    return int(timestamp // window_duration)


def horizon_window_indices(now: float, window_duration: float, horizon: float) -> range:
    """Window indices covering ``horizon`` seconds and ending at the window containing ``now``."""
    current = window_index_for(now, window_duration)
    count = int(horizon // window_duration)
    return range(max(0, current - count + 1), current + 1)


@dataclass(frozen=True)
class Ciphertext:
    ephemeral_public: bytes
    body: bytes
    auth_tag: bytes

    def __bytes__(self) -> bytes:
        return self.ephemeral_public + self.body + self.auth_tag

    def __len__(self) -> int:
        return OVERHEAD + len(self.body)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Ciphertext":
        if len(data) < OVERHEAD:
            raise ValueError("ciphertext shorter than the fixed overhead")
        return cls(data[:PUBLIC_KEY_SIZE], data[PUBLIC_KEY_SIZE:-TAG_SIZE], data[-TAG_SIZE:])


def _message_key(shared: bytes, ephemeral_public: bytes, recipient: bytes) -> bytes:
    return _hkdf(shared, _MESSAGE_INFO + ephemeral_public + recipient)


def encrypt_to(recipient: bytes, plaintext: bytes, ephemeral_secret: bytes | None = None) -> Ciphertext:
    """Encrypt ``plaintext`` so that only the holder of ``recipient``'s secret key can read it.

    ``ephemeral_secret`` exists for deterministic simulation runs; leave it unset
    in production so every call draws a fresh ephemeral key.
    """
    if len(plaintext) > MAX_PLAINTEXT:
        raise ValueError(f"plaintext exceeds {MAX_PLAINTEXT} bytes")
    if len(recipient) != PUBLIC_KEY_SIZE:
        raise ValueError("recipient public key must be 32 bytes")
    if ephemeral_secret is None:
        eph = X25519PrivateKey.generate()
    else:
        eph = X25519PrivateKey.from_private_bytes(ephemeral_secret)
    eph_pub = _raw_public(eph)
    shared = eph.exchange(X25519PublicKey.from_public_bytes(recipient))
    sealed = ChaCha20Poly1305(_message_key(shared, eph_pub, recipient)).encrypt(_NONCE, bytes(plaintext), None)
    return Ciphertext(eph_pub, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])


def try_decrypt(keypair: WindowKeyPair, ciphertext: Ciphertext | bytes) -> bytes | None:
    """Return the plaintext, or None when the ciphertext is not for this key (or is damaged)."""
    if not isinstance(ciphertext, Ciphertext):
        try:
            ciphertext = Ciphertext.from_bytes(bytes(ciphertext))
        except ValueError:
            return None
    if len(ciphertext.ephemeral_public) != PUBLIC_KEY_SIZE or len(ciphertext.auth_tag) != TAG_SIZE:
        return None
    try:
        shared = keypair._private.exchange(X25519PublicKey.from_public_bytes(ciphertext.ephemeral_public))
    except ValueError:
        # low-order point: all-zero shared secret
        return None
    key = _message_key(shared, ciphertext.ephemeral_public, keypair.public_key)
    try:
        return ChaCha20Poly1305(key).decrypt(_NONCE, ciphertext.body + ciphertext.auth_tag, None)
    except InvalidTag:
        return None


@dataclass(frozen=True)
class PrefixTag:
    """First ``n_bits`` of SHA-256(public key), packed big-endian, trailing bits zeroed."""

    n_bits: int
    bits: bytes

    def __post_init__(self) -> None:
        if not 0 <= self.n_bits <= MAX_PREFIX_BITS:
            raise ValueError(f"n_bits must be in 0..{MAX_PREFIX_BITS}")
        if len(self.bits) != tag_length(self.n_bits):
            raise ValueError("tag byte length does not match n_bits")
        if self.bits and self.bits[-1] & _tail_mask(self.n_bits):
            raise ValueError("tag has bits set beyond n_bits")

    def matches(self, public_key: bytes) -> bool:
        return key_prefix_tag(public_key, self.n_bits) == self

    def __bytes__(self) -> bytes:
        return self.bits


def tag_length(n_bits: int) -> int:
    return (n_bits + 7) // 8


def _tail_mask(n_bits: int) -> int:
    spare = (-n_bits) % 8
    return (1 << spare) - 1


def key_prefix_tag(public_key: bytes, n_bits: int) -> PrefixTag:
    if not 0 <= n_bits <= MAX_PREFIX_BITS:
        raise ValueError(f"n_bits must be in 0..{MAX_PREFIX_BITS}")
    if n_bits == 0:
        return PrefixTag(0, b"")
    digest = bytearray(hashlib.sha256(public_key).digest()[: tag_length(n_bits)])
    digest[-1] &= 0xFF ^ _tail_mask(n_bits)
    return PrefixTag(n_bits, bytes(digest))

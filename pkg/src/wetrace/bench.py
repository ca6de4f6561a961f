"""Decryption-cost benchmark for polling with and without recipient prefix tags.

Messages go through the same :meth:`Device.poll_and_decrypt` path a real
device uses. ``cipher="stub"`` swaps in a keyed-hash stand-in with the same
encrypt/decrypt interface and ciphertext layout; attempt counts are identical,
only the per-attempt cost drops.
"""

from __future__ import annotations

import hashlib
import os
import random
import time
from dataclasses import asdict, dataclass

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import crypto
from .crypto import Ciphertext, MasterSeed, WindowKeyPair
from .device import Device, DeviceConfig
from .messages import NotificationMessage, NotificationPayload, Status


def stub_encrypt_to(recipient: bytes, plaintext: bytes, ephemeral_secret: bytes | None = None) -> Ciphertext:
    eph = ephemeral_secret or os.urandom(32)
    tag = hashlib.sha256(b"stub" + recipient + eph).digest()[:16]
    return Ciphertext(eph, bytes(plaintext), tag)


def stub_try_decrypt(keypair: WindowKeyPair, ciphertext: Ciphertext) -> bytes | None:
    if hashlib.sha256(b"stub" + keypair.public_key + ciphertext.ephemeral_public).digest()[:16] != ciphertext.auth_tag:
        return None
    return ciphertext.body


CIPHERS = {
    "real": (crypto.encrypt_to, crypto.try_decrypt),
    "stub": (stub_encrypt_to, stub_try_decrypt),
}


@dataclass
class BenchReport:
    n_messages: int
    n_keys: int
    prefix_bits: int
    cipher: str
    attempts: int
    baseline_attempts: int
    decoded: int
    seconds: float
    setup_seconds: float

    @property
    def reduction(self) -> float:
        return 1.0 - self.attempts / self.baseline_attempts if self.baseline_attempts else 0.0

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["reduction"] = self.reduction
        return doc

    def summary(self) -> str:
        return (
            f"{self.n_messages} messages x {self.n_keys} keys, prefix {self.prefix_bits} bits ({self.cipher} cipher)\n"
            f"  attempts:  {self.attempts}  (no prefix: {self.baseline_attempts})\n"
            f"  reduction: {self.reduction:.2%}\n"
            f"  decoded:   {self.decoded}\n"
            f"  time:      {self.seconds:.2f} s (setup {self.setup_seconds:.2f} s)"
        )


def _random_public(rng: random.Random, cipher: str) -> bytes:
    if cipher == "stub":
        return rng.randbytes(32)
    private = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    return private.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)


def build_inbox(device: Device, now: float, n_messages: int, prefix_bits: int, cipher: str = "real",
                seed: int = 0) -> list[NotificationMessage]:
    """``n_messages - 1`` messages to strangers plus one to a random horizon key of ``device``."""
    encrypt, _ = CIPHERS[cipher]
    rng = random.Random(seed)
    payload = NotificationPayload(Status.INFECTED).to_bytes()
    keys = device.horizon_keypairs(now)
    recipients = [_random_public(rng, cipher) for _ in range(max(0, n_messages - 1))]
    recipients.insert(rng.randrange(len(recipients) + 1), rng.choice(keys).public_key)
    return [
        NotificationMessage(crypto.key_prefix_tag(pk, prefix_bits), encrypt(pk, payload, rng.randbytes(32)))
        for pk in recipients[:n_messages]
    ]


def bench_device(n_keys: int, seed: int = 0) -> tuple[Device, float]:
    """A device whose horizon holds exactly ``n_keys`` window keys, and the matching clock."""
    wd = crypto.DEFAULT_WINDOW_DURATION
    config = DeviceConfig(window_duration=wd, contact_horizon=n_keys * wd)
    device = Device(MasterSeed(hashlib.sha256(b"bench%d" % seed).digest()), config)
    now = (n_keys - 1) * wd + wd / 2
    return device, now


def bench_decrypt(n_messages: int, n_keys: int, prefix_bits: int, cipher: str = "real", seed: int = 0) -> BenchReport:
    if n_messages < 1 or n_keys < 1:
        raise ValueError("n_messages and n_keys must be positive")
    if cipher not in CIPHERS:
        raise ValueError(f"unknown cipher {cipher!r}")
    t0 = time.perf_counter()
    device, now = bench_device(n_keys, seed)
    inbox = build_inbox(device, now, n_messages, prefix_bits, cipher, seed)
    device.horizon_keypairs(now)
    t1 = time.perf_counter()
    result = device.poll_and_decrypt(inbox, now, try_decrypt=CIPHERS[cipher][1])
    t2 = time.perf_counter()
    return BenchReport(
        n_messages=n_messages,
        n_keys=n_keys,
        prefix_bits=prefix_bits,
        cipher=cipher,
        attempts=result.attempts,
        # an empty tag matches every key, so without a prefix each message meets every key
        baseline_attempts=n_messages * n_keys,
        decoded=len(result.payloads),
        seconds=t2 - t1,
        setup_seconds=t1 - t0,
    )

"""Shared test helpers."""

import hashlib

from wetrace.crypto import MasterSeed
from wetrace.device import Device, DeviceConfig

EPOCH = 1_600_000_200  # a window boundary for 900 s windows


def seed_of(label: str) -> MasterSeed:
    return MasterSeed(hashlib.sha256(label.encode()).digest())


def make_device(label: str, **config) -> Device:
    return Device(seed_of(label), DeviceConfig(**config))


def hear(receiver: Device, sender: Device, t0: float, t1: float, rssi: float = -55.0,
         interval: float = 20.0, location=(47.0, 8.0)) -> None:
    """Deliver ``sender``'s advert pair to ``receiver`` every ``interval`` seconds in [t0, t1]."""
    t = t0
    while t <= t1 + 1e-9:
        for k, frag in enumerate(sender.advert_fragments(t)):
            receiver.observe_payload(frag.address, frag.payload(), t + 0.001 * k, rssi, location)
        t += interval


# -- acceptance reporting ------------------------------------------------------

ACCEPTANCE: dict[str, tuple[bool, str, str]] = {}


class criterion:
    """Record a PASS/FAIL line for one acceptance criterion; failures still propagate."""

    def __init__(self, key: str, title: str):
        self.key, self.title, self.note = key, title, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            ACCEPTANCE[self.key] = (True, self.title, self.note)
        elif issubclass(exc_type, Exception):
            ACCEPTANCE[self.key] = (False, self.title, f"{self.note} {exc_type.__name__}: {exc}".strip())
        return False

"""Passive snoopers and active advert injectors."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .. import crypto
from ..device import ADVERT_PAYLOAD_SIZE, Device, DeviceConfig, fragments_for
from ..messages import NotificationMessage
from .radio import RadioSample


@dataclass(frozen=True)
class SnoopRecord:
    t: float
    address: bytes
    payload: bytes
    rssi: float


@dataclass
class Snooper:
    id: str
    position: tuple[float, float]
    log: list[SnoopRecord] = field(default_factory=list)
    plaintext_bytes_recovered: int = 0

    def observe(self, sample: RadioSample, address: bytes, payload: bytes) -> None:
        if sample.delivered:
            self.log.append(SnoopRecord(sample.t, bytes(address), bytes(payload), sample.rssi_dbm))

    def keys_observed(self) -> set[bytes]:
        halves: dict[tuple[bytes, bytes], dict[int, bytes]] = {}
        for rec in self.log:
            if len(rec.payload) != ADVERT_PAYLOAD_SIZE:
                continue
            halves.setdefault((rec.address, rec.payload[:2]), {})[rec.payload[2]] = rec.payload[3:]
        return {parts[0] + parts[1] for parts in halves.values() if set(parts) >= {0, 1}}

    def log_bytes(self) -> bytes:
        return b"".join(
            f"{r.t!r} {r.address.hex()} {r.payload.hex()} {r.rssi!r}\n".encode() + r.address + r.payload
            for r in self.log
        )

    def attack_backend(self, blobs: list[bytes], seed: crypto.MasterSeed, now: float) -> int:
        """Try every relayed message with keys the snooper owns; returns plaintext bytes recovered."""
        me = Device(seed, DeviceConfig())
        msgs = []
        for blob in blobs:
            try:
                msgs.append(NotificationMessage.from_bytes(blob))
            except ValueError:
                pass
        result = me.poll_and_decrypt(msgs, now)
        recovered = sum(len(p.to_bytes()) for p in result.payloads)
        self.plaintext_bytes_recovered += recovered
        return recovered


def snooper_observe(snooper: Snooper, samples) -> list[SnoopRecord]:
    """Feed ``(RadioSample, address, payload)`` triples to ``snooper`` and return its log."""
    for sample, address, payload in samples:
        snooper.observe(sample, address, payload)
    return snooper.log


@dataclass
class Injector:
    id: str
    script: tuple
    injected: list[tuple[float, bytes, bytes]] = field(default_factory=list)

    def schedule(self) -> list[tuple[float, int]]:
        times = []
        for i, phase in enumerate(self.script):
            k = 0
            while phase.start + k * phase.interval < phase.end:
                times.append((phase.start + k * phase.interval, i))
                k += 1
        return times

    def forge(self, phase_index: int, t: float, scenario, rng: random.Random, state: dict) -> list[tuple[bytes, bytes]]:
        """Packets (address, payload) sent at simulation time ``t`` for one script phase."""
        phase = self.script[phase_index]
        now = scenario.epoch + t
        if phase.malformed:
            packets = [(rng.randbytes(6), rng.randbytes(ADVERT_PAYLOAD_SIZE - 9))]
        elif phase.replay_of is not None:
            victim = scenario.device(phase.replay_of)
            if phase_index not in state:
                window = crypto.window_index_for(scenario.epoch + phase.start, victim.config.window_duration)
                state[phase_index] = crypto.derive_window_keypair(victim.master_seed, max(0, window + phase.replay_window_offset))
            packets = [(f.address, f.payload()) for f in fragments_for(state[phase_index])]
        else:
            if phase_index not in state:
                state[phase_index] = (phase.key or rng.randbytes(32), rng.randbytes(6))
            key, address = state[phase_index]
            hint = crypto.window_index_for(now, 900) % (1 << 16)
            packets = [
                (address, hint.to_bytes(2, "big") + bytes([i]) + key[16 * i:16 * (i + 1)]) for i in (0, 1)
            ]
        for address, payload in packets:
            self.injected.append((t, address, payload))
        return packets


def injector_run(injector: Injector, scenario, rng: random.Random) -> list[tuple[float, bytes, bytes]]:
    """Generate the injector's whole packet stream without a medium; mostly for inspection."""
    state: dict = {}
    for t, i in sorted(injector.schedule()):
        injector.forge(i, t, scenario, rng, state)
    return injector.injected

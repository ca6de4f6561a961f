"""Per-device protocol state: advertise, detect close contacts, report, poll.

A :class:`Device` is owned by one caller at a time and mutated in place.

Contact duration is measured on the receiving side from reassembled
advertisements. A contact usually spans more than one of the peer's rotation
windows, so a sighting run is carried over to the peer's next key when the
new key shows up one to three advertising periods after the old key's last
packet, with the window hint advanced by one. That continuity stays local:
only the first key of the run is stored.
"""

from __future__ import annotations

import hashlib
import json
import random
import secrets
import struct
from dataclasses import dataclass, replace
from typing import Iterable, NamedTuple, Sequence

from . import crypto
from .crypto import MasterSeed, WindowKeyPair
from .messages import DisclosureLevel, NotificationMessage, NotificationPayload, Status, quantize_degrees

FRAGMENT_SIZE = 16
ADDRESS_SIZE = 6
ADVERT_PAYLOAD_SIZE = 2 + 1 + FRAGMENT_SIZE
HINT_MODULUS = 1 << 16
PAIRING_INTERVALS = 3
# Accepted drift when matching a new key to the previous one's advertising schedule.
SCHEDULE_TOLERANCE = 0.05
STATE_VERSION = 1

_ADDRESS_INFO = b"wetrace/adv-address/v1"


class ReportError(ValueError):
    """An infection report was refused."""


@dataclass(frozen=True)
class DeviceConfig:
    window_duration: float = 900
    contact_horizon: float = 14 * 24 * 3600
    rssi_threshold: float = -61.0
    min_contact_duration: float = 900
    advert_interval: float = 20
    prefix_bits: int = 8
    max_report_recipients: int = 1000

    def __post_init__(self) -> None:
        for name in ("window_duration", "contact_horizon", "min_contact_duration", "advert_interval"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.min_contact_duration < 2 * self.advert_interval:
            raise ValueError("min_contact_duration must cover at least two advertising intervals")
        if not 0 <= self.prefix_bits <= crypto.MAX_PREFIX_BITS:
            raise ValueError("prefix_bits must be in 0..32")
        if self.max_report_recipients < 1:
            raise ValueError("max_report_recipients must be at least 1")

    @property
    def horizon_windows(self) -> int:
        return int(self.contact_horizon // self.window_duration)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class AdvertFragment:
    """Half of an advertised public key.

    ``address`` is the link-layer advertiser address (PDU header, not payload);
    it rotates together with the key. ``rssi`` is filled in by the radio.
    """

    address: bytes
    window_epoch_hint: int
    fragment_index: int
    fragment_bytes: bytes
    rssi: float | None = None

    def payload(self) -> bytes:
        return struct.pack(">HB", self.window_epoch_hint, self.fragment_index) + self.fragment_bytes

    @classmethod
    def parse(cls, address: bytes, payload: bytes, rssi: float | None = None) -> "AdvertFragment":
        if len(payload) != ADVERT_PAYLOAD_SIZE:
            raise ValueError(f"advert payload must be {ADVERT_PAYLOAD_SIZE} bytes, got {len(payload)}")
        hint, index = struct.unpack_from(">HB", payload)
        return cls(bytes(address), hint, index, bytes(payload[3:]), rssi)

    def well_formed(self) -> bool:
        return (
            len(self.address) == ADDRESS_SIZE
            and 0 <= self.window_epoch_hint < HINT_MODULUS
            and self.fragment_index in (0, 1)
            and len(self.fragment_bytes) == FRAGMENT_SIZE
        )


def advert_address(keypair: WindowKeyPair) -> bytes:
    addr = bytearray(hashlib.sha256(_ADDRESS_INFO + keypair.secret_key).digest()[:ADDRESS_SIZE])
    addr[0] |= 0xC0  # static random address type
    return bytes(addr)


def fragments_for(keypair: WindowKeyPair) -> tuple[AdvertFragment, AdvertFragment]:
    hint = keypair.window_index % HINT_MODULUS
    addr = advert_address(keypair)
    pk = keypair.public_key
    return (
        AdvertFragment(addr, hint, 0, pk[:FRAGMENT_SIZE]),
        AdvertFragment(addr, hint, 1, pk[FRAGMENT_SIZE:]),
    )


def current_advert_fragments(config: DeviceConfig, seed: MasterSeed, now: float) -> tuple[AdvertFragment, AdvertFragment]:
    index = crypto.window_index_for(now, config.window_duration)
    return fragments_for(crypto.derive_window_keypair(seed, index))


def reassemble(first: AdvertFragment, second: AdvertFragment) -> bytes:
    parts = sorted((first, second), key=lambda f: f.fragment_index)
    if [p.fragment_index for p in parts] != [0, 1]:
        raise ValueError("need fragments 0 and 1")
    if parts[0].window_epoch_hint != parts[1].window_epoch_hint:
        raise ValueError("fragments come from different windows")
    return parts[0].fragment_bytes + parts[1].fragment_bytes


@dataclass
class SightingAccumulator:
    peer_public_key: bytes
    first_seen: float
    last_seen: float
    packet_count: int
    all_rssi_within_threshold: bool
    latitude_q: int
    longitude_q: int
    current_key: bytes
    current_hint: int
    recorded: bool = False

    @property
    def span(self) -> float:
        return self.last_seen - self.first_seen


@dataclass(frozen=True)
class EncounterRecord:
    peer_public_key: bytes
    timestamp: int
    latitude_q: int
    longitude_q: int

    def geo_bytes(self) -> bytes:
        """Timestamp and location as stored: 4 + 4 + 4 bytes."""
        return struct.pack(">Iii", self.timestamp, self.latitude_q, self.longitude_q)


_ALLOWED = {
    Status.NOT_INFECTED: {Status.CLOSE_CONTACT, Status.INFECTED},
    Status.CLOSE_CONTACT: {Status.INFECTED},
    Status.INFECTED: set(),
}


@dataclass
class InfectionStatus:
    state: Status = Status.NOT_INFECTED
    report_spent: bool = False

    def advance(self, new: Status) -> None:
        new = Status(new)
        if new == self.state:
            return
        if new not in _ALLOWED[self.state]:
            raise ValueError(f"illegal status transition {self.state.name} -> {new.name}")
        self.state = new


class PollResult(NamedTuple):
    payloads: list[NotificationPayload]
    attempts: int
    # (position in the polled batch, window index of the key that opened it)
    hits: list[tuple[int, int]]


class Device:
    def __init__(self, seed: MasterSeed | None = None, config: DeviceConfig | None = None):
        self.seed = seed or MasterSeed.generate()
        self.config = config or DeviceConfig()
        self.status = InfectionStatus()
        self.encounters: list[EncounterRecord] = []
        self.cursor = 0
        self.malformed_dropped = 0
        self.stale_dropped = 0
        self._pending: dict[tuple[bytes, int], tuple[AdvertFragment, float]] = {}
        self._active: dict[bytes, SightingAccumulator] = {}
        self._retired: list[SightingAccumulator] = []
        self._keys: dict[int, WindowKeyPair] = {}
        self._tag_index: dict[tuple[int, int, int], dict[bytes, list[WindowKeyPair]]] = {}

    # -- advertising -----------------------------------------------------

    def keypair_for_window(self, index: int) -> WindowKeyPair:
        kp = self._keys.get(index)
        if kp is None:
            kp = crypto.derive_window_keypair(self.seed, index)
            self._keys[index] = kp
        return kp

    def current_keypair(self, now: float) -> WindowKeyPair:
        return self.keypair_for_window(crypto.window_index_for(now, self.config.window_duration))

    def advert_fragments(self, now: float) -> tuple[AdvertFragment, AdvertFragment]:
        return fragments_for(self.current_keypair(now))

    # -- scanning --------------------------------------------------------

    def observe_payload(self, address: bytes, payload: bytes, now: float, rssi: float, own_location) -> None:
        try:
            fragment = AdvertFragment.parse(address, payload, rssi)
        except ValueError:
            self.malformed_dropped += 1
            return
        self.observe_fragment(fragment, now, rssi, own_location)

    def observe_fragment(self, fragment: AdvertFragment, now: float, rssi: float | None, own_location) -> None:
        if not fragment.well_formed():
            self.malformed_dropped += 1
            return
        if rssi is None:
            rssi = fragment.rssi
        current = crypto.window_index_for(now, self.config.window_duration)
        if (fragment.window_epoch_hint - current + 1) % HINT_MODULUS > 2:
            self.stale_dropped += 1
            return
        slot = (fragment.address, fragment.window_epoch_hint)
        pending = self._pending.get(slot)
        max_age = PAIRING_INTERVALS * self.config.advert_interval
        if (
            pending is None
            or pending[0].fragment_index == fragment.fragment_index
            or now - pending[1] > max_age
        ):
            self._pending[slot] = (replace(fragment, rssi=rssi), now)
            return
        other = self._pending.pop(slot)[0]
        key = reassemble(other, fragment)
        self._sample(key, fragment.window_epoch_hint, now, min(other.rssi, rssi), own_location)

    def _sample(self, key: bytes, hint: int, now: float, rssi: float, own_location) -> None:
        cfg = self.config
        gap_limit = PAIRING_INTERVALS * cfg.advert_interval
        acc = self._active.get(key)
        if acc is not None and now - acc.last_seen > gap_limit + SCHEDULE_TOLERANCE:
            self._retire(acc)
            acc = None
        if rssi < cfg.rssi_threshold:
            # an out-of-range sample ends the run; the in-range part stays eligible
            if acc is not None:
                self._retire(acc)
            return
        if acc is not None:
            acc.last_seen = now
            acc.packet_count += 1
            return
        acc = self._continuation(hint, now)
        if acc is not None:
            del self._active[acc.current_key]
            acc.current_key = key
            acc.current_hint = hint
            acc.last_seen = now
            acc.packet_count += 1
            self._active[key] = acc
            return
        lat, lon = own_location
        self._active[key] = SightingAccumulator(
            peer_public_key=key,
            first_seen=now,
            last_seen=now,
            packet_count=1,
            all_rssi_within_threshold=True,
            latitude_q=quantize_degrees(lat),
            longitude_q=quantize_degrees(lon),
            current_key=key,
            current_hint=hint,
        )

    def _continuation(self, hint: int, now: float) -> SightingAccumulator | None:
        interval = self.config.advert_interval
        previous = (hint - 1) % HINT_MODULUS
        best, best_err = None, None
        for acc in self._active.values():
            if acc.current_hint != previous:
                continue
            dt = now - acc.last_seen
            periods = round(dt / interval)
            if not 1 <= periods <= PAIRING_INTERVALS:
                continue
            err = abs(dt - periods * interval)
            if err <= SCHEDULE_TOLERANCE * periods and (best_err is None or err < best_err):
                best, best_err = acc, err
        return best

    def _retire(self, acc: SightingAccumulator) -> None:
        if self._active.get(acc.current_key) is acc:
            del self._active[acc.current_key]
        self._retired.append(acc)

    # -- contact bookkeeping ---------------------------------------------

    def finalize_encounters(self, now: float) -> list[EncounterRecord]:
        cfg = self.config
        gap_limit = PAIRING_INTERVALS * cfg.advert_interval
        for acc in list(self._active.values()):
            if now - acc.last_seen > gap_limit + SCHEDULE_TOLERANCE:
                self._retire(acc)
        for slot, (_, t) in list(self._pending.items()):
            if now - t > gap_limit:
                del self._pending[slot]

        stored = {r.peer_public_key for r in self.encounters}
        new: list[EncounterRecord] = []
        for acc in [*self._retired, *self._active.values()]:
            if acc.recorded:
                continue
            if acc.span < cfg.min_contact_duration or acc.packet_count < 2 or not acc.all_rssi_within_threshold:
                continue
            acc.recorded = True
            if acc.peer_public_key in stored:
                continue
            record = EncounterRecord(acc.peer_public_key, int(acc.first_seen), acc.latitude_q, acc.longitude_q)
            stored.add(record.peer_public_key)
            new.append(record)
        self._retired.clear()
        self.encounters.extend(new)
        return new

    def prune(self, now: float) -> int:
        horizon = self.config.contact_horizon
        keep = [r for r in self.encounters if now - r.timestamp <= horizon]
        removed = len(self.encounters) - len(keep)
        self.encounters = keep
        return removed

    # -- reporting ---------------------------------------------------------

    def build_report(self, level: DisclosureLevel | int, now: float, rng: random.Random | None = None) -> list[NotificationMessage]:
        """Encrypt one notification per stored contact and mark the status as reported.

        ``rng`` drives ephemeral keys and the output shuffle; pass a seeded one
        only for reproducible simulations.
        """
        if self.status.report_spent:
            raise ReportError("status already reported")
        level = DisclosureLevel(level)
        self.prune(now)
        recipients: dict[bytes, EncounterRecord] = {}
        for record in self.encounters:
            recipients.setdefault(record.peer_public_key, record)
        if len(recipients) > self.config.max_report_recipients:
            raise ReportError("report exceeds recipient cap")

        self.status.advance(Status.INFECTED)
        self.status.report_spent = True
        n_bits = self.config.prefix_bits
        out = []
        for key, record in recipients.items():
            payload = NotificationPayload.for_level(
                level, Status.INFECTED, record.timestamp, record.latitude_q, record.longitude_q
            )
            eph = rng.randbytes(32) if rng is not None else None
            out.append(NotificationMessage(crypto.key_prefix_tag(key, n_bits), crypto.encrypt_to(key, payload.to_bytes(), eph)))
        (rng or secrets.SystemRandom()).shuffle(out)
        return out

    # -- receiving -------------------------------------------------------

    def horizon_keypairs(self, now: float) -> list[WindowKeyPair]:
        indices = crypto.horizon_window_indices(now, self.config.window_duration, self.config.contact_horizon)
        for stale in [i for i in self._keys if i not in indices]:
            del self._keys[stale]
        return [self.keypair_for_window(i) for i in indices]

    def _keys_by_tag(self, n_bits: int, keys: Sequence[WindowKeyPair]) -> dict[bytes, list[WindowKeyPair]]:
        cache_key = (n_bits, keys[0].window_index, keys[-1].window_index)
        index = self._tag_index.get(cache_key)
        if index is None:
            index = {}
            for kp in keys:
                index.setdefault(crypto.key_prefix_tag(kp.public_key, n_bits).bits, []).append(kp)
            # the horizon slides, so at most one generation per prefix length is worth keeping
            self._tag_index = {k: v for k, v in self._tag_index.items() if k[0] != n_bits}
            self._tag_index[cache_key] = index
        return index

    def poll_and_decrypt(self, messages: Iterable[NotificationMessage], now: float, try_decrypt=crypto.try_decrypt) -> PollResult:
        keys = self.horizon_keypairs(now)
        payloads: list[NotificationPayload] = []
        hits: list[tuple[int, int]] = []
        attempts = 0
        if not keys:
            return PollResult(payloads, attempts, hits)
        for position, message in enumerate(messages):
            candidates = self._keys_by_tag(message.tag.n_bits, keys).get(message.tag.bits, ())
            for kp in candidates:
                attempts += 1
                plaintext = try_decrypt(kp, message.ciphertext)
                if plaintext is None:
                    continue
                try:
                    payload = NotificationPayload.from_bytes(plaintext)
                except ValueError:
                    continue
                payloads.append(payload)
                hits.append((position, kp.window_index))
                if payload.status == Status.INFECTED and self.status.state == Status.NOT_INFECTED:
                    self.status.advance(Status.CLOSE_CONTACT)
        return PollResult(payloads, attempts, hits)

    # -- persistence -------------------------------------------------------

    def to_bytes(self) -> bytes:
        doc = {
            "version": STATE_VERSION,
            "seed": self.seed.secret.hex(),
            "config": self.config.to_dict(),
            "status": {"state": self.status.state.name.lower(), "report_spent": self.status.report_spent},
            "encounters": [
                [r.peer_public_key.hex(), r.timestamp, r.latitude_q, r.longitude_q] for r in self.encounters
            ],
            "cursor": self.cursor,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Device":
        doc = json.loads(data)
        if doc.get("version") != STATE_VERSION:
            raise ValueError(f"unsupported device state version {doc.get('version')!r}")
        device = cls(MasterSeed(bytes.fromhex(doc["seed"])), DeviceConfig.from_dict(doc["config"]))
        device.status = InfectionStatus(Status[doc["status"]["state"].upper()], bool(doc["status"]["report_spent"]))
        device.encounters = [EncounterRecord(bytes.fromhex(k), ts, lat, lon) for k, ts, lat, lon in doc["encounters"]]
        device.cursor = int(doc["cursor"])
        return device

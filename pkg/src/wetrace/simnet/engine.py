"""Single-threaded discrete-event loop driving devices, radio, attackers and the relay."""

from __future__ import annotations

import hashlib
import heapq
import json
import random
from dataclasses import dataclass, field

from .. import crypto
from ..backend import BackendStore, PublishError, PublishRequest
from ..device import Device, ReportError
from ..messages import NotificationMessage, NotificationPayload, Status
from .actors import Injector, Snooper
from .metrics import BackendMetrics, DeviceMetrics, MetricsReport, SnooperMetrics
from .oracle import ground_truth_contacts
from .radio import RadioMedium
from .scenario import Scenario

# ordering of simultaneous events
_RADIO, _TICK, _SCRIPT = 0, 1, 2
# slack when matching a recorded contact start against the oracle's 1 s grid
_MATCH_SLACK = 1.0


@dataclass
class SimResult:
    metrics: MetricsReport
    events: list[dict]
    devices: dict[str, Device]
    backend: BackendStore
    snoopers: dict[str, Snooper]
    injectors: dict[str, Injector]
    outbound: list[bytes] = field(default_factory=list)
    plaintexts: list[bytes] = field(default_factory=list)
    coordinates: set[float] = field(default_factory=set)
    key_owner: dict[bytes, str] = field(default_factory=dict)
    encounters_by_owner: dict[str, dict[str, int]] = field(default_factory=dict)

    def event_log(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)


class _Run:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        base = scenario.random_seed.to_bytes(8, "big")
        self.rng_radio = random.Random(hashlib.sha256(b"radio" + base).digest())
        self.rng_phase = random.Random(hashlib.sha256(b"phase" + base).digest())
        self.rng_crypto = random.Random(hashlib.sha256(b"crypto" + base).digest())
        self.rng_attack = random.Random(hashlib.sha256(b"attack" + base).digest())
        self.medium = RadioMedium(scenario.radio, self.rng_radio)
        self.backend = BackendStore(scenario.retention, scenario.difficulty)
        self.devices = {d.id: Device(d.master_seed, d.config) for d in scenario.devices}
        self.specs = {d.id: d for d in scenario.devices}
        self.snoopers = {a.id: Snooper(a.id, a.position) for a in scenario.attackers if a.kind == "snooper"}
        self.injectors = {a.id: Injector(a.id, a.script) for a in scenario.attackers if a.kind == "injector"}
        self.injector_state: dict[str, dict] = {i: {} for i in self.injectors}
        self.metrics = {d: DeviceMetrics() for d in self.devices}
        self.log: list[dict] = []
        self.queue: list = []
        self.seq = 0
        self.outbound: list[bytes] = []
        self.plaintexts: list[bytes] = []
        self.coordinates: set[float] = set()
        # blob -> keys its reporter had recorded when the report was built
        self.blob_origin: dict[bytes, frozenset[bytes]] = {}

    def push(self, t: float, kind: int, payload) -> None:
        heapq.heappush(self.queue, (t, kind, self.seq, payload))
        self.seq += 1

    def emit(self, t: float, actor: str, event: str, **details) -> None:
        self.log.append({"t": round(t, 6), "actor": actor, "event": event, "details": details})

    def position(self, dev_id: str, t: float):
        return self.specs[dev_id].trajectory.position(t)

    # -- radio ----------------------------------------------------------------

    def broadcast(self, sender: str, t: float, sender_pos, packets, skip: str | None = None) -> None:
        now = self.sc.epoch + t
        for rid, receiver in self.devices.items():
            if rid == skip:
                continue
            rpos = self.position(rid, t)
            location = None
            for address, payload in packets:
                sample = self.medium.transmit(sender, rid, t, sender_pos, rpos)
                if not sample.delivered:
                    continue
                if location is None:
                    location = self.sc.to_geo(*rpos)
                    self.coordinates.update(location)
                receiver.observe_payload(address, payload, now, sample.rssi_dbm, location)
        for sid, snooper in self.snoopers.items():
            for address, payload in packets:
                sample = self.medium.transmit(sender, sid, t, sender_pos, snooper.position)
                snooper.observe(sample, address, payload)

    def advertise(self, dev_id: str, t: float) -> None:
        device = self.devices[dev_id]
        frags = device.advert_fragments(self.sc.epoch + t)
        self.broadcast(dev_id, t, self.position(dev_id, t), [(f.address, f.payload()) for f in frags], skip=dev_id)
        nxt = t + device.config.advert_interval
        if nxt < self.sc.duration:
            self.push(nxt, _RADIO, ("advert", dev_id))

    def inject(self, inj_id: str, phase_index: int, t: float) -> None:
        injector = self.injectors[inj_id]
        packets = injector.forge(phase_index, t, self.sc, self.rng_attack, self.injector_state[inj_id])
        self.broadcast(inj_id, t, injector.script[phase_index].position, packets)

    # -- housekeeping -----------------------------------------------------------

    def tick(self, t: float) -> None:
        now = self.sc.epoch + t
        for dev_id, device in self.devices.items():
            new = device.finalize_encounters(now)
            if new:
                self.emit(t, dev_id, "encounter", new=len(new), stored=len(device.encounters))
            device.prune(now)
        removed = self.backend.purge(now)
        if removed:
            self.emit(t, "backend", "purge", removed=removed)

    def report(self, dev_id: str, t: float, level, token) -> None:
        now = self.sc.epoch + t
        device = self.devices[dev_id]
        device.finalize_encounters(now)
        recorded = frozenset(r.peer_public_key for r in device.encounters)
        try:
            messages = device.build_report(level, now, rng=self.rng_crypto)
        except ReportError as exc:
            self.metrics[dev_id].reports_rejected += 1
            self.emit(t, dev_id, "report_rejected", reason=str(exc))
            return
        for record in device.encounters:
            self.plaintexts.append(NotificationPayload.for_level(
                level, Status.INFECTED, record.timestamp, record.latitude_q, record.longitude_q).to_bytes())
        blobs = [m.to_bytes() for m in messages]
        self.outbound.extend(blobs)
        if not blobs:
            self.emit(t, dev_id, "report", recipients=0, note="no contacts to notify")
            return
        for blob in blobs:
            self.blob_origin[blob] = recorded
        request = PublishRequest.build(blobs, self.backend.difficulty, token)
        try:
            accepted = self.backend.publish(request, now)
        except PublishError as exc:
            self.emit(t, dev_id, "publish_rejected", reason=exc.reason, size=len(blobs))
            return
        self.emit(t, dev_id, "report", recipients=len(blobs), accepted=accepted, level=int(level))

    def poll(self, dev_id: str, t: float) -> None:
        now = self.sc.epoch + t
        device = self.devices[dev_id]
        blobs, cursor = self.backend.poll(device.cursor)
        device.cursor = cursor
        parsed, origin = [], []
        for blob in blobs:
            try:
                parsed.append(NotificationMessage.from_bytes(blob))
                origin.append(blob)
            except ValueError:
                continue
        result = device.poll_and_decrypt(parsed, now)
        m = self.metrics[dev_id]
        m.notifications_decoded += len(result.payloads)
        m.decrypt_attempts_with_prefix += result.attempts
        m.decrypt_attempts_without_prefix += len(parsed) * len(device.horizon_keypairs(now))
        for position, window in result.hits:
            own = device.keypair_for_window(window).public_key
            if own not in self.blob_origin.get(origin[position], frozenset()):
                m.false_decodes += 1
        self.emit(t, dev_id, "poll", fetched=len(blobs), decoded=len(result.payloads), attempts=result.attempts,
                  status=device.status.state.name.lower())

    # -- main loop ----------------------------------------------------------------

    def run(self) -> SimResult:
        sc = self.sc
        for dev_id, device in self.devices.items():
            interval = device.config.advert_interval
            phase = round(self.rng_phase.uniform(0, interval), 3)
            if phase < sc.duration:
                self.push(phase, _RADIO, ("advert", dev_id))
        for inj_id, injector in self.injectors.items():
            for t, i in injector.schedule():
                if t < sc.duration:
                    self.push(t, _RADIO, ("inject", inj_id, i))
        t = sc.tick
        while t < sc.duration:
            self.push(t, _TICK, ("tick",))
            t += sc.tick
        for ev in sc.events:
            self.push(ev.t, _SCRIPT, ("script", ev))
        self.push(sc.duration, _TICK, ("tick",))

        while self.queue:
            t, _, _, item = heapq.heappop(self.queue)
            kind = item[0]
            if kind == "advert":
                self.advertise(item[1], t)
            elif kind == "inject":
                self.inject(item[1], item[2], t)
            elif kind == "tick":
                self.tick(t)
            elif kind == "script":
                ev = item[1]
                if ev.action == "report":
                    self.report(ev.device, t, ev.level, ev.token)
                else:
                    self.poll(ev.device, t)

        end = sc.epoch + sc.duration
        snoop_metrics = {}
        all_blobs, _ = self.backend.poll(0)
        for sid, snooper in self.snoopers.items():
            own_seed = crypto.MasterSeed(hashlib.sha256(b"snooper" + sid.encode()).digest())
            snooper.attack_backend(all_blobs, own_seed, end)
            snoop_metrics[sid] = SnooperMetrics(len(snooper.keys_observed()), snooper.plaintext_bytes_recovered)
            self.emit(sc.duration, sid, "snoop_summary", records=len(snooper.log),
                      keys=snoop_metrics[sid].keys_observed)

        key_owner = self._key_owner()
        by_owner = self._score(key_owner)
        for dev_id, device in self.devices.items():
            self.metrics[dev_id].malformed_dropped = device.malformed_dropped
            self.metrics[dev_id].stale_dropped = device.stale_dropped

        accepted = sum(e["details"].get("accepted", 0) for e in self.log if e["event"] == "report")
        report = MetricsReport(
            devices=self.metrics,
            backend=BackendMetrics(len(self.backend), accepted, self.backend.rejected),
            snoopers=snoop_metrics,
        )
        return SimResult(report, self.log, self.devices, self.backend, self.snoopers, self.injectors,
                         self.outbound, self.plaintexts, self.coordinates, key_owner, by_owner)

    def _key_owner(self) -> dict[bytes, str]:
        owner: dict[bytes, str] = {}
        sc = self.sc
        for entry in sc.devices:
            wd = entry.config.window_duration
            first = crypto.window_index_for(sc.epoch, wd)
            last = crypto.window_index_for(sc.epoch + sc.duration, wd)
            for i in range(first, last + 1):
                owner[self.devices[entry.id].keypair_for_window(i).public_key] = entry.id
        for inj_id, injector in self.injectors.items():
            for value in self.injector_state[inj_id].values():
                key = value.public_key if hasattr(value, "public_key") else value[0]
                owner.setdefault(key, inj_id)
        return owner

    def _score(self, key_owner: dict[bytes, str]) -> dict[str, dict[str, int]]:
        sc = self.sc
        contacts = ground_truth_contacts(sc)
        by_owner: dict[str, dict[str, int]] = {}
        for dev_id, device in self.devices.items():
            m = self.metrics[dev_id]
            min_len = device.config.min_contact_duration
            truth = [c for c in contacts if dev_id in (c.device_a, c.device_b) and c.length >= min_len]
            m.ground_truth_contacts = len(truth)
            m.encounters_detected = len(device.encounters)
            matched: set[int] = set()
            counts: dict[str, int] = {}
            for record in device.encounters:
                peer = key_owner.get(record.peer_public_key)
                counts[peer or "?"] = counts.get(peer or "?", 0) + 1
                if peer is None or peer not in self.devices:
                    m.attacker_records += 1
                    continue
                t_rel = record.timestamp - sc.epoch
                hit = None
                for idx, c in enumerate(truth):
                    if idx in matched or peer not in (c.device_a, c.device_b):
                        continue
                    if c.start_t - _MATCH_SLACK <= t_rel <= c.end_t + _MATCH_SLACK:
                        hit = idx
                        break
                if hit is None:
                    m.false_positives += 1
                else:
                    matched.add(hit)
                    m.true_positives += 1
            m.false_negatives = len(truth) - len(matched)
            by_owner[dev_id] = counts
        return by_owner


def run(scenario: Scenario) -> SimResult:
    """Run ``scenario`` to completion. Deterministic in the scenario value."""
    return _Run(scenario).run()

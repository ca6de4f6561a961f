"""Scenario documents: devices, trajectories, radio, attackers and scripted events."""

from __future__ import annotations

import bisect
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..crypto import MasterSeed
from ..device import DeviceConfig
from ..messages import DisclosureLevel
from .radio import RadioParams

DEFAULT_EPOCH = 1_600_000_000
DEFAULT_ORIGIN = (47.3769, 8.5417)
METERS_PER_DEGREE = 111_320.0


class ScenarioError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path; held at the first/last waypoint outside its time span."""

    waypoints: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "_times", [w[0] for w in self.waypoints])

    @classmethod
    def static(cls, x: float, y: float) -> "Trajectory":
        return cls(((0.0, float(x), float(y)),))

    def position(self, t: float) -> tuple[float, float]:
        wps = self.waypoints
        times = self._times
        if t <= times[0]:
            return wps[0][1], wps[0][2]
        if t >= times[-1]:
            return wps[-1][1], wps[-1][2]
        i = bisect.bisect_right(times, t)
        t0, x0, y0 = wps[i - 1]
        t1, x1, y1 = wps[i]
        f = (t - t0) / (t1 - t0)
        return x0 + f * (x1 - x0), y0 + f * (y1 - y0)


@dataclass(frozen=True)
class DeviceSpec:
    id: str
    master_seed: MasterSeed
    config: DeviceConfig
    trajectory: Trajectory


@dataclass(frozen=True)
class InjectorPhase:
    start: float
    end: float
    position: tuple[float, float]
    interval: float = 20.0
    key: bytes | None = None
    replay_of: str | None = None
    replay_window_offset: int = -1
    malformed: bool = False


@dataclass(frozen=True)
class Attacker:
    id: str
    kind: str  # "snooper" | "injector"
    position: tuple[float, float] = (0.0, 0.0)
    script: tuple[InjectorPhase, ...] = ()


@dataclass(frozen=True)
class ScriptedEvent:
    t: float
    device: str
    action: str  # "report" | "poll"
    level: DisclosureLevel | None = None
    token: str | None = None


@dataclass(frozen=True)
class Scenario:
    random_seed: int
    duration: float
    devices: tuple[DeviceSpec, ...] = ()
    radio: RadioParams = field(default_factory=RadioParams)
    attackers: tuple[Attacker, ...] = ()
    events: tuple[ScriptedEvent, ...] = ()
    epoch: int = DEFAULT_EPOCH
    origin: tuple[float, float] = DEFAULT_ORIGIN
    difficulty: int = 8
    retention: float = 14 * 24 * 3600
    tick: float = 60.0

    def device(self, device_id: str) -> DeviceSpec:
        for entry in self.devices:
            if entry.id == device_id:
                return entry
        raise KeyError(device_id)

    def to_geo(self, x: float, y: float) -> tuple[float, float]:
        lat0, lon0 = self.origin
        lat = lat0 + y / METERS_PER_DEGREE
        lon = lon0 + x / (METERS_PER_DEGREE * math.cos(math.radians(lat0)))
        return lat, lon

    # -- documents -----------------------------------------------------------

    def to_dict(self) -> dict:
        doc = {
            "random_seed": self.random_seed,
            "duration": self.duration,
            "epoch": self.epoch,
            "origin": list(self.origin),
            "difficulty": self.difficulty,
            "retention": self.retention,
            "tick": self.tick,
            "radio": self.radio.to_dict(),
            "devices": [
                {
                    "id": d.id,
                    "master_seed": d.master_seed.secret.hex(),
                    "config": d.config.to_dict(),
                    "trajectory": [list(w) for w in d.trajectory.waypoints],
                }
                for d in self.devices
            ],
            "attackers": [_attacker_to_dict(a) for a in self.attackers],
            "events": [_event_to_dict(e) for e in self.events],
        }
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        return _parse(doc)

    @classmethod
    def load(cls, path: str | Path) -> "Scenario":
        text = Path(path).read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError("<document>", f"invalid JSON: {exc}") from None
        return _parse(doc)


def _attacker_to_dict(a: Attacker) -> dict:
    doc = {"id": a.id, "kind": a.kind}
    if a.kind == "snooper":
        doc["position"] = list(a.position)
    else:
        doc["script"] = [
            {
                "start": p.start,
                "end": p.end,
                "position": list(p.position),
                "interval": p.interval,
                "key": p.key.hex() if p.key else None,
                "replay_of": p.replay_of,
                "replay_window_offset": p.replay_window_offset,
                "malformed": p.malformed,
            }
            for p in a.script
        ]
    return doc


def _event_to_dict(e: ScriptedEvent) -> dict:
    doc = {"t": e.t, "device": e.device, "action": e.action}
    if e.level is not None:
        doc["level"] = int(e.level)
    if e.token is not None:
        doc["token"] = e.token
    return doc


def seed_for(random_seed: int, device_id: str) -> MasterSeed:
    return MasterSeed(hashlib.sha256(f"wetrace-sim/{random_seed}/{device_id}".encode()).digest())


# -- validation --------------------------------------------------------------


def _num(doc: dict, key: str, path: str, default=None, minimum=None, positive=False):
    if key not in doc:
        if default is None:
            raise ScenarioError(f"{path}{key}", "required field missing")
        return default
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ScenarioError(f"{path}{key}", "must be a finite number")
    if positive and value <= 0:
        raise ScenarioError(f"{path}{key}", "must be positive")
    if minimum is not None and value < minimum:
        raise ScenarioError(f"{path}{key}", f"must be >= {minimum}")
    return value


def _point(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2 or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ScenarioError(path, "must be a pair of numbers [x, y]")
    return float(value[0]), float(value[1])


_TOP_LEVEL = {"random_seed", "duration", "epoch", "origin", "difficulty", "retention", "tick",
              "radio", "devices", "attackers", "events"}


def _parse(doc) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioError("<document>", "must be an object")
    unknown = set(doc) - _TOP_LEVEL
    if unknown:
        raise ScenarioError(sorted(unknown)[0], "unknown field")
    seed = doc.get("random_seed")
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioError("random_seed", "must be an integer in [0, 2^64)")
    duration = _num(doc, "duration", "", positive=True)
    epoch = _num(doc, "epoch", "", default=DEFAULT_EPOCH, minimum=0)
    origin = _point(doc.get("origin", list(DEFAULT_ORIGIN)), "origin")
    difficulty = _num(doc, "difficulty", "", default=8, minimum=0)
    if difficulty > 32 or int(difficulty) != difficulty:
        raise ScenarioError("difficulty", "must be an integer in 0..32")
    retention = _num(doc, "retention", "", default=14 * 24 * 3600, positive=True)
    tick = _num(doc, "tick", "", default=60.0, positive=True)

    radio_doc = doc.get("radio", {})
    if not isinstance(radio_doc, dict):
        raise ScenarioError("radio", "must be an object")
    try:
        radio = RadioParams.from_dict(radio_doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError("radio", str(exc)) from None

    devices = []
    seen_ids: set[str] = set()
    for i, d in enumerate(doc.get("devices", [])):
        path = f"devices[{i}]"
        if not isinstance(d, dict):
            raise ScenarioError(path, "must be an object")
        dev_id = d.get("id")
        if not isinstance(dev_id, str) or not dev_id:
            raise ScenarioError(f"{path}.id", "must be a non-empty string")
        if dev_id in seen_ids:
            raise ScenarioError(f"{path}.id", f"duplicate id {dev_id!r}")
        seen_ids.add(dev_id)
        if "master_seed" in d:
            try:
                ms = MasterSeed(bytes.fromhex(d["master_seed"]))
            except (TypeError, ValueError):
                raise ScenarioError(f"{path}.master_seed", "must be 64 hex characters") from None
        else:
            ms = seed_for(seed, dev_id)
        try:
            config = DeviceConfig.from_dict(d.get("config", {}))
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"{path}.config", str(exc)) from None
        devices.append(DeviceSpec(dev_id, ms, config, _trajectory(d.get("trajectory"), f"{path}.trajectory")))

    attackers = []
    for i, a in enumerate(doc.get("attackers", [])):
        path = f"attackers[{i}]"
        if not isinstance(a, dict):
            raise ScenarioError(path, "must be an object")
        att_id = a.get("id", f"attacker{i}")
        if not isinstance(att_id, str) or not att_id:
            raise ScenarioError(f"{path}.id", "must be a non-empty string")
        kind = a.get("kind")
        if kind == "snooper":
            attackers.append(Attacker(att_id, kind, _point(a.get("position"), f"{path}.position")))
        elif kind == "injector":
            phases = []
            for j, p in enumerate(a.get("script", [])):
                ppath = f"{path}.script[{j}]."
                start = _num(p, "start", ppath, minimum=0)
                end = _num(p, "end", ppath, minimum=0)
                if end <= start:
                    raise ScenarioError(f"{ppath}end", "must be after start")
                key = p.get("key")
                if key is not None:
                    try:
                        key = bytes.fromhex(key)
                    except (TypeError, ValueError):
                        key = b""
                    if len(key) != 32:
                        raise ScenarioError(f"{ppath}key", "must be 64 hex characters")
                replay_of = p.get("replay_of")
                if replay_of is not None and replay_of not in seen_ids:
                    raise ScenarioError(f"{ppath}replay_of", f"unknown device {replay_of!r}")
                offset = p.get("replay_window_offset", -1)
                if not isinstance(offset, int) or isinstance(offset, bool):
                    raise ScenarioError(f"{ppath}replay_window_offset", "must be an integer")
                phases.append(InjectorPhase(
                    start, end, _point(p.get("position"), f"{ppath}position"),
                    _num(p, "interval", ppath, default=20.0, positive=True),
                    key, replay_of, offset, bool(p.get("malformed", False)),
                ))
            attackers.append(Attacker(att_id, kind, script=tuple(phases)))
        else:
            raise ScenarioError(f"{path}.kind", "must be 'snooper' or 'injector'")

    events = []
    for i, e in enumerate(doc.get("events", [])):
        path = f"events[{i}]."
        t = _num(e, "t", path, minimum=0)
        if t > duration:
            raise ScenarioError(f"{path}t", "after the end of the run")
        dev = e.get("device")
        if dev not in seen_ids:
            raise ScenarioError(f"{path}device", f"unknown device {dev!r}")
        action = e.get("action")
        level = None
        if action == "report":
            try:
                level = DisclosureLevel(e.get("level", 1))
            except ValueError:
                raise ScenarioError(f"{path}level", "must be 1..4") from None
        elif action != "poll":
            raise ScenarioError(f"{path}action", "must be 'report' or 'poll'")
        events.append(ScriptedEvent(float(t), dev, action, level, e.get("token")))

    return Scenario(
        random_seed=seed,
        duration=float(duration),
        devices=tuple(devices),
        radio=radio,
        attackers=tuple(attackers),
        events=tuple(events),
        epoch=int(epoch),
        origin=origin,
        difficulty=int(difficulty),
        retention=float(retention),
        tick=float(tick),
    )


def _trajectory(raw, path: str) -> Trajectory:
    if not isinstance(raw, list) or not raw:
        raise ScenarioError(path, "must be a non-empty list of [t, x, y] waypoints")
    wps = []
    for i, w in enumerate(raw):
        if not isinstance(w, (list, tuple)) or len(w) != 3 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in w
        ):
            raise ScenarioError(f"{path}[{i}]", "must be [t, x, y] numbers")
        if wps and w[0] <= wps[-1][0]:
            raise ScenarioError(f"{path}[{i}]", "waypoint times must strictly increase")
        wps.append((float(w[0]), float(w[1]), float(w[2])))
    return Trajectory(tuple(wps))

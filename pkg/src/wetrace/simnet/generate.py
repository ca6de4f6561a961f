"""Canonical and randomized scenario builders."""

from __future__ import annotations

import math
import random

import numpy as np

from .oracle import pair_distances
from .scenario import Scenario

DEMO_REPORT_T = 1300.0
DEMO_POLL_T = 1500.0


def demo_document(difficulty: int = 8) -> dict:
    """A and B side by side at 1 m for 20 min, C 100 m away; A reports at level 1, B and C poll."""
    return {
        "random_seed": 2020,
        "duration": 1800,
        "difficulty": difficulty,
        "devices": [
            {"id": "A", "trajectory": [[0, 0.0, 0.0]]},
            {"id": "B", "trajectory": [[0, 1.0, 0.0], [1200, 1.0, 0.0], [1260, 60.0, 0.0]]},
            {"id": "C", "trajectory": [[0, 100.0, 0.0]]},
        ],
        "attackers": [{"id": "S", "kind": "snooper", "position": [0.0, 1.0]}],
        "events": [
            {"t": DEMO_REPORT_T, "device": "A", "action": "report", "level": 1},
            {"t": DEMO_POLL_T, "device": "B", "action": "poll"},
            {"t": DEMO_POLL_T, "device": "C", "action": "poll"},
        ],
    }


def demo_scenario(difficulty: int = 8) -> Scenario:
    return Scenario.from_dict(demo_document(difficulty))


# Contacts whose length falls in this band are too close to the 15 min bar
# for a 20 s advertising schedule to classify the same way as a 1 s oracle.
AMBIGUOUS_CONTACT = (870.0, 970.0)
# RSSI threshold -61 dBm sits at 1.995 m; the oracle cuts at 2.0 m.
AMBIGUOUS_DISTANCE = (1.99, 2.0)


def _itinerary(rng: random.Random, spots, duration: float, slot_radius: float):
    t = 0.0
    here = rng.randrange(len(spots))
    angle = rng.uniform(0, 2 * math.pi)
    x = spots[here][0] + slot_radius * math.cos(angle)
    y = spots[here][1] + slot_radius * math.sin(angle)
    wps = [(t, x, y)]
    while t < duration:
        stay = rng.uniform(60, 600) if rng.random() < 0.5 else rng.uniform(1100, 2700)
        t += stay
        wps.append((t, x, y))
        nxt = rng.choice([i for i in range(len(spots)) if i != here])
        angle = rng.uniform(0, 2 * math.pi)
        nx = spots[nxt][0] + slot_radius * math.cos(angle)
        ny = spots[nxt][1] + slot_radius * math.sin(angle)
        t += math.dist((x, y), (nx, ny)) / rng.uniform(1.0, 1.5)
        x, y, here = nx, ny, nxt
        wps.append((t, x, y))
    return [[round(a, 3), round(b, 4), round(c, 4)] for a, b, c in wps]


def random_document(seed: int, n_devices: int | None = None, duration: float = 3 * 3600,
                    attackers: bool = False, horizon: float = 86400, max_tries: int = 200) -> dict:
    """Devices wander between meeting spots and linger there; a few report, everyone polls.

    Worlds where any contact lands in the ambiguous bands are redrawn.
    """
    rng = random.Random(seed)
    for _ in range(max_tries):
        n = n_devices or rng.randint(3, 6)
        spots = [(40.0 * (i % 3), 40.0 * (i // 3)) for i in range(6)]
        devices = [
            {
                "id": f"D{i}",
                "config": {"contact_horizon": horizon},
                "trajectory": _itinerary(rng, spots, duration, 0.5),
            }
            for i in range(n)
        ]
        events = []
        reporters = rng.sample(range(n), k=min(n, rng.randint(1, 2)))
        for r in reporters:
            events.append({"t": round(rng.uniform(duration * 0.5, duration * 0.8), 1), "device": f"D{r}",
                           "action": "report", "level": rng.randint(1, 4)})
        for i in range(n):
            events.append({"t": round(duration * 0.6, 1), "device": f"D{i}", "action": "poll"})
            events.append({"t": round(duration - 5, 1), "device": f"D{i}", "action": "poll"})
        doc = {"random_seed": rng.randrange(2**63), "duration": duration, "devices": devices, "events": events}
        if attackers:
            doc["attackers"] = [
                {"id": "S", "kind": "snooper", "position": list(rng.choice(spots))},
                {"id": "I", "kind": "injector", "script": [
                    {"start": 100.0, "end": 400.0, "position": [150.0, 150.0]},
                    {"start": 600.0, "end": 700.0, "position": list(rng.choice(spots)), "replay_of": "D0",
                     "replay_window_offset": -1},
                    {"start": 800.0, "end": 820.0, "position": list(rng.choice(spots)), "malformed": True},
                ]},
            ]
        if _unambiguous(Scenario.from_dict(doc)):
            return doc
    raise RuntimeError("could not draw an unambiguous scenario")


def _unambiguous(scenario: Scenario) -> bool:
    _, dists = pair_distances(scenario)
    lo, hi = AMBIGUOUS_CONTACT
    for dist in dists.values():
        if np.any((dist > AMBIGUOUS_DISTANCE[0]) & (dist < AMBIGUOUS_DISTANCE[1])):
            return False
        inside = np.concatenate([[False], dist < 2.0, [False]]).astype(np.int8)
        edges = np.diff(inside)
        lengths = np.flatnonzero(edges == -1) - 1 - np.flatnonzero(edges == 1)
        if np.any((lengths >= lo) & (lengths <= hi)):
            return False
    return True


def random_scenario(seed: int, **kw) -> Scenario:
    return Scenario.from_dict(random_document(seed, **kw))

"""Brute-force contact oracle: pairwise distance at 1 s resolution.

Only scenario geometry is used here; nothing from the protocol side.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

CONTACT_DISTANCE_M = 2.0


@dataclass(frozen=True)
class GroundTruthContact:
    device_a: str
    device_b: str
    start_t: float
    end_t: float

    @property
    def length(self) -> float:
        return self.end_t - self.start_t


def sample_positions(trajectory, times: np.ndarray) -> np.ndarray:
    wps = np.asarray(trajectory.waypoints, dtype=float)
    x = np.interp(times, wps[:, 0], wps[:, 1])
    y = np.interp(times, wps[:, 0], wps[:, 2])
    return np.stack([x, y], axis=1)


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive index ranges where ``mask`` is true."""
    if not mask.any():
        return []
    padded = np.concatenate([[False], mask, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1) - 1
    return list(zip(starts.tolist(), ends.tolist()))


def pair_distances(scenario) -> tuple[np.ndarray, dict[tuple[str, str], np.ndarray]]:
    times = np.arange(0.0, float(np.floor(scenario.duration)) + 1.0)
    pos = {d.id: sample_positions(d.trajectory, times) for d in scenario.devices}
    out = {}
    for a, b in combinations([d.id for d in scenario.devices], 2):
        out[(a, b)] = np.linalg.norm(pos[a] - pos[b], axis=1)
    return times, out


def ground_truth_contacts(scenario, threshold: float = CONTACT_DISTANCE_M) -> list[GroundTruthContact]:
    times, dists = pair_distances(scenario)
    contacts = []
    for (a, b), dist in dists.items():
        for i, j in _runs(dist < threshold):
            contacts.append(GroundTruthContact(a, b, float(times[i]), float(times[j])))
    return contacts

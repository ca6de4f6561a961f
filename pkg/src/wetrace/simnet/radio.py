"""Log-distance path-loss radio with seeded loss and noise."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

# Receivers closer than this are treated as being at this distance.
NEAR_FIELD_M = 0.1


@dataclass(frozen=True)
class RadioParams:
    tx_power_dbm: float = -55.0
    path_loss_exponent: float = 2.0
    noise_sigma_db: float = 0.0
    packet_loss_prob: float = 0.0
    sensitivity_dbm: float = -100.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.packet_loss_prob <= 1.0:
            raise ValueError("packet_loss_prob must be in [0, 1]")
        if self.noise_sigma_db < 0:
            raise ValueError("noise_sigma_db must be non-negative")
        if self.path_loss_exponent <= 0:
            raise ValueError("path_loss_exponent must be positive")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, doc: dict) -> "RadioParams":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown field {sorted(unknown)[0]}")
        for k, v in doc.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValueError(f"{k} must be a number")
        return cls(**{k: float(v) for k, v in doc.items()})

    def range_for(self, rssi_dbm: float) -> float:
        """Distance at which the noiseless RSSI equals ``rssi_dbm``."""
        return 10 ** ((self.tx_power_dbm - rssi_dbm) / (10 * self.path_loss_exponent))


def rssi_at(radio: RadioParams, distance_m: float, rng: random.Random | None = None) -> float:
    if distance_m <= 0:
        raise ValueError("distance must be positive")
    rssi = radio.tx_power_dbm - 10 * radio.path_loss_exponent * math.log10(distance_m)
    if radio.noise_sigma_db > 0:
        if rng is None:
            raise ValueError("noisy radio needs an rng")
        rssi += rng.gauss(0.0, radio.noise_sigma_db)
    return rssi


@dataclass(frozen=True)
class RadioSample:
    sender: str
    receiver: str
    t: float
    distance_m: float
    rssi_dbm: float
    delivered: bool


class RadioMedium:
    """Decides delivery and RSSI of each transmission.

    Every transmission consumes the same random draws whatever the parameters,
    so two runs that differ only in loss probability see coupled outcomes: a
    packet lost at probability p is also lost at any p' > p.
    """

    def __init__(self, params: RadioParams, rng: random.Random):
        self.params = params
        self.rng = rng

    def transmit(self, sender: str, receiver: str, t: float, sender_pos, receiver_pos) -> RadioSample:
        d = max(math.dist(sender_pos, receiver_pos), NEAR_FIELD_M)
        u = self.rng.random()
        noise = self.rng.gauss(0.0, 1.0)
        p = self.params
        rssi = p.tx_power_dbm - 10 * p.path_loss_exponent * math.log10(d) + p.noise_sigma_db * noise
        delivered = u >= p.packet_loss_prob and rssi >= p.sensitivity_dbm
        return RadioSample(sender, receiver, t, d, rssi, delivered)

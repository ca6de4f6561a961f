from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass
class DeviceMetrics:
    encounters_detected: int = 0
    ground_truth_contacts: int = 0
    true_positives: int = 0
    false_positives: int = 0
    false_negatives: int = 0
    attacker_records: int = 0
    notifications_decoded: int = 0
    false_decodes: int = 0
    decrypt_attempts_with_prefix: int = 0
    decrypt_attempts_without_prefix: int = 0
    reports_rejected: int = 0
    malformed_dropped: int = 0
    stale_dropped: int = 0


@dataclass
class BackendMetrics:
    messages_stored: int = 0
    messages_accepted: int = 0
    publishes_rejected: int = 0


@dataclass
class SnooperMetrics:
    keys_observed: int = 0
    plaintext_bytes_recovered: int = 0


@dataclass
class MetricsReport:
    devices: dict[str, DeviceMetrics] = field(default_factory=dict)
    backend: BackendMetrics = field(default_factory=BackendMetrics)
    snoopers: dict[str, SnooperMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "devices": {k: asdict(v) for k, v in self.devices.items()},
            "backend": asdict(self.backend),
            "snoopers": {k: asdict(v) for k, v in self.snoopers.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def totals(self) -> DeviceMetrics:
        total = DeviceMetrics()
        for m in self.devices.values():
            for k, v in asdict(m).items():
                setattr(total, k, getattr(total, k) + v)
        return total

    def table(self) -> str:
        cols = [
            ("device", None),
            ("detected", "encounters_detected"),
            ("truth", "ground_truth_contacts"),
            ("TP", "true_positives"),
            ("FP", "false_positives"),
            ("FN", "false_negatives"),
            ("decoded", "notifications_decoded"),
            ("attempts", "decrypt_attempts_with_prefix"),
            ("no-prefix", "decrypt_attempts_without_prefix"),
        ]
        rows = [[name for name, _ in cols]]
        for dev_id, m in self.devices.items():
            rows.append([dev_id] + [str(getattr(m, attr)) for _, attr in cols[1:]])
        widths = [max(len(r[i]) for r in rows) for i in range(len(cols))]
        lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(r, widths)))
                 for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        b = self.backend
        lines.append("")
        lines.append(f"backend: {b.messages_stored} stored, {b.messages_accepted} accepted, "
                     f"{b.publishes_rejected} publishes rejected")
        for sid, s in self.snoopers.items():
            lines.append(f"snooper {sid}: {s.keys_observed} keys observed, "
                         f"{s.plaintext_bytes_recovered} plaintext bytes recovered")
        return "\n".join(lines)

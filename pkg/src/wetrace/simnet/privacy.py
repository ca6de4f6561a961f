"""Taint scan over everything that leaves devices: relay state and snooper logs."""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass

# Shorter payloads (the 1-byte status-only form) occur in random bytes by chance
# and carry no signal for a substring scan.
MIN_PAYLOAD_TOKEN = 5
_DECIMAL = re.compile(rb"-?\d+\.\d+(?:e-?\d+)?")


@dataclass(frozen=True)
class TaintFinding:
    haystack: str
    kind: str
    token: bytes


def _windows(data: bytes, size: int) -> set[bytes]:
    return {data[i:i + size] for i in range(len(data) - size + 1)}


def scan(haystacks: dict[str, bytes], tokens: dict[str, list[bytes]], decimals: set[bytes] = frozenset()):
    findings = []
    for name, data in haystacks.items():
        sizes = {len(t) for group in tokens.values() for t in group}
        windows = {size: _windows(data, size) for size in sizes}
        for kind, group in tokens.items():
            for token in group:
                if token in windows[len(token)]:
                    findings.append(TaintFinding(name, kind, token))
        if decimals:
            for match in _DECIMAL.findall(data):
                if match in decimals:
                    findings.append(TaintFinding(name, "coordinate-decimal", match))
    return findings


def sensitive_tokens(result) -> tuple[dict[str, list[bytes]], set[bytes]]:
    seeds = [d.seed.secret for d in result.devices.values()]
    payloads = sorted({p for p in result.plaintexts if len(p) >= MIN_PAYLOAD_TOKEN})
    coords = []
    decimals = set()
    for value in result.coordinates:
        coords += [struct.pack("<d", value), struct.pack(">d", value)]
        decimals.add(repr(value).encode())
    return {"seed": seeds, "payload": payloads, "coordinate": coords}, decimals


def privacy_taint(result) -> list[TaintFinding]:
    """Occurrences of seeds, plaintext payloads or raw coordinates in relay state or snooper logs.

    Relay state is additionally checked for stored peer public keys.
    """
    tokens, decimals = sensitive_tokens(result)
    snoop = {f"snooper:{sid}": s.log_bytes() for sid, s in result.snoopers.items()}
    findings = scan(snoop, tokens, decimals)
    relay_tokens = dict(tokens)
    relay_tokens["peer_key"] = sorted({r.peer_public_key for d in result.devices.values() for r in d.encounters})
    findings += scan({"backend": result.backend.persisted_bytes()}, relay_tokens, decimals)
    return findings

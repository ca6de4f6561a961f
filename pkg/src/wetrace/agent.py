"""Standalone device agent driving report/poll against a live relay.

State lives in a single file (see :meth:`Device.to_bytes`). Nothing here
prints key material or unquantized positions.
"""

from __future__ import annotations

import logging
import os
import tempfile
import time
from pathlib import Path

from .backend import PublishRequest
from .backend.client import RelayClient
from .device import Device, DeviceConfig
from .messages import GEO_SCALE, NotificationMessage, NotificationPayload

log = logging.getLogger(__name__)


def load_state(path: str | Path) -> Device:
    return Device.from_bytes(Path(path).read_bytes())


def save_state(device: Device, path: str | Path) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "wb") as fh:
        fh.write(device.to_bytes())
    os.chmod(tmp, 0o600)
    os.replace(tmp, path)


def init_state(path: str | Path, config: DeviceConfig | None = None, force: bool = False) -> Device:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"state file already exists: {path}")
    device = Device(config=config)
    save_state(device, path)
    return device


def report(path, client: RelayClient, level: int, difficulty: int, token: str | None = None,
           now: float | None = None) -> int:
    """Build, publish and persist a report. The state is only saved once the relay accepted it."""
    now = time.time() if now is None else now
    device = load_state(path)
    messages = device.build_report(level, now)
    if not messages:
        save_state(device, path)
        return 0
    request = PublishRequest.build([m.to_bytes() for m in messages], difficulty, token)
    accepted = client.publish(request)
    save_state(device, path)
    return accepted


def poll(path, client: RelayClient, now: float | None = None) -> tuple[list[NotificationPayload], int]:
    now = time.time() if now is None else now
    device = load_state(path)
    blobs, cursor = client.poll(device.cursor)
    parsed = []
    for blob in blobs:
        try:
            parsed.append(NotificationMessage.from_bytes(blob))
        except ValueError:
            log.debug("skipping malformed relay message")
    result = device.poll_and_decrypt(parsed, now)
    device.cursor = cursor
    save_state(device, path)
    return result.payloads, result.attempts


def describe_payload(payload: NotificationPayload) -> dict:
    doc = {"status": payload.status.name.lower()}
    if payload.timestamp is not None:
        doc["timestamp"] = payload.timestamp
    if payload.latitude_q is not None:
        doc["latitude"] = payload.latitude_q / GEO_SCALE
        doc["longitude"] = payload.longitude_q / GEO_SCALE
    return doc


def show(path) -> dict:
    device = load_state(path)
    return {
        "status": device.status.state.name.lower(),
        "report_spent": device.status.report_spent,
        "encounters": len(device.encounters),
        "cursor": device.cursor,
    }

from __future__ import annotations

import base64
import json
import urllib.error
import urllib.request

from .store import PublishError, PublishRequest


class RelayClient:
    def __init__(self, base_url: str, timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def _call(self, req: urllib.request.Request) -> dict:
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                return json.loads(resp.read())
        except urllib.error.HTTPError as exc:
            try:
                doc = json.loads(exc.read())
            except ValueError:
                raise PublishError(f"HTTP {exc.code}") from None
            raise PublishError(doc.get("error", f"HTTP {exc.code}")) from None

    def publish(self, request: PublishRequest) -> int:
        body = json.dumps({
            "pow_nonce": request.pow_nonce.hex(),
            "messages": [base64.b64encode(m).decode() for m in request.messages],
        }).encode()
        headers = {"Content-Type": "application/json"}
        if request.token:
            headers["Authorization"] = f"Bearer {request.token}"
        req = urllib.request.Request(f"{self.base_url}/v1/messages", data=body, headers=headers, method="POST")
        return int(self._call(req)["accepted"])

    def poll(self, cursor: int) -> tuple[list[bytes], int]:
        req = urllib.request.Request(f"{self.base_url}/v1/messages?cursor={int(cursor)}")
        doc = self._call(req)
        return [base64.b64decode(m) for m in doc["messages"]], int(doc["cursor"])

"""JSON-over-HTTP front end for :class:`BackendStore`.

POST /v1/messages  {"pow_nonce": hex, "messages": [base64]} -> {"accepted": n} | {"error": reason}
GET  /v1/messages?cursor=N                                  -> {"cursor": n, "messages": [base64]}

Hospital-token publishers send ``Authorization: Bearer <token>`` instead of a
proof of work.
"""

from __future__ import annotations

import base64
import binascii
import json
import logging
import threading
import time
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlsplit

from .store import CAP_EXCEEDED, DUPLICATE, INVALID_POW, MAX_BATCH, BackendStore, PublishError, PublishRequest

log = logging.getLogger(__name__)

MAX_BODY = 16 * 1024 * 1024

_STATUS_FOR = {
    INVALID_POW: HTTPStatus.FORBIDDEN,
    CAP_EXCEEDED: HTTPStatus.REQUEST_ENTITY_TOO_LARGE,
    DUPLICATE: HTTPStatus.CONFLICT,
}


def _handler_for(store: BackendStore, clock):
    class Handler(BaseHTTPRequestHandler):
        server_version = "wetrace-relay"
        sys_version = ""

        def log_message(self, fmt, *args):
            # no client addresses in logs
            log.debug("%s %s", self.command, self.path.split("?")[0])

        def _send(self, status: int, doc: dict) -> None:
            body = json.dumps(doc).encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            url = urlsplit(self.path)
            if url.path != "/v1/messages":
                return self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            try:
                cursor = int(parse_qs(url.query).get("cursor", ["0"])[0])
            except ValueError:
                return self._send(HTTPStatus.BAD_REQUEST, {"error": "invalid cursor"})
            blobs, newest = store.poll(cursor)
            self._send(HTTPStatus.OK, {"cursor": newest, "messages": [base64.b64encode(b).decode() for b in blobs]})

        def do_POST(self):
            if urlsplit(self.path).path != "/v1/messages":
                return self._send(HTTPStatus.NOT_FOUND, {"error": "not found"})
            length = int(self.headers.get("Content-Length") or 0)
            if length <= 0 or length > MAX_BODY:
                return self._send(HTTPStatus.BAD_REQUEST, {"error": "invalid body length"})
            try:
                doc = json.loads(self.rfile.read(length))
                nonce = bytes.fromhex(doc["pow_nonce"])
                raw = doc["messages"]
                if not isinstance(raw, list):
                    raise TypeError
                if len(raw) > MAX_BATCH:
                    raise PublishError(CAP_EXCEEDED)
                blobs = tuple(base64.b64decode(m, validate=True) for m in raw)
            except PublishError as exc:
                store.rejected += 1
                return self._send(_STATUS_FOR[exc.reason], {"error": exc.reason})
            except (ValueError, KeyError, TypeError, binascii.Error):
                return self._send(HTTPStatus.BAD_REQUEST, {"error": "malformed request"})
            token = None
            auth = self.headers.get("Authorization", "")
            if auth.startswith("Bearer "):
                token = auth[len("Bearer "):]
            try:
                accepted = store.publish(PublishRequest(blobs, nonce, token), clock())
            except PublishError as exc:
                return self._send(_STATUS_FOR.get(exc.reason, HTTPStatus.BAD_REQUEST), {"error": exc.reason})
            self._send(HTTPStatus.OK, {"accepted": accepted})

    return Handler


class RelayServer:
    """Threaded HTTP server plus a periodic purge timer."""

    def __init__(self, store: BackendStore, host: str = "127.0.0.1", port: int = 8080,
                 purge_interval: float = 60.0, clock=time.time):
        self.store = store
        self.clock = clock
        self.purge_interval = purge_interval
        self.httpd = ThreadingHTTPServer((host, port), _handler_for(store, clock))
        self.httpd.daemon_threads = True
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    def _purge_loop(self) -> None:
        while not self._stop.wait(self.purge_interval):
            removed = self.store.purge(self.clock())
            if removed:
                log.info("purged %d expired messages", removed)

    def start(self) -> "RelayServer":
        for target in (self.httpd.serve_forever, self._purge_loop):
            t = threading.Thread(target=target, daemon=True)
            t.start()
            self._threads.append(t)
        return self

    def serve_forever(self) -> None:
        purger = threading.Thread(target=self._purge_loop, daemon=True)
        purger.start()
        try:
            self.httpd.serve_forever()
        finally:
            self._stop.set()

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

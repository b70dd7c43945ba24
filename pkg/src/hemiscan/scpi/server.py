"""Line-oriented TCP front end for the emulated analyzer.

The server is deliberately single-threaded: one client session is served at
a time, and further connections wait in the listen backlog until the current
one closes. This mirrors a bench instrument that executes one command at a
time.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
from dataclasses import dataclass

from .analyzer import Analyzer
from .parser import MAX_LINE_BYTES, ScpiParseError

DEFAULT_PORT = 5025

log = logging.getLogger(__name__)


class _Session(socketserver.StreamRequestHandler):
    def setup(self) -> None:
        super().setup()
        self.server.active.add(self.connection)  # type: ignore[attr-defined]

    def finish(self) -> None:
        self.server.active.discard(self.connection)  # type: ignore[attr-defined]
        try:
            super().finish()
        except OSError:
            pass

    def handle(self) -> None:
        analyzer: Analyzer = self.server.analyzer  # type: ignore[attr-defined]
        lock: threading.Lock = self.server.lock  # type: ignore[attr-defined]
        while True:
            try:
                raw = self.rfile.readline(MAX_LINE_BYTES + 2)
            except OSError:
                return
            if not raw:
                return
            if not raw.endswith(b"\n"):
                if len(raw) <= MAX_LINE_BYTES:
                    return  # peer closed mid-line; drop the fragment
                # oversize: discard the rest of the line
                while raw and not raw.endswith(b"\n"):
                    raw = self.rfile.readline(MAX_LINE_BYTES)
                resp = ScpiParseError(-223, "Too much data").response()
            else:
                with lock:
                    resp = analyzer.execute(raw)
            if resp is not None:
                try:
                    self.wfile.write(resp.encode("ascii") + b"\n")
                    self.wfile.flush()
                except OSError:
                    return


class _Server(socketserver.TCPServer):
    allow_reuse_address = True
    request_queue_size = 8


@dataclass
class ServerHandle:
    server: _Server
    thread: threading.Thread

    @property
    def address(self) -> tuple[str, int]:
        host, port = self.server.server_address[:2]
        return host, port

    def shutdown(self) -> None:
        # a connected client would otherwise keep the single handler blocked
        for conn in list(self.server.active):  # type: ignore[attr-defined]
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
        self.server.shutdown()
        self.server.server_close()
        self.thread.join(timeout=5)

    def __enter__(self) -> "ServerHandle":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


def serve(host: str = "127.0.0.1", port: int = DEFAULT_PORT, analyzer: Analyzer | None = None) -> ServerHandle:
    """Start the emulator in a background thread. Port 0 picks a free port."""
    try:
        srv = _Server((host, port), _Session)
    except OSError as exc:
        raise RuntimeError(f"cannot bind SCPI server to {host}:{port}: {exc}") from exc
    srv.analyzer = analyzer or Analyzer()  # type: ignore[attr-defined]
    srv.lock = threading.Lock()  # type: ignore[attr-defined]
    srv.active = set()  # type: ignore[attr-defined]
    t = threading.Thread(target=srv.serve_forever, name="scpi-server", daemon=True)
    t.start()
    log.info("SCPI emulator listening on %s:%d", *srv.server_address[:2])
    return ServerHandle(srv, t)

"""Instrument client used by the acquisition loop.

Both connection kinds expose the same two calls: ``send`` (write one line)
and ``readline`` (next response line). Setters are silent, so errors they
raise surface as queued lines; ``sync`` drains them with ``*OPC?``.
"""

from __future__ import annotations

import math
import re
import socket
from collections import deque
from typing import Protocol

from ..rf import sweeps_for_dwell
from ..se3 import SphericalCoord
from .analyzer import Analyzer, nearest_bin

_ERROR_LINE = re.compile(r'^-\d+,"')


class TransportError(Exception):
    """Timeout, short read, closed socket or unparsable response. Retryable."""


class InstrumentError(TransportError):
    """The instrument answered with an error-queue entry."""


class Connection(Protocol):
    def send(self, line: str) -> None: ...

    def readline(self) -> str: ...

    def close(self) -> None: ...


class EmbeddedConnection:
    """In-process connection straight to an :class:`Analyzer`."""

    def __init__(self, analyzer: Analyzer):
        self.analyzer = analyzer
        self._pending: deque[str] = deque()
        self.closed = False

    def send(self, line: str) -> None:
        if self.closed:
            raise TransportError("connection closed")
        resp = self.analyzer.execute(line)
        if resp is not None:
            self._pending.append(resp)

    def readline(self) -> str:
        if not self._pending:
            raise TransportError("no response pending")
        return self._pending.popleft()

    def close(self) -> None:
        self.closed = True


class TcpConnection:
    def __init__(self, host: str, port: int, timeout: float = 5.0):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {host}:{port}: {exc}") from exc
        self._rfile = self.sock.makefile("rb")

    def send(self, line: str) -> None:
        try:
            self.sock.sendall(line.encode("ascii") + b"\n")
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def readline(self) -> str:
        try:
            raw = self._rfile.readline(1 << 20)
        except OSError as exc:
            raise TransportError(f"read failed: {exc}") from exc
        if not raw:
            raise TransportError("connection closed by instrument")
        if not raw.endswith(b"\n"):
            raise TransportError("short read")
        return raw[:-1].decode("ascii", "replace")

    def close(self) -> None:
        try:
            self._rfile.close()
            self.sock.close()
        except OSError:
            pass

    def __enter__(self) -> "TcpConnection":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def query(conn: Connection, line: str) -> str:
    conn.send(line)
    resp = conn.readline()
    if _ERROR_LINE.match(resp):
        raise InstrumentError(f"{line!r} -> {resp}")
    return resp


def sync(conn: Connection) -> None:
    """Wait for all previous commands; raise on any queued error line."""
    conn.send("*OPC?")
    errors = []
    while True:
        resp = conn.readline()
        if resp == "1":
            break
        errors.append(resp)
    if errors:
        raise InstrumentError("; ".join(errors))


def configure(conn: Connection, fc: float, span: float = 10e6, rbw: float = 100e3, vbw: float = 100e3) -> None:
    """One-time analyzer setup: center, span, RBW/VBW and MAX-HOLD detection."""
    conn.send("*RST")
    conn.send(f":FREQuency:CENTer {fc!r}")
    conn.send(f":FREQuency:SPAN {span!r}")
    conn.send(f":BANDwidth:RESolution {rbw!r}")
    conn.send(f":BANDwidth:VIDeo {vbw!r}")
    conn.send(":DETector MAXHold")
    sync(conn)


def _parse_number(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise TransportError(f"unparsable numeric response {text!r}") from None


def _parse_trace(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise TransportError("unparsable trace response") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise TransportError("unparsable trace response")
    return vals


def client_measure(
    conn: Connection,
    pose: SphericalCoord,
    fc: float,
    dwell: float,
    clock,
    sweep_rate: float = 10.0,
) -> float:
    """Point the emulator at ``pose``, clear the hold, trigger, dwell, fetch, read the bin nearest ``fc``.

    Triggers are issued first and the dwell elapses while MAX-HOLD
    accumulates, so the number of sweeps is ceil(dwell * sweep_rate).
    """
    conn.send(f":SYSTem:POSE {pose.phi_deg!r},{pose.theta_deg!r},{pose.r!r}")
    conn.send(":DETector MAXHold")
    for _ in range(sweeps_for_dwell(dwell, sweep_rate)):
        conn.send(":INITiate:IMMediate")
    clock.sleep(dwell)
    sync(conn)
    center = _parse_number(query(conn, ":FREQuency:CENTer?"))
    span = _parse_number(query(conn, ":FREQuency:SPAN?"))
    trace = _parse_trace(query(conn, ":TRACe:DATA? TRACE1"))
    return trace[nearest_bin(center, span, len(trace), fc)]

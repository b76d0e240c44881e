"""Transport and clock abstractions shared by live and simulated runs.

Everything that touches the network goes through a Transport so the same
monitor code runs against real portals/trackers/peers and against the
simulated world.
"""

from __future__ import annotations

import socket
import time
from typing import Protocol


class TransportError(Exception):
    """Fetch or connect failed (timeout, refusal, HTTP error, ...)."""


class ConnectionRefused(TransportError):
    pass


class PeerConnection(Protocol):
    def send(self, data: bytes) -> None: ...
    def recv(self, n: int) -> bytes: ...
    def close(self) -> None: ...


class Transport(Protocol):
    def fetch(self, url: str) -> bytes: ...
    def connect(self, ip: str, port: int, timeout_s: float) -> PeerConnection: ...


class Clock(Protocol):
    def now(self) -> float: ...
    def sleep_until(self, t: float) -> None: ...


class WallClock:
    def now(self) -> float:
        return time.time()

    def sleep_until(self, t: float) -> None:
        delay = t - time.time()
        if delay > 0:
            time.sleep(delay)


class VirtualClock:
    """Manually advanced clock; sleep_until just moves time forward."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)

    def now(self) -> float:
        return self._now

    def sleep_until(self, t: float) -> None:
        if t > self._now:
            self._now = t

    def copy(self) -> "VirtualClock":
        return VirtualClock(self._now)


class SocketPeerConnection:
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def send(self, data: bytes) -> None:
        self._sock.sendall(data)

    def recv(self, n: int) -> bytes:
        return self._sock.recv(n)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class HttpTransport:
    """Live transport: HTTP(S) fetches plus raw TCP peer connections."""

    def __init__(self, timeout_s: float = 30.0, user_agent: str = "swarmwatch/0.1"):
        self.timeout_s = timeout_s
        self.user_agent = user_agent
        self._session = None

    def _http(self):
        if self._session is None:
            import requests

            self._session = requests.Session()
            self._session.headers["User-Agent"] = self.user_agent
        return self._session

    def fetch(self, url: str) -> bytes:
        import requests

        try:
            response = self._http().get(url, timeout=self.timeout_s)
            response.raise_for_status()
        except requests.RequestException as exc:
            raise TransportError(f"GET {url} failed: {exc}") from exc
        return response.content

    def connect(self, ip: str, port: int, timeout_s: float) -> SocketPeerConnection:
        try:
            sock = socket.create_connection((ip, port), timeout=timeout_s)
        except ConnectionRefusedError as exc:
            raise ConnectionRefused(f"{ip}:{port} refused") from exc
        except OSError as exc:
            raise TransportError(f"connect {ip}:{port} failed: {exc}") from exc
        sock.settimeout(timeout_s)
        return SocketPeerConnection(sock)

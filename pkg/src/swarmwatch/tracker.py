"""Tracker announce requests, response parsing, and per-tracker rate limiting."""

from __future__ import annotations

import struct
import threading
from dataclasses import dataclass, field
from urllib.parse import quote_from_bytes

from . import bencode

DEFAULT_NUMWANT = 200
DEFAULT_MIN_INTERVAL_S = 600.0  # trackers tolerate roughly one query per 10-15 min


class TrackerError(Exception):
    """Tracker answered with a failure reason."""


class TrackerParseError(ValueError):
    """Announce response bytes did not parse."""


@dataclass
class AnnounceRequest:
    infohash: bytes
    peer_id: bytes
    port: int
    tracker_url: str
    numwant: int = DEFAULT_NUMWANT
    event: str | None = None  # "started" | "stopped" | None

    def __post_init__(self) -> None:
        if len(self.infohash) != 20 or len(self.peer_id) != 20:
            raise ValueError("infohash and peer_id must be exactly 20 bytes")
        if self.numwant < 1:
            raise ValueError("numwant must be >= 1")


@dataclass
class AnnounceResult:
    seeders: int
    leechers: int
    interval_s: int
    peers: list[tuple[str, int]]
    received_at: float = 0.0
    vantage_id: str = ""


def build_announce(
    meta,
    peer_id: bytes,
    *,
    port: int = 6881,
    numwant: int = DEFAULT_NUMWANT,
    event: str | None = None,
) -> tuple[AnnounceRequest, str]:
    """Build the announce request and the GET URL that carries it.

    The monitor never trades pieces, so uploaded/downloaded/left are zero
    and no start/stop events are sent unless asked for; the query asks for
    compact peers and the full numwant (default 200).
    """
    request = AnnounceRequest(
        infohash=meta.infohash,
        peer_id=peer_id,
        port=port,
        tracker_url=meta.announce_url,
        numwant=numwant,
        event=event,
    )
    params = [
        ("info_hash", quote_from_bytes(request.infohash, safe="")),
        ("peer_id", quote_from_bytes(request.peer_id, safe="")),
        ("port", str(request.port)),
        ("uploaded", "0"),
        ("downloaded", "0"),
        ("left", "0"),
        ("compact", "1"),
        ("numwant", str(request.numwant)),
    ]
    if event:
        params.append(("event", event))
    query = "&".join(f"{k}={v}" for k, v in params)
    sep = "&" if "?" in meta.announce_url else "?"
    return request, f"{meta.announce_url}{sep}{query}"


def parse_announce_response(
    data: bytes, *, received_at: float = 0.0, vantage_id: str = ""
) -> AnnounceResult:
    """Parse a bencoded announce response.

    Compact peers are consecutive 6-byte entries (4 IP bytes then a
    big-endian port); dictionary-form peer lists are also accepted.
    """
    try:
        doc = bencode.decode(data)
    except bencode.BencodeError as exc:
        raise TrackerParseError(f"announce response is not bencode: {exc}") from exc
    if not isinstance(doc, dict):
        raise TrackerParseError("announce response is not a dictionary")
    if b"failure reason" in doc:
        reason = doc[b"failure reason"]
        raise TrackerError(reason.decode("utf-8", "replace") if isinstance(reason, bytes) else str(reason))

    seeders = doc.get(b"complete", 0)
    leechers = doc.get(b"incomplete", 0)
    interval = doc.get(b"interval", 1800)
    if not all(isinstance(v, int) for v in (seeders, leechers, interval)):
        raise TrackerParseError("counts or interval are not integers")
    if seeders < 0 or leechers < 0 or interval <= 0:
        raise TrackerParseError("negative count or non-positive interval")

    raw_peers = doc.get(b"peers", b"")
    peers: list[tuple[str, int]] = []
    if isinstance(raw_peers, bytes):
        if len(raw_peers) % 6 != 0:
            raise TrackerParseError(f"compact peers length {len(raw_peers)} not a multiple of 6")
        for off in range(0, len(raw_peers), 6):
            ip = ".".join(str(b) for b in raw_peers[off:off + 4])
            (port,) = struct.unpack(">H", raw_peers[off + 4:off + 6])
            peers.append((ip, port))
    elif isinstance(raw_peers, list):
        for entry in raw_peers:
            if not isinstance(entry, dict) or b"ip" not in entry or b"port" not in entry:
                raise TrackerParseError("malformed dictionary-form peer entry")
            ip = entry[b"ip"]
            peers.append((ip.decode("ascii", "replace") if isinstance(ip, bytes) else str(ip), entry[b"port"]))
    else:
        raise TrackerParseError("peers field has unsupported type")
    for _, port in peers:
        if not 1 <= port <= 65535:
            raise TrackerParseError(f"peer port {port} out of range")
    return AnnounceResult(seeders, leechers, interval, peers, received_at, vantage_id)


def serialize_announce_response(result: AnnounceResult) -> bytes:
    """Inverse of parse_announce_response for the compact form; used by the
    simulated tracker and round-trip tests."""
    blob = bytearray()
    for ip, port in result.peers:
        blob += bytes(int(p) for p in ip.split("."))
        blob += struct.pack(">H", port)
    return bencode.encode(
        {
            b"complete": result.seeders,
            b"incomplete": result.leechers,
            b"interval": result.interval_s,
            b"peers": bytes(blob),
        }
    )


@dataclass
class Decision:
    proceed: bool
    wait_until: float | None = None


@dataclass
class RateLimiter:
    """Per-key announce throttle shared by all swarm workers.

    Keys combine tracker URL, vantage identity, and the swarm being polled,
    so each vantage sticks to one query per min_interval per swarm, which is
    the cadence trackers tolerate. Thread-safe.
    """

    min_interval_s: float = DEFAULT_MIN_INTERVAL_S
    per_tracker_interval_s: dict[str, float] = field(default_factory=dict)
    _last: dict[tuple, float] = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def acquire(
        self,
        tracker_url: str,
        now: float,
        vantage_id: str = "",
        infohash: bytes | None = None,
    ) -> Decision:
        key = (tracker_url, vantage_id, infohash)
        interval = self.per_tracker_interval_s.get(tracker_url, self.min_interval_s)
        with self._lock:
            last = self._last.get(key)
            if last is not None and now - last < interval:
                return Decision(False, wait_until=last + interval)
            self._last[key] = now
            return Decision(True)

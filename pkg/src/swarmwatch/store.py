"""Append-only JSON-lines event log, dataset export, and the publisher
query surface.

The log is the single source of truth: every analytic is a pure function
of the event stream, so a log can be shipped, re-imported, and replayed
bit-identically. One event per line, UTF-8, self-describing
(kind + schema_version).
"""

from __future__ import annotations

import csv
import json
import os
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

SCHEMA_VERSION = 1

KIND_FEED_ITEM = "feed_item"
KIND_IDENTIFICATION = "identification"
KIND_SNAPSHOT = "snapshot"
KIND_PROBE = "probe"
KIND_PORTAL_REMOVAL = "portal_removal"
KIND_TERMINAL = "terminal_status"
KNOWN_KINDS = frozenset(
    {KIND_FEED_ITEM, KIND_IDENTIFICATION, KIND_SNAPSHOT, KIND_PROBE, KIND_PORTAL_REMOVAL, KIND_TERMINAL}
)

EXPORT_FORMATS = ("jsonl", "csv")
EXPORT_CSV_COLUMNS = ("ts", "kind", "schema_version", "payload")


class StoreError(Exception):
    pass


class NotFound(StoreError):
    pass


@dataclass
class EventRecord:
    ts: float
    kind: str
    payload: dict
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {"ts": self.ts, "kind": self.kind, "v": self.schema_version, "payload": self.payload},
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        raw = json.loads(line)
        return cls(ts=raw["ts"], kind=raw["kind"], payload=raw["payload"], schema_version=raw.get("v", 1))


def validate_event(event: EventRecord) -> None:
    if event.kind not in KNOWN_KINDS:
        raise StoreError(f"unknown event kind {event.kind!r}")
    if not isinstance(event.payload, dict):
        raise StoreError("event payload must be a dict")
    if not isinstance(event.ts, (int, float)):
        raise StoreError("event ts must be numeric")
    try:
        json.dumps(event.payload)
    except (TypeError, ValueError) as exc:
        raise StoreError(f"payload not JSON-serializable: {exc}") from exc


class EventLog:
    """Single-writer append-only log. `sync=True` fsyncs every append,
    which is what a live crawl wants; simulation runs flush on close."""

    def __init__(self, path: str | Path, sync: bool = False):
        self.path = Path(path)
        self.sync = sync
        self._fh = open(self.path, "a", encoding="utf-8")
        self._lock = threading.Lock()
        self._position = sum(1 for _ in read_events(self.path)) if self.path.stat().st_size else 0

    def append(self, event: EventRecord) -> int:
        validate_event(event)
        line = event.to_json()
        with self._lock:
            self._fh.write(line + "\n")
            if self.sync:
                self._fh.flush()
                os.fsync(self._fh.fileno())
            position = self._position
            self._position += 1
        return position

    def close(self) -> None:
        with self._lock:
            self._fh.flush()
            self._fh.close()

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_events(path: str | Path) -> Iterator[EventRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield EventRecord.from_json(line)


def load_events(path: str | Path) -> list[EventRecord]:
    return list(read_events(path))


def export(
    events: Iterable[EventRecord],
    out_path: str | Path,
    fmt: str = "jsonl",
    kinds: set[str] | None = None,
) -> int:
    """Write events to a dataset file; deterministic for a given log.

    jsonl keeps the native line format. csv flattens each event to the
    stable columns ts,kind,schema_version,payload with the payload as a
    JSON string.
    """
    if fmt not in EXPORT_FORMATS:
        raise StoreError(f"unknown export format {fmt!r}")
    rows = 0
    if fmt == "jsonl":
        with open(out_path, "w", encoding="utf-8") as fh:
            for event in events:
                if kinds and event.kind not in kinds:
                    continue
                fh.write(event.to_json() + "\n")
                rows += 1
    else:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(EXPORT_CSV_COLUMNS)
            for event in events:
                if kinds and event.kind not in kinds:
                    continue
                writer.writerow(
                    [
                        repr(event.ts),
                        event.kind,
                        event.schema_version,
                        json.dumps(event.payload, sort_keys=True, separators=(",", ":")),
                    ]
                )
                rows += 1
    return rows


def import_events(path: str | Path, fmt: str = "jsonl") -> list[EventRecord]:
    if fmt not in EXPORT_FORMATS:
        raise StoreError(f"unknown export format {fmt!r}")
    if fmt == "jsonl":
        return load_events(path)
    events = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != list(EXPORT_CSV_COLUMNS):
            raise StoreError(f"unexpected CSV header {header}")
        for ts, kind, version, payload in reader:
            events.append(EventRecord(float(ts), kind, json.loads(payload), int(version)))
    return events


# --- event constructors used by the pipeline ---


def feed_item_event(ts: float, item) -> EventRecord:
    return EventRecord(
        ts,
        KIND_FEED_ITEM,
        {
            "portal_id": item.portal_id,
            "title": item.title,
            "category": item.category,
            "subcategory": item.subcategory,
            "username": item.username,
            "content_size": item.content_size,
            "torrent_url": item.torrent_url,
            "published_at": item.published_at,
            "description": item.description,
        },
    )


def identification_event(ts: float, ident, meta, item, first_result) -> EventRecord:
    return EventRecord(
        ts,
        KIND_IDENTIFICATION,
        {
            "infohash": meta.infohash.hex(),
            "username": ident.username,
            "ip": ident.ip,
            "method": ident.method,
            "reason": ident.reason,
            "torrent_url": item.torrent_url,
            "announce_url": meta.announce_url,
            "name": meta.name.decode("utf-8", "replace"),
            "piece_count": meta.piece_count,
            "total_size": meta.total_size,
            "file_names": list(meta.file_names),
            "first_announce_at": first_result.received_at,
            "seeders": first_result.seeders,
            "leechers": first_result.leechers,
            "peer_count": len(first_result.peers),
        },
    )


def snapshot_event(snap) -> EventRecord:
    return EventRecord(
        snap.observed_at,
        KIND_SNAPSHOT,
        {
            "infohash": snap.infohash.hex(),
            "observed_at": snap.observed_at,
            "vantage_id": snap.vantage_id,
            "seeders": snap.seeders,
            "leechers": snap.leechers,
            "peers": [[ip, port] for ip, port in snap.peers],
            "empty": snap.empty,
        },
    )


def probe_event(infohash: bytes, result) -> EventRecord:
    return EventRecord(
        result.probed_at,
        KIND_PROBE,
        {
            "infohash": infohash.hex(),
            "ip": result.endpoint[0],
            "port": result.endpoint[1],
            "outcome": result.outcome,
            "pieces_have": result.pieces_have,
            "probed_at": result.probed_at,
        },
    )


def portal_removal_event(ts: float, portal_id: str, username: str) -> EventRecord:
    return EventRecord(
        ts, KIND_PORTAL_REMOVAL, {"portal_id": portal_id, "username": username, "removed_at": ts}
    )


def terminal_event(status) -> EventRecord:
    return EventRecord(
        status.finished_at,
        KIND_TERMINAL,
        {
            "infohash": status.infohash.hex(),
            "status": status.status,
            "reason": status.reason,
            "snapshot_count": status.snapshot_count,
            "duration_s": status.duration_s,
            "finished_at": status.finished_at,
        },
    )


def fetch_failed_event(ts: float, item, reason: str) -> EventRecord:
    return EventRecord(
        ts,
        KIND_TERMINAL,
        {
            "infohash": None,
            "torrent_url": item.torrent_url,
            "status": "fetch_failed",
            "reason": reason,
            "snapshot_count": 0,
            "duration_s": 0.0,
            "finished_at": ts,
        },
    )


# --- publisher query surface ---


@dataclass
class PublisherProfile:
    username: str
    torrents: list[dict] = field(default_factory=list)
    addresses: list[dict] = field(default_factory=list)
    fake: bool = False
    top: bool = False
    removed_by_portal: bool = False
    promoted_urls: list[str] = field(default_factory=list)
    business_class: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def query_publisher(
    events: list[EventRecord],
    username: str,
    geo=None,
    classes: dict[str, str] | None = None,
) -> PublisherProfile:
    """Assemble a publisher's profile purely from the event log."""
    from . import analytics  # analytics sits above the store; lazy to avoid a cycle

    records = analytics.resolve_identities(events)
    analytics.flag_fake(records)
    analytics.rank_top(records)
    record = records.get(username)
    if record is None:
        raise NotFound(f"unknown username {username!r}")
    if classes and username in classes:
        record.business_class = classes[username]
    addresses = []
    for ip in sorted(record.ips):
        entry = {"ip": ip, "isp": "", "isp_type": "", "city": "", "country": ""}
        if geo is not None:
            info = geo.lookup(ip)
            entry.update(
                {"isp": info.isp_name, "isp_type": info.isp_type, "city": info.city, "country": info.country}
            )
        addresses.append(entry)
    return PublisherProfile(
        username=username,
        torrents=[
            {
                "filename": t.title,
                "category": t.category,
                "subcategory": t.subcategory,
                "infohash": t.infohash,
                "published_at": t.published_at,
                "size": t.size,
            }
            for t in sorted(record.torrents, key=lambda t: (t.published_at, t.infohash))
        ],
        addresses=addresses,
        fake=record.fake,
        top=record.top,
        removed_by_portal=record.removed_by_portal,
        promoted_urls=sorted(record.promoted_urls),
        business_class=record.business_class,
    )

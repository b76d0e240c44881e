"""Portal RSS polling: detect newly published torrents and fetch them.

Portals differ in which item-level elements carry the username, category,
and size, so a per-portal profile maps element names. Deduplication is by
(portal_id, torrent_url) and survives restarts via a persisted state file.
"""

from __future__ import annotations

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from email.utils import parsedate_to_datetime
from pathlib import Path

from . import bencode
from .transport import Transport, TransportError

log = logging.getLogger(__name__)


class FeedError(Exception):
    pass


class FetchFailed(Exception):
    """Torrent file could not be retrieved/parsed after the retry budget."""


@dataclass
class PortalProfile:
    portal_id: str
    feed_url: str
    username_element: str = "username"
    category_element: str = "category"
    subcategory_element: str = "subcategory"
    size_element: str = "size"
    poll_interval_s: float = 60.0
    first_query_delay_s: float = 0.0

    @classmethod
    def load(cls, path: str | Path) -> "PortalProfile":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise FeedError(f"unknown portal profile keys: {sorted(unknown)}")
        missing = {"portal_id", "feed_url"} - set(raw)
        if missing:
            raise FeedError(f"portal profile missing keys: {sorted(missing)}")
        return cls(**raw)


@dataclass
class FeedItem:
    portal_id: str
    title: str
    category: str
    subcategory: str
    username: str
    content_size: int
    torrent_url: str
    published_at: float
    description: str = ""

    @property
    def identity(self) -> tuple[str, str]:
        return (self.portal_id, self.torrent_url)


@dataclass
class IngestState:
    seen: set[tuple[str, str]] = field(default_factory=set)
    last_poll_at: float = 0.0
    last_error: str | None = None

    def save(self, path: str | Path) -> None:
        payload = {
            "seen": sorted(list(identity) for identity in self.seen),
            "last_poll_at": self.last_poll_at,
        }
        Path(path).write_text(json.dumps(payload))

    @classmethod
    def load(cls, path: str | Path) -> "IngestState":
        raw = json.loads(Path(path).read_text())
        return cls(
            seen={(p, u) for p, u in raw.get("seen", [])},
            last_poll_at=raw.get("last_poll_at", 0.0),
        )


def _text(item: ET.Element, name: str) -> str | None:
    # Portals sometimes namespace their extension elements; match local names.
    for child in item.iter():
        tag = child.tag.rsplit("}", 1)[-1]
        if tag == name and child.text is not None:
            return child.text.strip()
    return None


def _torrent_url(item: ET.Element) -> str | None:
    for child in item.iter():
        if child.tag.rsplit("}", 1)[-1] == "enclosure" and child.get("url"):
            return child.get("url")
    return _text(item, "link")


def parse_feed(xml: bytes, profile: PortalProfile) -> list[FeedItem]:
    """One FeedItem per <item>; items missing mandatory fields are skipped
    with a warning rather than failing the whole poll."""
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise FeedError(f"malformed feed XML: {exc}") from exc
    items: list[FeedItem] = []
    for item in root.iter("item"):
        title = _text(item, "title")
        url = _torrent_url(item)
        username = _text(item, profile.username_element)
        pub = _text(item, "pubDate")
        missing = [
            name
            for name, value in (
                ("title", title),
                ("torrent url", url),
                (profile.username_element, username),
                ("pubDate", pub),
            )
            if not value
        ]
        if missing:
            log.warning("portal %s: skipping item missing %s", profile.portal_id, ", ".join(missing))
            continue
        try:
            published_at = parsedate_to_datetime(pub).timestamp()
        except (TypeError, ValueError):
            log.warning("portal %s: skipping item with bad pubDate %r", profile.portal_id, pub)
            continue
        size_text = _text(item, profile.size_element)
        try:
            content_size = int(size_text) if size_text else 0
        except ValueError:
            content_size = 0
        items.append(
            FeedItem(
                portal_id=profile.portal_id,
                title=title,
                category=_text(item, profile.category_element) or "",
                subcategory=_text(item, profile.subcategory_element) or "",
                username=username,
                content_size=content_size,
                torrent_url=url,
                published_at=published_at,
                description=_text(item, "description") or "",
            )
        )
    return items


def poll(transport: Transport, profile: PortalProfile, state: IngestState, now: float = 0.0) -> list[FeedItem]:
    """Fetch the feed and return only items never seen before.

    On transport failure the state is left untouched and an empty list is
    returned; the caller retries on its own schedule.
    """
    try:
        xml = transport.fetch(profile.feed_url)
    except TransportError as exc:
        state.last_error = str(exc)
        log.warning("portal %s: poll failed: %s", profile.portal_id, exc)
        return []
    fresh = [item for item in parse_feed(xml, profile) if item.identity not in state.seen]
    for item in fresh:
        state.seen.add(item.identity)
    state.last_poll_at = now
    state.last_error = None
    return fresh


def fetch_torrent(transport: Transport, item: FeedItem, retries: int = 3) -> bencode.TorrentMeta:
    """Download and parse the .torrent behind a feed item.

    Transport failures are retried up to `retries` attempts; a parse
    failure is terminal immediately (the bytes will not improve).
    """
    last_exc: Exception | None = None
    for _ in range(max(1, retries)):
        try:
            data = transport.fetch(item.torrent_url)
        except TransportError as exc:
            last_exc = exc
            continue
        try:
            return bencode.parse_metainfo(data)
        except bencode.MetainfoError as exc:
            raise FetchFailed(f"{item.torrent_url}: {exc}") from exc
    raise FetchFailed(f"{item.torrent_url}: {last_exc}") from last_exc

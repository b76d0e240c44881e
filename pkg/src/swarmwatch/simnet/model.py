"""Ground-truth data model for simulated worlds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class GtStint:
    """One presence interval of one endpoint in one swarm."""

    ip: str
    port: int
    start: float
    end: float
    kind: str  # "publisher" | "extra_seed" | "leecher"
    nat: bool = False
    completes_at: float | None = None  # leecher holding all pieces from here on

    def active_at(self, t: float) -> bool:
        return self.start <= t < self.end

    def is_seed_at(self, t: float) -> bool:
        if self.kind in ("publisher", "extra_seed"):
            return True
        return self.completes_at is not None and t >= self.completes_at


@dataclass
class GtSession:
    start: float
    end: float


@dataclass
class GtTorrent:
    infohash: str  # hex
    title: str
    file_name: str
    category: str
    subcategory: str
    size: int
    piece_length: int
    piece_count: int
    username: str
    publisher_ip: str
    publisher_port: int
    publisher_nat: bool
    birth: float
    published_at: float  # RSS pubDate (original publication)
    feed_entry_at: float  # when our portal's feed first lists it
    prepublished: bool
    extra_seed: bool
    death: float
    torrent_url: str
    announce_url: str
    description: str
    file_names: list[str]
    sessions: list[GtSession] = field(default_factory=list)
    stints: list[GtStint] = field(default_factory=list)

    def downloader_ips(self) -> set[str]:
        return {s.ip for s in self.stints}


@dataclass
class GtPublisher:
    username: str
    tier: str  # "top" | "regular" | "fake"
    ips: list[str] = field(default_factory=list)
    nat: bool = False
    business_class: str | None = None
    promoted_domains: list[str] = field(default_factory=list)
    promo_channels: list[str] = field(default_factory=list)
    isp_kind: str | None = None  # "hosting" | "commercial" for honest publishers
    torrents: list[str] = field(default_factory=list)  # infohash hex

    @property
    def fake(self) -> bool:
        return self.tier == "fake"


@dataclass
class GroundTruth:
    epoch: float
    horizon: float
    config_dict: dict
    publishers: dict[str, GtPublisher] = field(default_factory=dict)
    torrents: dict[str, GtTorrent] = field(default_factory=dict)
    removals: dict[str, float] = field(default_factory=dict)

    def sessions_for(self, username: str, infohash: str) -> list[GtSession]:
        return self.torrents[infohash].sessions

    def to_jsonl(self) -> str:
        """Stable serialization used both as the oracle export and as the
        byte-identity witness for determinism checks."""
        dump = lambda obj: json.dumps(obj, sort_keys=True, separators=(",", ":"))
        lines = [
            dump(
                {
                    "kind": "world_meta",
                    "epoch": self.epoch,
                    "horizon": self.horizon,
                    "config": self.config_dict,
                }
            )
        ]
        for username in sorted(self.publishers):
            p = self.publishers[username]
            lines.append(
                dump(
                    {
                        "kind": "publisher",
                        "username": p.username,
                        "tier": p.tier,
                        "fake": p.fake,
                        "ips": sorted(p.ips),
                        "nat": p.nat,
                        "business_class": p.business_class,
                        "promoted_domains": sorted(p.promoted_domains),
                        "promo_channels": sorted(p.promo_channels),
                        "isp_kind": p.isp_kind,
                        "torrents": sorted(p.torrents),
                    }
                )
            )
        for infohash in sorted(self.torrents):
            t = self.torrents[infohash]
            lines.append(
                dump(
                    {
                        "kind": "torrent",
                        "infohash": t.infohash,
                        "title": t.title,
                        "category": t.category,
                        "subcategory": t.subcategory,
                        "size": t.size,
                        "piece_count": t.piece_count,
                        "username": t.username,
                        "publisher_ip": t.publisher_ip,
                        "publisher_nat": t.publisher_nat,
                        "birth": t.birth,
                        "published_at": t.published_at,
                        "feed_entry_at": t.feed_entry_at,
                        "prepublished": t.prepublished,
                        "extra_seed": t.extra_seed,
                        "death": t.death,
                        "torrent_url": t.torrent_url,
                    }
                )
            )
            lines.append(
                dump(
                    {
                        "kind": "sessions",
                        "infohash": t.infohash,
                        "username": t.username,
                        "ip": t.publisher_ip,
                        "intervals": [[s.start, s.end] for s in t.sessions],
                    }
                )
            )
            lines.append(
                dump(
                    {
                        "kind": "downloaders",
                        "infohash": t.infohash,
                        "ips": sorted(t.downloader_ips()),
                    }
                )
            )
        for username in sorted(self.removals):
            lines.append(
                dump({"kind": "removal", "username": username, "removed_at": self.removals[username]})
            )
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_jsonl())

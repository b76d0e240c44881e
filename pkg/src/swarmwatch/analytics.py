"""Publisher identity resolution and the statistics derived from the event
log: contribution skew, fake detection, top groups, ISP/geo breakdowns,
popularity, seeding behavior, promoted URLs, and longitudinal metrics.

Everything here is a pure function of a list of EventRecords (plus the
GeoIP fixture), so results are reproducible from an exported log.
"""

from __future__ import annotations

import math
import re
import statistics
from dataclasses import dataclass, field

from . import geoip, store
from .sessions import SessionRecord, reconstruct_sessions

FAKE_USERNAME_THRESHOLD = 5
TOP_K = 100

GROUP_ALL = "All"
GROUP_FAKE = "Fake"
GROUP_TOP = "Top"
GROUP_TOP_HP = "Top-HP"
GROUP_TOP_CI = "Top-CI"

CASE_SINGLE_IP = "single_ip"
CASE_FEW_HOSTING = "few_hosting"
CASE_SINGLE_COMMERCIAL = "single_commercial_isp"
CASE_MULTI_COMMERCIAL = "multi_commercial_isp"

URL_CHANNEL_FILENAME = "filename"
URL_CHANNEL_TEXTBOX = "textbox"
URL_CHANNEL_BUNDLED = "bundled_file"

# Final labels we treat as public-suffix-like when mining promoted domains.
_DOMAIN_SUFFIXES = frozenset(
    "com net org info biz tv io me co us uk de fr es it nl se ru pl cc eu to ws name mobi site online".split()
)
_TOKEN_RE = re.compile(r"[a-z0-9.]+")


@dataclass
class TorrentRef:
    infohash: str  # hex
    title: str
    category: str
    subcategory: str
    size: int
    published_at: float
    torrent_url: str
    description: str = ""
    file_names: list[str] = field(default_factory=list)


@dataclass
class PublisherRecord:
    username: str
    ips: set[str] = field(default_factory=set)
    torrents: list[TorrentRef] = field(default_factory=list)
    downloader_counts: dict[str, int] = field(default_factory=dict)
    fake: bool = False
    top: bool = False
    removed_by_portal: bool = False
    isp_class: str = geoip.UNKNOWN
    multi_ip_case: str = ""
    business_class: str | None = None
    promoted_urls: set[str] = field(default_factory=set)

    @property
    def torrent_count(self) -> int:
        return len(self.torrents)

    @property
    def downloads_attracted(self) -> int:
        # Unique IPs per torrent, then summed; a downloader active in two
        # torrents counts once in each.
        return sum(self.downloader_counts.get(t.infohash, 0) for t in self.torrents)

    def mean_downloaders_per_torrent(self) -> float:
        if not self.torrents:
            return 0.0
        return self.downloads_attracted / len(self.torrents)


def resolve_identities(
    events: list[store.EventRecord],
    vantage_ips: frozenset[str] = frozenset(),
) -> dict[str, PublisherRecord]:
    """One PublisherRecord per username.

    Feed items are joined to identifications by torrent URL; downloader
    counts are unique per-torrent peer IPs over all snapshots, with any
    configured vantage addresses excluded.
    """
    feed_by_url: dict[str, dict] = {}
    records: dict[str, PublisherRecord] = {}
    downloaders: dict[str, set[str]] = {}
    owner: dict[str, str] = {}

    for event in events:
        if event.kind == store.KIND_FEED_ITEM:
            feed_by_url[event.payload["torrent_url"]] = event.payload

    for event in events:
        if event.kind != store.KIND_IDENTIFICATION:
            continue
        p = event.payload
        username = p["username"]
        record = records.setdefault(username, PublisherRecord(username))
        feed = feed_by_url.get(p.get("torrent_url", ""), {})
        ref = TorrentRef(
            infohash=p["infohash"],
            title=feed.get("title", p.get("name", "")),
            category=feed.get("category", ""),
            subcategory=feed.get("subcategory", ""),
            size=feed.get("content_size", p.get("total_size", 0)),
            published_at=feed.get("published_at", p.get("first_announce_at", 0.0)),
            torrent_url=p.get("torrent_url", ""),
            description=feed.get("description", ""),
            file_names=p.get("file_names", []),
        )
        record.torrents.append(ref)
        owner[p["infohash"]] = username
        if p.get("ip"):
            record.ips.add(p["ip"])
        for domain in extract_urls(ref.title, ref.description, ref.file_names):
            record.promoted_urls.add(domain)

    for event in events:
        if event.kind == store.KIND_SNAPSHOT:
            p = event.payload
            seen = downloaders.setdefault(p["infohash"], set())
            for ip, _port in p["peers"]:
                if ip not in vantage_ips:
                    seen.add(ip)
        elif event.kind == store.KIND_PORTAL_REMOVAL:
            username = event.payload["username"]
            if username in records:
                records[username].removed_by_portal = True

    for infohash, seen in downloaders.items():
        username = owner.get(infohash)
        if username is not None:
            records[username].downloader_counts[infohash] = len(seen)

    for record in records.values():
        record.torrents.sort(key=lambda t: (t.published_at, t.infohash))
    return records


def collect_observations(events: list[store.EventRecord]) -> dict[tuple[str, str], list[float]]:
    """Times at which each torrent's identified publisher IP was present in
    a tracker reply, keyed by (username, infohash hex)."""
    ip_of: dict[str, tuple[str, str]] = {}
    for event in events:
        if event.kind == store.KIND_IDENTIFICATION and event.payload.get("ip"):
            ip_of[event.payload["infohash"]] = (event.payload["username"], event.payload["ip"])
    observations: dict[tuple[str, str], list[float]] = {}
    for event in events:
        if event.kind != store.KIND_SNAPSHOT:
            continue
        p = event.payload
        target = ip_of.get(p["infohash"])
        if target is None:
            continue
        username, ip = target
        if any(peer_ip == ip for peer_ip, _ in p["peers"]):
            observations.setdefault((username, p["infohash"]), []).append(p["observed_at"])
    for series in observations.values():
        series.sort()
    return observations


def flag_fake(
    records: dict[str, PublisherRecord],
    username_threshold: int = FAKE_USERNAME_THRESHOLD,
) -> dict[str, PublisherRecord]:
    """Mark fake publishers: every username published from an IP that was
    seen publishing under >= username_threshold distinct usernames, plus
    any username the portal removed."""
    if username_threshold < 2:
        raise ValueError("username_threshold must be >= 2")
    usernames_by_ip: dict[str, set[str]] = {}
    for record in records.values():
        for ip in record.ips:
            usernames_by_ip.setdefault(ip, set()).add(record.username)
    for record in records.values():
        record.fake = record.removed_by_portal or any(
            len(usernames_by_ip[ip]) >= username_threshold for ip in record.ips
        )
        if record.fake:
            record.top = False
    return records


def rank_top(records: dict[str, PublisherRecord], k: int = TOP_K) -> list[PublisherRecord]:
    """The Top group: the k most prolific usernames minus fake ones.

    Ordering is torrent count, then downloads attracted, then username.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(
        records.values(),
        key=lambda r: (-r.torrent_count, -r.downloads_attracted, r.username),
    )
    top = [r for r in ranked[:k] if not r.fake]
    for record in records.values():
        record.top = False
    for record in top:
        record.top = True
    return top


def publisher_isp_class(record: PublisherRecord, geo: geoip.GeoIpTable) -> str:
    """Majority ISP type over a publisher's identified IPs; unknown IPs
    abstain, and a hosting/commercial tie counts as hosting."""
    hosting = commercial = 0
    for ip in record.ips:
        isp_type = geo.lookup(ip).isp_type
        if isp_type == geoip.HOSTING:
            hosting += 1
        elif isp_type == geoip.COMMERCIAL:
            commercial += 1
    if hosting == commercial == 0:
        return geoip.UNKNOWN
    return geoip.HOSTING if hosting >= commercial else geoip.COMMERCIAL


def split_top_by_isp(
    top: list[PublisherRecord], geo: geoip.GeoIpTable
) -> tuple[list[PublisherRecord], list[PublisherRecord], list[PublisherRecord]]:
    """Partition Top into hosting-provider and commercial-ISP publishers.
    Publishers whose IPs are all unclassified (or who have no identified
    IP) land in a third, reported-separately bucket."""
    hp, ci, unknown = [], [], []
    for record in top:
        record.isp_class = publisher_isp_class(record, geo)
        if record.isp_class == geoip.HOSTING:
            hp.append(record)
        elif record.isp_class == geoip.COMMERCIAL:
            ci.append(record)
        else:
            unknown.append(record)
    return hp, ci, unknown


def classify_multi_ip(record: PublisherRecord, geo: geoip.GeoIpTable) -> str:
    """Qualitative multi-IP cases: a handful of hosting boxes, a rotating
    address inside one commercial ISP, or injection from several ISPs."""
    ips = sorted(record.ips)
    if len(ips) <= 1:
        record.multi_ip_case = CASE_SINGLE_IP
        return record.multi_ip_case
    infos = [geo.lookup(ip) for ip in ips]
    hosting = [i for i in infos if i.isp_type == geoip.HOSTING]
    commercial = [i for i in infos if i.isp_type == geoip.COMMERCIAL]
    if hosting and not commercial:
        case = CASE_FEW_HOSTING
    elif commercial and not hosting:
        isps = {i.isp_name for i in commercial}
        case = CASE_SINGLE_COMMERCIAL if len(isps) == 1 else CASE_MULTI_COMMERCIAL
    elif hosting and commercial:
        case = CASE_FEW_HOSTING if len(hosting) > len(commercial) else CASE_MULTI_COMMERCIAL
    else:
        # Nothing classified: several distinct addresses, assume scattered.
        case = CASE_MULTI_COMMERCIAL
    record.multi_ip_case = case
    return case


def contribution_curve(records: dict[str, PublisherRecord] | list[PublisherRecord]) -> list[tuple[int, float]]:
    """Share of all published torrents held by the top x% of publishers,
    for integer x in 1..100: (x, share) pairs, non-decreasing, ending at 1.0."""
    population = list(records.values()) if isinstance(records, dict) else list(records)
    if not population:
        raise ValueError("no publishers")
    counts = sorted((r.torrent_count for r in population), reverse=True)
    total = sum(counts)
    if total == 0:
        raise ValueError("no published torrents")
    prefix = [0]
    for c in counts:
        prefix.append(prefix[-1] + c)
    n = len(counts)
    return [(x, prefix[n * x // 100] / total) for x in range(1, 101)]


def nearest_rank_quartiles(values: list[float]) -> tuple[float, float, float]:
    if not values:
        raise ValueError("empty group")
    ordered = sorted(values)
    n = len(ordered)
    pick = lambda p: ordered[max(0, math.ceil(p * n) - 1)]
    return pick(0.25), pick(0.50), pick(0.75)


def popularity_stats(group: list[PublisherRecord]) -> tuple[float, float, float]:
    """25th/50th/75th percentiles (nearest-rank) of the per-publisher mean
    number of unique downloaders per torrent."""
    if not group:
        raise ValueError("empty group")
    return nearest_rank_quartiles([r.mean_downloaders_per_torrent() for r in group])


def group_breakdown(groups: dict[str, list[PublisherRecord]]) -> dict[str, dict[str, float]]:
    """Per group, the fraction of torrents in each content category.
    Torrents with a blank category are bucketed as "unknown"."""
    out: dict[str, dict[str, float]] = {}
    for label, members in groups.items():
        counts: dict[str, int] = {}
        for record in members:
            for torrent in record.torrents:
                category = torrent.category.strip().lower() or "unknown"
                counts[category] = counts.get(category, 0) + 1
        total = sum(counts.values())
        out[label] = {cat: c / total for cat, c in sorted(counts.items())} if total else {}
    return out


def extract_urls(
    name: str = "",
    description: str = "",
    bundled_filenames: list[str] | tuple = (),
) -> dict[str, set[str]]:
    """Domains a downloader would run into, with the channel(s) carrying
    each: the content filename, the item textbox, or a bundled file name.

    Tokens are lowercased runs of [a-z0-9.]; a token yields a domain when,
    after stripping a leading www and any trailing non-suffix labels, at
    least two labels remain ending in a public-suffix-like label.
    """
    found: dict[str, set[str]] = {}
    sources = [(URL_CHANNEL_FILENAME, name), (URL_CHANNEL_TEXTBOX, description)]
    sources.extend((URL_CHANNEL_BUNDLED, fn) for fn in bundled_filenames)
    for channel, text in sources:
        if not text:
            continue
        for token in _TOKEN_RE.findall(text.lower()):
            labels = [part for part in token.split(".") if part]
            while labels and labels[-1] not in _DOMAIN_SUFFIXES:
                labels.pop()
            if len(labels) < 2:
                continue
            if labels[0] == "www":
                labels = labels[1:]
            if len(labels) < 2:
                continue
            found.setdefault(".".join(labels), set()).add(channel)
    return found


def longitudinal(record: PublisherRecord) -> tuple[int, float]:
    """(lifetime in whole days between first and last publication, average
    publications per day over that lifetime). Lifetime is floored at one
    day so single-shot publishers have a defined rate."""
    if not record.torrents:
        raise ValueError(f"{record.username} has no publications")
    times = [t.published_at for t in record.torrents]
    lifetime_days = max(1, int((max(times) - min(times)) // 86400))
    return lifetime_days, record.torrent_count / lifetime_days


def class_aggregates(
    records: dict[str, PublisherRecord] | list[PublisherRecord],
) -> dict[str, tuple[float, float]]:
    """Per business class: (share of all content, share of all downloads).
    Publishers without an annotation fall into "unclassified"."""
    population = list(records.values()) if isinstance(records, dict) else list(records)
    total_content = sum(r.torrent_count for r in population)
    total_downloads = sum(r.downloads_attracted for r in population)
    by_class: dict[str, list[PublisherRecord]] = {}
    for record in population:
        by_class.setdefault(record.business_class or "unclassified", []).append(record)
    out = {}
    for label, members in sorted(by_class.items()):
        content = sum(r.torrent_count for r in members)
        downloads = sum(r.downloads_attracted for r in members)
        out[label] = (
            content / total_content if total_content else 0.0,
            downloads / total_downloads if total_downloads else 0.0,
        )
    return out


@dataclass
class SeedingBehavior:
    """Per-publisher seeding metrics over reconstructed sessions."""

    username: str
    sessions_by_torrent: dict[str, list[SessionRecord]]
    seeding_time_by_torrent: dict[str, float]
    mean_seeding_time: float
    parallel_torrents: float
    aggregated_session_time: float


def compute_seeding_behavior(
    observations: dict[tuple[str, str], list[float]],
    offline_threshold_s: float,
    tick_s: float = 60.0,
    publisher_sample: int | None = None,
    sample_seed: int = 0,
) -> dict[str, SeedingBehavior]:
    """Reconstruct sessions for every (publisher, torrent) observation
    series and derive the three seeding metrics per publisher.

    These scans are the expensive part of a large analysis; passing
    publisher_sample computes them for a deterministic random subset of
    publishers instead of all of them.
    """
    import random as _random

    from .sessions import aggregated_session_time, parallel_torrents, seeding_time

    per_publisher: dict[str, dict[str, list[SessionRecord]]] = {}
    for (username, infohash), times in observations.items():
        sessions = reconstruct_sessions(times, offline_threshold_s, username, infohash)
        per_publisher.setdefault(username, {})[infohash] = sessions
    if publisher_sample is not None and publisher_sample < len(per_publisher):
        chosen = _random.Random(sample_seed).sample(sorted(per_publisher), publisher_sample)
        per_publisher = {username: per_publisher[username] for username in chosen}
    out: dict[str, SeedingBehavior] = {}
    for username, by_torrent in per_publisher.items():
        seeding = {ih: seeding_time(s) for ih, s in by_torrent.items()}
        all_sessions = [s for group in by_torrent.values() for s in group]
        out[username] = SeedingBehavior(
            username=username,
            sessions_by_torrent=by_torrent,
            seeding_time_by_torrent=seeding,
            mean_seeding_time=sum(seeding.values()) / len(seeding),
            parallel_torrents=parallel_torrents(by_torrent, tick_s),
            aggregated_session_time=aggregated_session_time(all_sessions),
        )
    return out


def make_groups(
    records: dict[str, PublisherRecord],
    geo: geoip.GeoIpTable = geoip.EMPTY_TABLE,
    top_k: int = TOP_K,
    fake_threshold: int = FAKE_USERNAME_THRESHOLD,
) -> dict[str, list[PublisherRecord]]:
    """Flag fakes, build Top, split it by ISP class, and return the five
    standard groups keyed by label."""
    flag_fake(records, fake_threshold)
    top = rank_top(records, top_k)
    hp, ci, _unknown = split_top_by_isp(top, geo)
    return {
        GROUP_ALL: list(records.values()),
        GROUP_FAKE: [r for r in records.values() if r.fake],
        GROUP_TOP: top,
        GROUP_TOP_HP: hp,
        GROUP_TOP_CI: ci,
    }


def group_median(values: list[float]) -> float:
    return statistics.median(values) if values else 0.0

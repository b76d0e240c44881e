"""Deterministic world generation: publishers, torrents, peer churn, and
the ground truth that every pipeline stage is judged against."""

from __future__ import annotations

import hashlib
import heapq
import math
import random
import string

from .. import bencode
from .config import WorldConfig
from .model import GroundTruth, GtPublisher, GtSession, GtStint, GtTorrent

ANNOUNCE_URL = "sim://tracker/announce"
FEED_URL = "sim://portal/feed.xml"
PORTAL_ID = "simnet"

HOSTING_ISPS = [
    ("RoubaixServ", "10.1", "FR", "Roubaix"),
    ("BulkBox", "10.2", "US", "Chicago"),
    ("RackFarm", "10.3", "DE", "Frankfurt"),
]
COMMERCIAL_ISPS = [
    ("CablePlus", "10.16", "US", "Denver"),
    ("HomeLink", "10.17", "GB", "London"),
    ("TeleSur", "10.18", "ES", "Madrid"),
    ("NetCasa", "10.19", "IT", "Milan"),
]
# Fake entities operate out of a couple of specific hosting providers.
FAKE_ISP_INDICES = (1, 2)

CATEGORY_SUBS = {
    "video": ["movies", "tv-shows"],
    "audio": ["music", "audiobooks"],
    "software": ["apps"],
    "games": ["pc"],
    "books": ["ebooks"],
}
CATEGORY_EXT = {"video": "avi", "audio": "mp3", "software": "exe", "games": "iso", "books": "epub"}
CATEGORY_SIZE_MB = {"video": (350, 1400), "audio": (40, 120), "software": (60, 700), "games": (200, 1200), "books": (2, 30)}

HOUR = 3600.0
DAY = 86400.0


def geoip_rows() -> list[tuple[str, str, str, str, str]]:
    """CSV rows (cidr,isp_name,isp_type,country,city) covering every
    publisher address pool the generator uses."""
    rows = []
    for name, base, country, city in HOSTING_ISPS:
        rows.append((f"{base}.0.0/16", name, "hosting", country, city))
    for name, base, country, city in COMMERCIAL_ISPS:
        rows.append((f"{base}.0.0/16", name, "commercial", country, city))
    return rows


def write_geoip_csv(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in geoip_rows():
            fh.write(",".join(row) + "\n")


class _IpAllocator:
    def __init__(self):
        self._counters: dict[str, int] = {}
        self._downloader_index = 0

    def publisher_ip(self, base: str) -> str:
        n = self._counters.get(base, 10)
        self._counters[base] = n + 1
        return f"{base}.{n >> 8}.{n & 255}"

    def downloader_ip(self) -> str:
        i = self._downloader_index
        self._downloader_index += 1
        return f"10.{32 + (i >> 16)}.{(i >> 8) & 255}.{i & 255}"


def _weighted_choice(rng: random.Random, weights: dict[str, float]) -> str:
    roll = rng.random()
    acc = 0.0
    for key, weight in weights.items():
        acc += weight
        if roll < acc:
            return key
    return next(reversed(weights))


def _poisson(rng: random.Random, lam: float) -> int:
    if lam <= 0:
        return 0
    if lam < 30:
        limit = math.exp(-lam)
        k, product = 0, rng.random()
        while product > limit:
            k += 1
            product *= rng.random()
        return k
    return max(0, round(rng.gauss(lam, math.sqrt(lam))))


def _zipf_counts(config: WorldConfig) -> list[int]:
    counts = [
        max(1, round(config.zipf_max_count * (rank + 1) ** -config.zipf_exponent))
        for rank in range(config.publisher_count)
    ]
    target = config.content_total_target
    if target is not None:
        fake_total = (
            config.fake_publisher_count
            * config.fake_usernames_per_ip
            * config.fake_torrents_per_username
        )
        diff = target - fake_total - sum(counts)
        tail_start = config.top_tier_size
        index = tail_start
        while diff != 0 and config.publisher_count > tail_start:
            if diff > 0:
                counts[index] += 1
                diff -= 1
            elif counts[index] > 1:
                counts[index] -= 1
                diff += 1
            index += 1
            if index >= config.publisher_count:
                index = tail_start
                if diff < 0 and all(c == 1 for c in counts[tail_start:]):
                    break
    return counts


def _fake_username(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = "".join(rng.choice(string.ascii_lowercase + string.digits) for _ in range(8))
        if name not in taken:
            taken.add(name)
            return name


def _build_torrent_file(
    title_name: str,
    ext: str,
    size: int,
    piece_length: int,
    bundled_domain: str | None,
    rng: random.Random,
) -> tuple[bytes, bytes, list[str]]:
    """Returns (torrent bytes, infohash, contained file names)."""
    piece_count = -(-size // piece_length)
    pieces = rng.randbytes(20 * piece_count)
    file_names = [f"{title_name}.{ext}"]
    if bundled_domain:
        file_names.append(f"visit-{bundled_domain}.txt")
        info = {
            b"name": title_name.encode(),
            b"piece length": piece_length,
            b"pieces": pieces,
            b"files": [
                {b"length": size - 64, b"path": [file_names[0].encode()]},
                {b"length": 64, b"path": [file_names[1].encode()]},
            ],
        }
    else:
        info = {
            b"name": file_names[0].encode(),
            b"piece length": piece_length,
            b"pieces": pieces,
            b"length": size,
        }
    info_bytes = bencode.encode(info)
    digest = hashlib.sha1(info_bytes).digest()
    doc = bencode.encode({b"announce": ANNOUNCE_URL.encode(), b"info": info})
    return doc, digest, file_names


def generate_world(config: WorldConfig):
    """Build a World and its GroundTruth; a pure function of the config."""
    from .world import World  # local import to keep module load order simple

    rng = random.Random(config.rng_seed)
    alloc = _IpAllocator()
    truth = GroundTruth(epoch=config.epoch, horizon=0.0, config_dict={})
    torrent_files: dict[str, bytes] = {}
    taken_names: set[str] = set()

    counts = list(config.content_counts) if config.content_counts else _zipf_counts(config)

    # --- honest publisher identities ---
    honest: list[GtPublisher] = []
    ports: dict[tuple[str, str], int] = {}
    # Spread hosting-provider publishers evenly across tier ranks so the
    # hosting and commercial halves of the tier have similar volume.
    fraction = config.top_hosting_fraction
    hosting_ranks = {
        i for i in range(config.top_tier_size)
        if math.floor((i + 1) * fraction) > math.floor(i * fraction)
    }
    for index in range(config.publisher_count):
        username = f"pub{index:04d}"
        taken_names.add(username)
        tier = "top" if index < config.top_tier_size else "regular"
        publisher = GtPublisher(username=username, tier=tier)
        publisher.nat = rng.random() < config.nat_fraction
        if tier == "top" and index in hosting_ranks:
            publisher.isp_kind = "hosting"
            name, base, _, _ = HOSTING_ISPS[rng.randrange(len(HOSTING_ISPS))]
            n_ips = 1 if rng.random() < 0.3 else rng.randint(2, 6)
            publisher.ips = [alloc.publisher_ip(base) for _ in range(n_ips)]
        elif tier == "top":
            publisher.isp_kind = "commercial"
            roll = rng.random()
            if roll < 0.25:
                pools = [COMMERCIAL_ISPS[rng.randrange(len(COMMERCIAL_ISPS))]]
                n_ips = 1
            elif roll < 0.65:
                pools = [COMMERCIAL_ISPS[rng.randrange(len(COMMERCIAL_ISPS))]]
                n_ips = rng.randint(8, 18)
            else:
                k = rng.randint(2, min(4, len(COMMERCIAL_ISPS)))
                pools = rng.sample(COMMERCIAL_ISPS, k)
                n_ips = rng.randint(4, 10)
            publisher.ips = [
                alloc.publisher_ip(pools[i % len(pools)][1]) for i in range(n_ips)
            ]
        else:
            publisher.isp_kind = "commercial"
            _, base, _, _ = COMMERCIAL_ISPS[rng.randrange(len(COMMERCIAL_ISPS))]
            publisher.ips = [alloc.publisher_ip(base)]
        for ip in publisher.ips:
            ports[(username, ip)] = rng.randint(1025, 59999)
        honest.append(publisher)
        truth.publishers[username] = publisher

    # --- business classes ---
    downloads_mean: dict[str, float] = {}
    if config.class_share_targets:
        _assign_classes_by_target(config, rng, honest, counts, downloads_mean)
    else:
        tier_members = [p for p in honest if p.tier == "top"]
        shuffled = rng.sample(tier_members, len(tier_members))
        cursor = 0
        for label, fraction in config.business_class_mix.items():
            take = round(fraction * len(shuffled))
            for publisher in shuffled[cursor:cursor + take]:
                publisher.business_class = label
            cursor += take
        for publisher in shuffled[cursor:]:
            publisher.business_class = "altruistic"

    for publisher in honest:
        if publisher.business_class in ("bt_portal", "other_web"):
            domain = f"{publisher.username}zone.com"
            publisher.promoted_domains = [domain]
            channels = []
            if rng.random() < 2 / 3:
                channels.append("textbox")
            if rng.random() < 0.25:
                channels.append("filename")
            if rng.random() < 0.25:
                channels.append("bundled_file")
            publisher.promo_channels = channels or ["textbox"]

    # --- fake publisher entities ---
    fake_users: list[GtPublisher] = []
    for entity in range(config.fake_publisher_count):
        name, base, _, _ = HOSTING_ISPS[FAKE_ISP_INDICES[entity % len(FAKE_ISP_INDICES)]]
        ip = alloc.publisher_ip(base)
        for _ in range(config.fake_usernames_per_ip):
            username = _fake_username(rng, taken_names)
            publisher = GtPublisher(username=username, tier="fake", ips=[ip], isp_kind="hosting")
            ports[(username, ip)] = rng.randint(1025, 59999)
            fake_users.append(publisher)
            truth.publishers[username] = publisher

    # --- torrents ---
    birth_window = config.timeline_days * DAY
    for publisher, count in zip(honest, counts):
        mean = downloads_mean.get(
            publisher.username,
            config.downloads_mean_top if publisher.tier == "top" else config.downloads_mean_regular,
        )
        for serial in range(count):
            _generate_torrent(config, rng, alloc, truth, torrent_files, ports, publisher, serial, mean, birth_window)

    fake_birth_window = config.fake_birth_window_days * DAY
    for publisher in fake_users:
        for serial in range(config.fake_torrents_per_username):
            _generate_torrent(
                config, rng, alloc, truth, torrent_files, ports, publisher, serial,
                config.downloads_mean_fake, fake_birth_window,
            )

    # --- portal removals for fake usernames ---
    for publisher in fake_users:
        first_entry = min(truth.torrents[ih].feed_entry_at for ih in publisher.torrents)
        truth.removals[publisher.username] = first_entry + config.removal_delay_hours * HOUR

    last_death = max((t.death for t in truth.torrents.values()), default=config.epoch)
    drain = 12 * config.min_interval_s + config.feed_poll_interval_s + HOUR
    truth.horizon = last_death + drain
    truth.config_dict = _config_as_dict(config)
    return World(config, truth, torrent_files), truth


def _assign_classes_by_target(config, rng, honest, counts, downloads_mean) -> None:
    """Greedy class assignment hitting configured (content, download) share
    targets, largest publishers first; per-class download means are set so
    expected download shares match too."""
    total_fake = (
        config.fake_publisher_count * config.fake_usernames_per_ip * config.fake_torrents_per_username
    )
    total_content = sum(counts) + total_fake
    overall_mean = config.downloads_mean_regular
    expected_total_downloads = overall_mean * total_content
    order = sorted(range(len(honest)), key=lambda i: (-counts[i], honest[i].username))
    targets = {label: shares[0] * total_content for label, shares in config.class_share_targets.items()}
    assigned_content = dict.fromkeys(targets, 0)
    for index in order:
        best, best_deficit = None, 0.0
        for label, target in targets.items():
            deficit = target - assigned_content[label]
            if deficit > best_deficit:
                best, best_deficit = label, deficit
        # Assign while the class still wants at least half this publisher's
        # content; small overshoot keeps shares near target.
        if best is not None and best_deficit >= counts[index] * 0.5:
            honest[index].business_class = best
            assigned_content[best] += counts[index]
    # Download means per class so expected shares land on target.
    assigned_downloads = 0.0
    assigned_torrents = 0
    for label, shares in config.class_share_targets.items():
        content_t = assigned_content[label]
        if content_t == 0:
            continue
        mean = shares[1] * expected_total_downloads / content_t
        for publisher, count in zip(honest, counts):
            if publisher.business_class == label:
                downloads_mean[publisher.username] = mean
        assigned_downloads += mean * content_t
        assigned_torrents += content_t
    fake_downloads = config.downloads_mean_fake * total_fake
    rest_torrents = total_content - total_fake - assigned_torrents
    if rest_torrents > 0:
        rest_mean = max(1.0, (expected_total_downloads - assigned_downloads - fake_downloads) / rest_torrents)
        for publisher in honest:
            if publisher.business_class is None:
                downloads_mean[publisher.username] = rest_mean


def _generate_torrent(
    config: WorldConfig,
    rng: random.Random,
    alloc: _IpAllocator,
    truth: GroundTruth,
    torrent_files: dict[str, bytes],
    ports: dict[tuple[str, str], int],
    publisher: GtPublisher,
    serial: int,
    downloads_mean: float,
    birth_window: float,
) -> None:
    fake = publisher.fake
    birth = config.epoch + rng.random() * birth_window
    prepublished = (not fake) and rng.random() < config.prepublished_fraction
    if prepublished:
        age = rng.uniform(*config.prepublished_age_hours) * HOUR
        feed_entry = birth + age
    else:
        feed_entry = birth

    mix = config.fake_category_mix if fake else config.category_mix
    category = _weighted_choice(rng, mix)
    subcategory = rng.choice(CATEGORY_SUBS.get(category, ["misc"]))
    lo_mb, hi_mb = CATEGORY_SIZE_MB.get(category, (50, 500))
    size = rng.randint(lo_mb, hi_mb) * 1_000_000 + rng.randint(0, 999_999)
    piece_count_goal = rng.randint(16, 48)
    piece_length = -(-size // piece_count_goal)
    piece_length += (-piece_length) % 16384  # round up to 16 KiB
    piece_count = -(-size // piece_length)

    base_title = f"{publisher.username}-{category}-{serial:03d}"
    title = base_title
    description = f"Release {serial} in {category}/{subcategory} shared by {publisher.username}"
    bundled_domain = None
    if publisher.promoted_domains:
        domain = publisher.promoted_domains[0]
        if "filename" in publisher.promo_channels:
            title = f"{base_title}-{domain}"
        if "textbox" in publisher.promo_channels:
            description = f"Visit http://www.{domain}/ for more releases. {description}"
        if "bundled_file" in publisher.promo_channels:
            bundled_domain = domain

    torrent_bytes, digest, file_names = _build_torrent_file(
        title, CATEGORY_EXT.get(category, "bin"), size, piece_length, bundled_domain, rng
    )
    infohash = digest.hex()
    url = f"sim://portal/t/{infohash}.torrent"
    torrent_files[url] = torrent_bytes

    seed_ip = publisher.ips[rng.randrange(len(publisher.ips))]
    seed_port = ports[(publisher.username, seed_ip)]

    # Publisher sessions.
    sessions: list[GtSession] = []
    if fake:
        duration = rng.uniform(*config.fake_seed_days) * DAY
        sessions.append(GtSession(birth, birth + duration))
    else:
        lo, hi = {
            ("top", "hosting"): config.seed_hours_top_hp,
            ("top", "commercial"): config.seed_hours_top_ci,
        }.get((publisher.tier, publisher.isp_kind), config.seed_hours_regular)
        total = rng.uniform(lo, hi) * HOUR
        if publisher.tier == "top" and rng.random() < config.multi_session_fraction:
            # Two stints with a pause in between, early enough that the
            # swarm still has downloaders keeping the torrent observable.
            first = total * rng.uniform(0.4, 0.6)
            gap = rng.uniform(*config.session_gap_hours) * HOUR
            sessions.append(GtSession(birth, birth + first))
            sessions.append(GtSession(birth + first + gap, birth + total + gap))
        else:
            sessions.append(GtSession(birth, birth + total))

    stints = [
        GtStint(seed_ip, seed_port, s.start, s.end, kind="publisher", nat=publisher.nat)
        for s in sessions
    ]

    extra_seed = (not fake) and rng.random() < config.extra_seed_fraction
    if extra_seed:
        stints.append(
            GtStint(
                alloc.downloader_ip(),
                rng.randint(1025, 59999),
                birth,
                birth + rng.uniform(6, 12) * HOUR,
                kind="extra_seed",
            )
        )

    # Leecher churn.
    window = (config.fake_arrival_window_hours if fake else config.arrival_window_hours) * HOUR
    jitter = rng.uniform(0.6, 1.4) if (fake or publisher.tier == "top") else rng.uniform(0.3, 1.7)
    n_leechers = _poisson(rng, downloads_mean * jitter)
    leechers: list[GtStint] = []
    if prepublished:
        # A crowd that joined while the torrent lived on some other portal.
        hold = (feed_entry - birth) + 2 * HOUR
        for _ in range(25):
            arrive = birth + rng.random() * HOUR
            leechers.append(
                GtStint(alloc.downloader_ip(), rng.randint(1025, 59999), arrive, arrive + hold, kind="leecher")
            )
    for _ in range(n_leechers):
        arrive = birth + (rng.random() ** 2) * window
        duration = max(config.peer_session_min_s, rng.expovariate(1.0 / config.peer_session_mean_s))
        completes_at = None
        if not fake and rng.random() < config.completion_fraction:
            done = arrive + rng.uniform(*config.completion_hours) * HOUR
            if done < arrive + duration:
                completes_at = done
        leechers.append(
            GtStint(
                alloc.downloader_ip(),
                rng.randint(1025, 59999),
                arrive,
                arrive + duration,
                kind="leecher",
                nat=rng.random() < config.nat_leecher_fraction,
                completes_at=completes_at,
            )
        )

    # Population cap: arrivals that would exceed it never join.
    cap = max(1, config.swarm_population_cap - 2)
    leechers.sort(key=lambda s: (s.start, s.ip))
    active_ends: list[float] = []
    kept: list[GtStint] = []
    for stint in leechers:
        while active_ends and active_ends[0] <= stint.start:
            heapq.heappop(active_ends)
        if len(active_ends) < cap:
            kept.append(stint)
            heapq.heappush(active_ends, stint.end)
    stints.extend(kept)

    death = max(s.end for s in stints)
    torrent = GtTorrent(
        infohash=infohash,
        title=title,
        file_name=file_names[0],
        category=category,
        subcategory=subcategory,
        size=size,
        piece_length=piece_length,
        piece_count=piece_count,
        username=publisher.username,
        publisher_ip=seed_ip,
        publisher_port=seed_port,
        publisher_nat=publisher.nat,
        birth=birth,
        published_at=birth,
        feed_entry_at=feed_entry,
        prepublished=prepublished,
        extra_seed=extra_seed,
        death=death,
        torrent_url=url,
        announce_url=ANNOUNCE_URL,
        description=description,
        file_names=file_names,
        sessions=sessions,
        stints=stints,
    )
    truth.torrents[infohash] = torrent
    publisher.torrents.append(infohash)


def _config_as_dict(config: WorldConfig) -> dict:
    from dataclasses import asdict

    raw = asdict(config)
    for key, value in raw.items():
        if isinstance(value, tuple):
            raw[key] = list(value)
    return raw

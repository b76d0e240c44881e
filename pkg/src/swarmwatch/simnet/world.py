"""Runtime side of the simulated world: the tracker, the portal feed, and
peer endpoints, all exposed through the same Transport interface the live
monitor uses."""

from __future__ import annotations

import hashlib
import heapq
import random
from email.utils import formatdate
from urllib.parse import parse_qs, unquote_to_bytes, urlsplit
from xml.sax.saxutils import escape, quoteattr

from .. import tracker
from ..feeds import PortalProfile
from ..transport import Clock, ConnectionRefused, TransportError
from .config import WorldConfig
from .generate import ANNOUNCE_URL, FEED_URL, PORTAL_ID
from .model import GroundTruth, GtStint, GtTorrent


def sim_portal_profile(config: WorldConfig | None = None) -> PortalProfile:
    return PortalProfile(
        portal_id=PORTAL_ID,
        feed_url=FEED_URL,
        username_element="uploader",
        category_element="category",
        subcategory_element="subcategory",
        size_element="contentLength",
        poll_interval_s=config.feed_poll_interval_s if config else 600.0,
        first_query_delay_s=config.first_query_delay_s if config else 0.0,
    )


class SwarmSim:
    """Active-peer view of one swarm, advanced monotonically in time.

    The monitor polls each swarm with non-decreasing timestamps, so a
    cursor over arrival-sorted stints plus a departure heap answers every
    query; a rare backwards query falls back to a full scan.
    """

    def __init__(self, torrent: GtTorrent):
        self.torrent = torrent
        self._by_start = sorted(torrent.stints, key=lambda s: (s.start, s.ip, s.port))
        self._cursor = 0
        self._heap: list[tuple[float, int, GtStint]] = []
        self._seq = 0
        self._time = float("-inf")
        self._cache: list[GtStint] | None = None

    def active_at(self, t: float) -> list[GtStint]:
        if t < self._time:
            return sorted(
                (s for s in self.torrent.stints if s.active_at(t)),
                key=lambda s: (s.ip, s.port, s.start),
            )
        self._time = t
        changed = False
        while self._cursor < len(self._by_start) and self._by_start[self._cursor].start <= t:
            stint = self._by_start[self._cursor]
            self._cursor += 1
            if stint.end > t:
                heapq.heappush(self._heap, (stint.end, self._seq, stint))
                self._seq += 1
                changed = True
        while self._heap and self._heap[0][0] <= t:
            heapq.heappop(self._heap)
            changed = True
        if changed or self._cache is None:
            self._cache = sorted((item[2] for item in self._heap), key=lambda s: (s.ip, s.port, s.start))
        return self._cache

    def counts_at(self, t: float) -> tuple[int, int]:
        active = self.active_at(t)
        seeders = sum(1 for s in active if s.is_seed_at(t))
        return seeders, len(active) - seeders


class World:
    """Everything the simulated transport serves: feed, torrent files,
    tracker replies, and probe-able peers."""

    def __init__(self, config: WorldConfig, truth: GroundTruth, torrent_files: dict[str, bytes]):
        self.config = config
        self.truth = truth
        self.torrent_files = torrent_files
        self.horizon = truth.horizon
        self.now = config.epoch
        self.swarms = {ih: SwarmSim(t) for ih, t in truth.torrents.items()}
        self._announce_counter: dict[str, int] = {}
        self._feed_order = sorted(
            truth.torrents.values(), key=lambda t: (t.feed_entry_at, t.infohash)
        )
        self._feed_entry_times = [t.feed_entry_at for t in self._feed_order]
        self._item_xml_cache: dict[str, str] = {}
        self.endpoints: dict[tuple[str, int], list[tuple[str, GtStint]]] = {}
        for ih, torrent in truth.torrents.items():
            for stint in torrent.stints:
                self.endpoints.setdefault((stint.ip, stint.port), []).append((ih, stint))
        self.query_log: list[tuple[float, str, str]] = []  # (t, infohash, raw query)

    def advance(self, dt: float) -> "World":
        """Move the world's own clock forward. Peer arrivals and departures
        are schedules, so state at any time is implied; `announce` and
        `open_peer` default to this clock when no time is given."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.now += dt
        return self

    # --- tracker ---

    def _announce_rng(self, infohash: str) -> random.Random:
        n = self._announce_counter.get(infohash, 0)
        self._announce_counter[infohash] = n + 1
        digest = hashlib.sha1(f"{self.config.rng_seed}:ann:{infohash}:{n}".encode()).digest()
        return random.Random(int.from_bytes(digest[:8], "big"))

    def announce(self, infohash: str, t: float | None = None, numwant: int = 50) -> tracker.AnnounceResult:
        if t is None:
            t = self.now
        swarm = self.swarms.get(infohash)
        if swarm is None:
            raise KeyError(infohash)
        active = swarm.active_at(t)
        seeders = sum(1 for s in active if s.is_seed_at(t))
        sample_size = min(self.config.tracker_sample_size, numwant, len(active))
        rng = self._announce_rng(infohash)
        chosen = rng.sample(active, sample_size) if sample_size < len(active) else list(active)
        chosen.sort(key=lambda s: (s.ip, s.port))
        return tracker.AnnounceResult(
            seeders=seeders,
            leechers=len(active) - seeders,
            interval_s=int(self.config.min_interval_s),
            peers=[(s.ip, s.port) for s in chosen],
            received_at=t,
        )

    # --- portal feed ---

    def _item_xml(self, torrent: GtTorrent) -> str:
        cached = self._item_xml_cache.get(torrent.infohash)
        if cached is None:
            cached = (
                "<item>"
                f"<title>{escape(torrent.title)}</title>"
                f"<guid>{escape(torrent.torrent_url)}</guid>"
                f"<enclosure url={quoteattr(torrent.torrent_url)} type=\"application/x-bittorrent\"/>"
                f"<pubDate>{formatdate(torrent.published_at, usegmt=True)}</pubDate>"
                f"<category>{escape(torrent.category)}</category>"
                f"<subcategory>{escape(torrent.subcategory)}</subcategory>"
                f"<contentLength>{torrent.size}</contentLength>"
                f"<uploader>{escape(torrent.username)}</uploader>"
                f"<description>{escape(torrent.description)}</description>"
                "</item>"
            )
            self._item_xml_cache[torrent.infohash] = cached
        return cached

    def feed_xml(self, t: float) -> bytes:
        import bisect

        upto = bisect.bisect_right(self._feed_entry_times, t)
        window = self._feed_order[max(0, upto - self.config.feed_window):upto]
        body = "".join(self._item_xml(torrent) for torrent in reversed(window))
        doc = (
            '<?xml version="1.0" encoding="UTF-8"?>'
            '<rss version="2.0"><channel>'
            "<title>simnet portal</title><link>sim://portal/</link>"
            "<description>new torrents</description>"
            f"{body}"
            "</channel></rss>"
        )
        return doc.encode("utf-8")

    # --- peer endpoints ---

    def open_peer(self, ip: str, port: int, t: float | None = None) -> "SimPeerConnection":
        if t is None:
            t = self.now
        stints = [
            (ih, stint)
            for ih, stint in self.endpoints.get((ip, port), [])
            if stint.active_at(t)
        ]
        if not stints:
            raise ConnectionRefused(f"{ip}:{port} not listening")
        if any(stint.nat for _, stint in stints):
            raise ConnectionRefused(f"{ip}:{port} behind NAT")
        return SimPeerConnection(self, stints, t)


class SimPeerConnection:
    """Scripted peer: replies to a handshake with its own handshake plus a
    bitfield reflecting the peer's pieces at connect time."""

    def __init__(self, world: World, stints: list[tuple[str, GtStint]], t: float):
        self._world = world
        self._stints = stints
        self._t = t
        self._inbox = bytearray()
        self._received = bytearray()
        self._responded = False

    def send(self, data: bytes) -> None:
        from .. import peerwire

        self._received += data
        if self._responded or len(self._received) < peerwire.HANDSHAKE_LEN:
            return
        self._responded = True
        try:
            infohash, _ = peerwire.parse_handshake(bytes(self._received))
        except ValueError:
            return  # garbage in, silence out
        ih_hex = infohash.hex()
        for ih, stint in self._stints:
            if ih == ih_hex:
                torrent = self._world.truth.torrents[ih]
                peer_id = hashlib.sha1(f"simpeer:{stint.ip}:{stint.port}".encode()).digest()
                self._inbox += peerwire.build_handshake(infohash, peer_id)
                self._inbox += peerwire.build_message(
                    peerwire.MSG_BITFIELD, _bitfield_bytes(stint, torrent, self._t)
                )
                return
        # Wrong swarm for this endpoint: peer hangs up after its handshake.

    def recv(self, n: int) -> bytes:
        if not self._inbox:
            raise TimeoutError("simulated peer sent nothing further")
        chunk = bytes(self._inbox[:n])
        del self._inbox[:n]
        return chunk

    def close(self) -> None:
        self._inbox.clear()


def _bitfield_bytes(stint: GtStint, torrent: GtTorrent, t: float) -> bytes:
    pc = torrent.piece_count
    if stint.is_seed_at(t):
        have = pc
    else:
        if stint.completes_at is not None:
            denominator = stint.completes_at - stint.start
        else:
            denominator = (stint.end - stint.start) * 2 + 3600.0
        fraction = min(0.97, max(0.0, (t - stint.start) / max(denominator, 1.0)))
        have = min(pc - 1, int(fraction * pc))
    out = bytearray((pc + 7) // 8)
    for index in range(have):
        out[index // 8] |= 0x80 >> (index % 8)
    return bytes(out)


class SimTransport:
    """Transport implementation backed by a World and a clock, so monitor
    code runs unchanged against the simulation."""

    def __init__(self, world: World, clock: Clock):
        self.world = world
        self.clock = clock

    def fetch(self, url: str) -> bytes:
        t = self.clock.now()
        if url == FEED_URL:
            return self.world.feed_xml(t)
        if url in self.world.torrent_files:
            return self.world.torrent_files[url]
        if url.startswith(ANNOUNCE_URL):
            return self._announce(url, t)
        raise TransportError(f"simulated transport has no route for {url}")

    def _announce(self, url: str, t: float) -> bytes:
        query = urlsplit(url).query
        params = parse_qs(query)
        try:
            raw = query.split("info_hash=", 1)[1].split("&", 1)[0]
            infohash = unquote_to_bytes(raw).hex()
            numwant = int(params.get("numwant", ["50"])[0])
        except (IndexError, ValueError) as exc:
            raise TransportError(f"malformed announce query: {url}") from exc
        self.world.query_log.append((t, infohash, query))
        try:
            result = self.world.announce(infohash, t, numwant)
        except KeyError:
            from .. import bencode

            return bencode.encode({b"failure reason": b"unknown torrent"})
        return tracker.serialize_announce_response(result)

    def connect(self, ip: str, port: int, timeout_s: float) -> SimPeerConnection:
        return self.world.open_peer(ip, port, self.clock.now())


def build_static_world(
    population: int,
    sample_size: int = 50,
    duration_days: float = 30.0,
    seed: int = 7,
) -> tuple[World, str, str]:
    """A single eternal swarm of `population` peers (one of them the
    publisher/seeder). Returns (world, infohash, target ip)."""
    config = WorldConfig(
        rng_seed=seed,
        publisher_count=1,
        top_tier_size=1,
        content_counts=[1],
        fake_publisher_count=0,
        tracker_sample_size=sample_size,
        swarm_population_cap=population + 10,
        timeline_days=0.001,
        downloads_mean_regular=0.0,
        downloads_mean_top=0.0,
        nat_fraction=0.0,
        extra_seed_fraction=0.0,
        prepublished_fraction=0.0,
    )
    from .generate import generate_world

    world, truth = generate_world(config)
    (infohash,) = truth.torrents
    torrent = truth.torrents[infohash]
    end = config.epoch + duration_days * 86400.0
    torrent.sessions[0].end = end
    torrent.stints = [s for s in torrent.stints if s.kind == "publisher"][:1]
    torrent.stints[0].end = end
    target_ip = torrent.stints[0].ip
    rng = random.Random(seed + 1)
    for index in range(population - 1):
        torrent.stints.append(
            GtStint(
                ip=f"10.40.{index >> 8}.{index & 255}",
                port=rng.randint(1025, 59999),
                start=torrent.birth,
                end=end,
                kind="leecher",
            )
        )
    torrent.death = end
    truth.horizon = end + 86400.0
    world.swarms[infohash] = SwarmSim(torrent)
    world.horizon = truth.horizon
    return world, infohash, target_ip


def discovery_trials(
    trials: int,
    population: int = 165,
    sample_size: int = 50,
    queries: int = 13,
    seed: int = 7,
) -> float:
    """Monte-Carlo check of the discovery model: fraction of trials in
    which the target peer shows up in at least one of `queries` tracker
    replies from a static swarm of `population` peers. The population is
    constant, so each reply is an independent uniform sample and the query
    spacing is irrelevant."""
    world, infohash, target_ip = build_static_world(population, sample_size, seed=seed)
    t = world.truth.torrents[infohash].birth + 60.0
    hits = 0
    for _ in range(trials):
        for _ in range(queries):
            result = world.announce(infohash, t, numwant=sample_size)
            if any(ip == target_ip for ip, _ in result.peers):
                hits += 1
                break
    return hits / trials

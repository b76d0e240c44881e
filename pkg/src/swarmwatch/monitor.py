"""Per-torrent monitoring lifecycle: identify the initial publisher at swarm
birth, then poll the tracker from every vantage until the swarm drains.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from . import peerwire, tracker
from .bencode import TorrentMeta
from .peerwire import ProbeResult
from .tracker import AnnounceResult, RateLimiter
from .transport import Clock, Transport, TransportError

log = logging.getLogger(__name__)

DEFAULT_MAX_PEERS_FOR_ID = 20
DEFAULT_EMPTY_REPLIES_TO_STOP = 10
DEFAULT_DEAD_TIME_S = 24 * 3600.0

METHOD_BITFIELD = "single_seed_bitfield"
METHOD_NONE = "none"

REASON_MULTI_SEED = "multi_seed"
REASON_TOO_MANY = "too_many_peers"
REASON_NAT = "nat"
REASON_NO_SEED = "no_seed_reported"
REASON_PREPUBLISHED = "pre_published"

STATUS_COMPLETED = "completed"
STATUS_ABORTED = "aborted"


@dataclass(frozen=True)
class Vantage:
    vantage_id: str
    peer_id: bytes
    port: int = 6881


def make_vantages(count: int, run_tag: str = "sw") -> list[Vantage]:
    """Deterministic vantage identities: distinct peer ids, one per crawler."""
    vantages = []
    for index in range(count):
        vid = f"v{index + 1:02d}"
        digest = hashlib.sha1(f"{run_tag}:{vid}".encode()).digest()
        peer_id = b"-SW0100-" + digest[:12]
        vantages.append(Vantage(vid, peer_id, port=6881 + index))
    return vantages


@dataclass
class SwarmSnapshot:
    infohash: bytes
    observed_at: float
    vantage_id: str
    seeders: int
    leechers: int
    peers: list[tuple[str, int]]

    @property
    def empty(self) -> bool:
        return len(self.peers) == 0


@dataclass
class PublisherIdentification:
    infohash: bytes
    username: str
    ip: str | None = None
    method: str = METHOD_NONE
    reason: str | None = None
    identified_at: float = 0.0


@dataclass
class TerminalStatus:
    infohash: bytes
    status: str
    reason: str | None
    snapshot_count: int
    duration_s: float
    finished_at: float


def snapshot_from_result(infohash: bytes, result: AnnounceResult) -> SwarmSnapshot:
    return SwarmSnapshot(
        infohash=infohash,
        observed_at=result.received_at,
        vantage_id=result.vantage_id,
        seeders=result.seeders,
        leechers=result.leechers,
        peers=list(result.peers),
    )


def identify_initial_publisher(
    meta: TorrentMeta,
    first_result: AnnounceResult,
    prober: Callable[[tuple[str, int]], ProbeResult],
    username: str,
    *,
    max_peers: int = DEFAULT_MAX_PEERS_FOR_ID,
    published_at: float | None = None,
    first_seen_at: float | None = None,
    prepublished_lag_s: float = 1800.0,
) -> tuple[PublisherIdentification, list[ProbeResult]]:
    """Pin the publisher's IP from the swarm's first announce when possible.

    Only swarms with exactly one reported seeder and fewer than `max_peers`
    participants are probed; the unique peer with a full bitfield is the
    publisher. Every other shape keeps the username (always known from the
    feed) and records why no IP could be attributed. A swarm that is
    already large and whose feed timestamp lags its first sighting was
    probably published elsewhere first.
    """
    ident = PublisherIdentification(meta.infohash, username, identified_at=first_result.received_at)
    probes: list[ProbeResult] = []
    peers = first_result.peers
    if first_result.seeders == 0:
        ident.reason = REASON_NO_SEED
    elif first_result.seeders > 1:
        ident.reason = REASON_MULTI_SEED
    elif len(peers) >= max_peers:
        lagged = (
            published_at is not None
            and first_seen_at is not None
            and first_seen_at - published_at > prepublished_lag_s
        )
        ident.reason = REASON_PREPUBLISHED if lagged else REASON_TOO_MANY
    else:
        if len(peers) > 1:
            with ThreadPoolExecutor(max_workers=len(peers)) as pool:
                probes = list(pool.map(prober, peers))
        elif peers:
            probes = [prober(peers[0])]
        seeds = [p for p in probes if p.outcome == peerwire.SEED]
        if len(seeds) == 1:
            ident.ip = seeds[0].endpoint[0]
            ident.method = METHOD_BITFIELD
        elif len(seeds) > 1:
            ident.reason = REASON_MULTI_SEED  # stale seeder count from the tracker
        elif any(p.outcome in (peerwire.REFUSED, peerwire.TIMEOUT) for p in probes):
            ident.reason = REASON_NAT
        else:
            ident.reason = REASON_NO_SEED
    return ident, probes


def should_terminate(
    history: list[SwarmSnapshot], empty_needed: int = DEFAULT_EMPTY_REPLIES_TO_STOP
) -> bool:
    """True iff the trailing `empty_needed` snapshots, merged across all
    vantages in observation order, are all empty."""
    if len(history) < empty_needed:
        return False
    ordered = sorted(history, key=lambda s: (s.observed_at, s.vantage_id))
    return all(s.empty for s in ordered[-empty_needed:])


def run_swarm(
    meta: TorrentMeta,
    identification: PublisherIdentification,
    limiter: RateLimiter,
    sink: Callable[[SwarmSnapshot], None],
    *,
    transport: Transport,
    clock: Clock,
    vantages: list[Vantage],
    numwant: int = tracker.DEFAULT_NUMWANT,
    empty_needed: int = DEFAULT_EMPTY_REPLIES_TO_STOP,
    dead_time_s: float = DEFAULT_DEAD_TIME_S,
    horizon: float | None = None,
    initial_snapshots: list[SwarmSnapshot] | None = None,
) -> TerminalStatus:
    """Poll the tracker from every vantage until the swarm drains.

    Vantages are staggered across the rate-limit interval so the aggregate
    cadence is min_interval / len(vantages). A reply with a failure reason
    counts as an empty reply (trackers drop dead torrents); transport
    failures on all vantages for longer than dead_time_s abort the swarm.
    """
    if not vantages:
        raise ValueError("at least one vantage required")
    interval = limiter.per_tracker_interval_s.get(meta.announce_url, limiter.min_interval_s)
    started_at = clock.now()
    consecutive_empty = 0
    snapshot_count = 0
    last_reply_at = started_at
    if initial_snapshots:
        for snap in initial_snapshots:
            snapshot_count += 1
            consecutive_empty = consecutive_empty + 1 if snap.empty else 0
            last_reply_at = max(last_reply_at, snap.observed_at)

    # Vantage k polls at started_at + k*stagger, then every interval, so the
    # merged cadence is interval/len(vantages). If the caller already
    # announced from vantage 0 the limiter bounces its first slot to
    # started_at + interval, which keeps the interleaving intact.
    stagger = interval / len(vantages)
    next_due: dict[str, float] = {}
    by_id: dict[str, Vantage] = {}
    for index, vantage in enumerate(vantages):
        by_id[vantage.vantage_id] = vantage
        next_due[vantage.vantage_id] = started_at + index * stagger

    def finish(status: str, reason: str | None) -> TerminalStatus:
        now = clock.now()
        return TerminalStatus(
            infohash=meta.infohash,
            status=status,
            reason=reason,
            snapshot_count=snapshot_count,
            duration_s=now - started_at,
            finished_at=now,
        )

    if consecutive_empty >= empty_needed:
        return finish(STATUS_COMPLETED, None)

    while True:
        vantage_id, due = min(next_due.items(), key=lambda kv: (kv[1], kv[0]))
        if horizon is not None and due > horizon:
            return finish(STATUS_ABORTED, "horizon")
        vantage = by_id[vantage_id]
        clock.sleep_until(due)
        now = clock.now()
        decision = limiter.acquire(meta.announce_url, now, vantage_id, meta.infohash)
        if not decision.proceed:
            next_due[vantage_id] = decision.wait_until
            continue
        next_due[vantage_id] = due + interval
        _, url = tracker.build_announce(meta, vantage.peer_id, port=vantage.port, numwant=numwant)
        try:
            raw = transport.fetch(url)
            result = tracker.parse_announce_response(raw, received_at=now, vantage_id=vantage_id)
        except (TransportError, tracker.TrackerParseError) as exc:
            log.debug("announce failed for %s via %s: %s", meta.infohash.hex()[:8], vantage_id, exc)
            if now - last_reply_at > dead_time_s:
                return finish(STATUS_ABORTED, "tracker unreachable")
            continue
        except tracker.TrackerError:
            result = AnnounceResult(0, 0, int(interval), [], received_at=now, vantage_id=vantage_id)
        last_reply_at = now
        snap = snapshot_from_result(meta.infohash, result)
        sink(snap)
        snapshot_count += 1
        consecutive_empty = consecutive_empty + 1 if snap.empty else 0
        if consecutive_empty >= empty_needed:
            return finish(STATUS_COMPLETED, None)


def make_prober(
    transport: Transport,
    clock: Clock,
    infohash: bytes,
    piece_count: int,
    peer_id: bytes,
    timeout_s: float = peerwire.DEFAULT_PROBE_TIMEOUT_S,
) -> Callable[[tuple[str, int]], ProbeResult]:
    def prober(endpoint: tuple[str, int]) -> ProbeResult:
        return peerwire.probe(
            transport, endpoint, infohash, piece_count, peer_id,
            timeout_s=timeout_s, now=clock.now(),
        )

    return prober

"""End-to-end drivers: the simulated campaign (feed to terminal status for
every swarm, all in virtual time) and the live monitoring loop.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import feeds, monitor, store, tracker
from .feeds import FeedItem, IngestState, PortalProfile
from .simnet import SimTransport, WorldConfig, generate_world, sim_portal_profile
from .transport import Clock, HttpTransport, Transport, VirtualClock, WallClock

log = logging.getLogger(__name__)


@dataclass
class SimRunResult:
    log_path: Path
    truth_path: Path | None
    torrents_seen: int
    snapshots: int
    world: object = field(repr=False, default=None)
    truth: object = field(repr=False, default=None)


def _process_torrent(
    item: FeedItem,
    first_seen: float,
    transport: Transport,
    clock: Clock,
    limiter: tracker.RateLimiter,
    vantages: list[monitor.Vantage],
    event_log: store.EventLog,
    *,
    numwant: int,
    horizon: float | None,
    first_query_delay_s: float = 0.0,
    id_retry_window_s: float = 0.0,
) -> int:
    """Fetch, identify, and monitor one torrent; returns snapshots taken."""
    event_log.append(store.feed_item_event(first_seen, item))
    try:
        meta = feeds.fetch_torrent(transport, item)
    except feeds.FetchFailed as exc:
        log.warning("fetch failed for %s: %s", item.torrent_url, exc)
        event_log.append(store.fetch_failed_event(clock.now(), item, str(exc)))
        return 0

    clock.sleep_until(first_seen + first_query_delay_s)
    lead = vantages[0]
    decision = limiter.acquire(meta.announce_url, clock.now(), lead.vantage_id, meta.infohash)
    if not decision.proceed:  # only possible if the same infohash re-appeared
        clock.sleep_until(decision.wait_until)
        limiter.acquire(meta.announce_url, clock.now(), lead.vantage_id, meta.infohash)
    _, url = tracker.build_announce(meta, lead.peer_id, port=lead.port, numwant=numwant)
    try:
        first_result = tracker.parse_announce_response(
            transport.fetch(url), received_at=clock.now(), vantage_id=lead.vantage_id
        )
    except Exception as exc:  # noqa: BLE001 - any first-contact failure ends this swarm
        log.warning("first announce failed for %s: %s", item.torrent_url, exc)
        event_log.append(store.fetch_failed_event(clock.now(), item, f"first announce: {exc}"))
        return 0

    prober = monitor.make_prober(transport, clock, meta.infohash, meta.piece_count, lead.peer_id)
    ident, probes = monitor.identify_initial_publisher(
        meta,
        first_result,
        prober,
        item.username,
        published_at=item.published_at,
        first_seen_at=first_seen,
    )
    for probe_result in probes:
        event_log.append(store.probe_event(meta.infohash, probe_result))
    early_snaps = [monitor.snapshot_from_result(meta.infohash, first_result)]
    event_log.append(store.snapshot_event(early_snaps[0]))

    # Optional grace window for swarms whose tracker reported no seeder yet:
    # keep re-announcing (rate-limited) and retry identification.
    deadline = first_seen + id_retry_window_s
    while ident.reason == monitor.REASON_NO_SEED and clock.now() < deadline:
        decision = limiter.acquire(meta.announce_url, clock.now(), lead.vantage_id, meta.infohash)
        if not decision.proceed:
            if decision.wait_until > deadline:
                break
            clock.sleep_until(decision.wait_until)
            continue
        try:
            retry_result = tracker.parse_announce_response(
                transport.fetch(url), received_at=clock.now(), vantage_id=lead.vantage_id
            )
        except Exception:  # noqa: BLE001
            break
        snap = monitor.snapshot_from_result(meta.infohash, retry_result)
        early_snaps.append(snap)
        event_log.append(store.snapshot_event(snap))
        ident, probes = monitor.identify_initial_publisher(
            meta, retry_result, prober, item.username,
            published_at=item.published_at, first_seen_at=first_seen,
        )
        for probe_result in probes:
            event_log.append(store.probe_event(meta.infohash, probe_result))
    event_log.append(store.identification_event(clock.now(), ident, meta, item, first_result))
    snapshots = [0]

    def sink(snap: monitor.SwarmSnapshot) -> None:
        event_log.append(store.snapshot_event(snap))
        snapshots[0] += 1

    status = monitor.run_swarm(
        meta,
        ident,
        limiter,
        sink,
        transport=transport,
        clock=clock,
        vantages=vantages,
        numwant=numwant,
        horizon=horizon,
        initial_snapshots=early_snaps,
    )
    event_log.append(store.terminal_event(status))
    return snapshots[0] + len(early_snaps)


def run_simulation(
    config: WorldConfig,
    log_path: str | Path,
    truth_path: str | Path | None = None,
    *,
    keep_world: bool = False,
) -> SimRunResult:
    """Generate a world and run the whole measurement campaign against it
    in virtual time, sequentially per swarm (swarms don't interact: the
    world is a schedule and the rate limiter is keyed per swarm)."""
    world, truth = generate_world(config)
    profile = sim_portal_profile(config)
    vantages = monitor.make_vantages(config.vantage_count, run_tag=f"sim{config.rng_seed}")
    limiter = tracker.RateLimiter(min_interval_s=config.min_interval_s)
    state = IngestState()
    total = len(truth.torrents)
    snapshots = 0
    seen: list[tuple[FeedItem, float]] = []

    log_path = Path(log_path)
    if log_path.exists():
        log_path.unlink()
    with store.EventLog(log_path) as event_log:
        feed_clock = VirtualClock(config.epoch)
        feed_transport = SimTransport(world, feed_clock)
        t = config.epoch
        while t <= world.horizon and len(seen) < total:
            feed_clock.sleep_until(t)
            for item in feeds.poll(feed_transport, profile, state, now=t):
                seen.append((item, t))
            t += config.feed_poll_interval_s

        for item, first_seen in seen:
            swarm_clock = VirtualClock(first_seen)
            swarm_transport = SimTransport(world, swarm_clock)
            snapshots += _process_torrent(
                item,
                first_seen,
                swarm_transport,
                swarm_clock,
                limiter,
                vantages,
                event_log,
                numwant=config.numwant,
                horizon=world.horizon,
                first_query_delay_s=config.first_query_delay_s,
                id_retry_window_s=config.id_retry_window_s,
            )

        for username, removed_at in sorted(truth.removals.items()):
            event_log.append(store.portal_removal_event(removed_at, profile.portal_id, username))

    if truth_path is not None:
        truth.save(truth_path)
    return SimRunResult(
        log_path=log_path,
        truth_path=Path(truth_path) if truth_path else None,
        torrents_seen=len(seen),
        snapshots=snapshots,
        world=world if keep_world else None,
        truth=truth if keep_world else None,
    )


def run_live_monitor(
    profile: PortalProfile,
    log_path: str | Path,
    *,
    run_for_s: float = 0.0,
    vantage_count: int = 2,
    min_interval_s: float = tracker.DEFAULT_MIN_INTERVAL_S,
    numwant: int = tracker.DEFAULT_NUMWANT,
    state_path: str | Path | None = None,
    max_workers: int = 32,
    transport: Transport | None = None,
    id_retry_window_s: float = 0.0,
) -> int:
    """Live campaign against a real portal: poll the feed, spawn one
    monitoring task per new torrent, stop after run_for_s (0 = until
    interrupted). Returns the number of torrents picked up."""
    transport = transport or HttpTransport()
    clock = WallClock()
    vantages = monitor.make_vantages(vantage_count, run_tag=profile.portal_id)
    limiter = tracker.RateLimiter(min_interval_s=min_interval_s)
    state = IngestState.load(state_path) if state_path and Path(state_path).exists() else IngestState()
    started = clock.now()
    picked = 0
    try:
        with store.EventLog(log_path, sync=True) as event_log, ThreadPoolExecutor(max_workers) as pool:
            pending = []
            while True:
                now = clock.now()
                if run_for_s and now - started >= run_for_s:
                    break
                for item in feeds.poll(transport, profile, state, now=now):
                    picked += 1
                    pending.append(
                        pool.submit(
                            _process_torrent,
                            item,
                            now,
                            transport,
                            clock,
                            limiter,
                            vantages,
                            event_log,
                            numwant=numwant,
                            horizon=(started + run_for_s) if run_for_s else None,
                            first_query_delay_s=profile.first_query_delay_s,
                            id_retry_window_s=id_retry_window_s,
                        )
                    )
                if state_path:
                    state.save(state_path)
                # Bounded runs poll briskly so tests and spot checks finish.
                poll_every = min(profile.poll_interval_s, 2.0) if run_for_s else profile.poll_interval_s
                clock.sleep_until(now + poll_every)
            for future in pending:
                future.result()
    except KeyboardInterrupt:
        log.info("interrupted; state saved")
        if state_path:
            state.save(state_path)
    return picked

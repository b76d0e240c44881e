"""Publisher presence reconstruction from periodically sampled tracker replies.

A tracker reply is a random subset of the swarm, so a publisher's presence
is observed with gaps. The discovery model bounds how many consecutive
queries are needed to see a present peer with a target probability, which
in turn fixes the gap length beyond which the peer is considered offline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

HOUR = 3600.0


def discovery_probability(population: int, sample_size: int, queries: int) -> float:
    """Probability that a present peer appears in at least one of `queries`
    tracker replies, each a random sample of `sample_size` peers out of
    `population`: 1 - (1 - sample_size/population)^queries.
    """
    if population < 1 or sample_size < 0 or queries < 1:
        raise ValueError(
            f"invalid model inputs population={population} "
            f"sample_size={sample_size} queries={queries}"
        )
    if sample_size >= population:
        return 1.0
    return 1.0 - (1.0 - sample_size / population) ** queries


def required_queries(population: int, sample_size: int, target_probability: float) -> int:
    """Smallest number of consecutive queries that discovers a present peer
    with probability >= target_probability."""
    if not 0.0 < target_probability < 1.0:
        raise ValueError(f"target probability {target_probability} not in (0, 1)")
    if sample_size >= population:
        return 1
    if sample_size <= 0:
        raise ValueError("sample_size must be positive when below population")
    miss = 1.0 - sample_size / population
    # Closed form, then nudge across float error at the strict threshold.
    m = max(1, math.ceil(math.log(1.0 - target_probability) / math.log(miss)))
    while discovery_probability(population, sample_size, m) < target_probability:
        m += 1
    while m > 1 and discovery_probability(population, sample_size, m - 1) >= target_probability:
        m -= 1
    return m


@dataclass
class DiscoveryModel:
    """Sampling model that fixes the offline threshold.

    Defaults: a swarm population upper bound of 165 peers, 50 peers per
    tracker reply, 0.99 target discovery probability, 18 minutes between
    consecutive queries. Those defaults derive 13 required queries and a
    4-hour offline threshold (13 * 18 min rounded up to a whole hour).
    """

    population: int = 165
    sample_size: int = 50
    target_probability: float = 0.99
    inter_query_s: float = 18 * 60.0
    threshold_override_s: float | None = None
    queries_needed: int = field(init=False)

    def __post_init__(self) -> None:
        self.queries_needed = required_queries(
            self.population, self.sample_size, self.target_probability
        )
        if self.inter_query_s <= 0:
            raise ValueError("inter_query_s must be positive")

    def offline_threshold_s(self) -> float:
        """Gap length that ends a session: queries_needed * inter_query,
        rounded up to the next whole hour. An explicit override wins."""
        if self.threshold_override_s is not None:
            return float(self.threshold_override_s)
        return math.ceil(self.queries_needed * self.inter_query_s / HOUR) * HOUR


@dataclass
class SessionRecord:
    """One reconstructed presence interval of a publisher in a torrent."""

    publisher_id: str
    infohash: str
    start: float
    end: float
    observation_count: int

    @property
    def duration(self) -> float:
        return self.end - self.start


def reconstruct_sessions(
    observations: list[float],
    threshold_s: float,
    publisher_id: str = "",
    infohash: str = "",
) -> list[SessionRecord]:
    """Greedy segmentation of sorted observation times into sessions.

    A gap >= threshold_s starts a new session. Session bounds are the first
    and last observation inside the segment; no padding is added, so a
    single observation yields a zero-length session.
    """
    if threshold_s <= 0:
        raise ValueError("threshold must be positive")
    sessions: list[SessionRecord] = []
    start = None
    prev = None
    count = 0
    for t in observations:
        if prev is not None and t < prev:
            raise ValueError("observations must be sorted ascending")
        if start is None:
            start, count = t, 1
        elif t - prev >= threshold_s:
            sessions.append(SessionRecord(publisher_id, infohash, start, prev, count))
            start, count = t, 1
        else:
            count += 1
        prev = t
    if start is not None:
        sessions.append(SessionRecord(publisher_id, infohash, start, prev, count))
    return sessions


def seeding_time(sessions: list[SessionRecord]) -> float:
    """Total time a publisher spent in one torrent: sum of session durations."""
    return sum(s.duration for s in sessions)


def parallel_torrents(
    sessions_by_torrent: dict[str, list[SessionRecord]],
    tick_s: float = 60.0,
) -> float:
    """Average number of torrents seeded in parallel.

    The timeline is sampled at tick_s granularity; a tick at time t counts
    a session when start <= t < end (zero-length sessions count at the tick
    containing their start). The average is over ticks where at least one
    torrent is active, so idle stretches do not dilute the number.
    """
    if tick_s <= 0:
        raise ValueError("tick must be positive")
    all_sessions = [s for group in sessions_by_torrent.values() for s in group]
    spans = []
    for s in all_sessions:
        if s.end > s.start:
            lo = math.ceil(s.start / tick_s)
            hi = math.ceil(s.end / tick_s)
        else:
            lo = math.floor(s.start / tick_s)
            hi = lo + 1
        if hi > lo:
            spans.append((lo, hi))
    if not spans:
        return 0.0
    first = min(lo for lo, _ in spans)
    last = max(hi for _, hi in spans)
    # Difference array over tick indices [first, last).
    deltas = [0] * (last - first + 1)
    for lo, hi in spans:
        deltas[lo - first] += 1
        deltas[hi - first] -= 1
    active_ticks = 0
    total = 0
    level = 0
    for d in deltas[:-1]:
        level += d
        if level > 0:
            active_ticks += 1
            total += level
    return total / active_ticks if active_ticks else 0.0


def aggregated_session_time(sessions: list[SessionRecord]) -> float:
    """Measure of the union of session intervals across all torrents;
    overlapping time counts once."""
    intervals = sorted((s.start, s.end) for s in sessions)
    total = 0.0
    cur_start = cur_end = None
    for start, end in intervals:
        if cur_end is None or start > cur_end:
            if cur_end is not None:
                total += cur_end - cur_start
            cur_start, cur_end = start, end
        elif end > cur_end:
            cur_end = end
    if cur_end is not None:
        total += cur_end - cur_start
    return total

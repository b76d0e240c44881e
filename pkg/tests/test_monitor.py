import pytest

from swarmwatch import monitor, peerwire, tracker
from swarmwatch.bencode import TorrentMeta
from swarmwatch.monitor import (
    PublisherIdentification,
    SwarmSnapshot,
    identify_initial_publisher,
    make_vantages,
    run_swarm,
    should_terminate,
)
from swarmwatch.peerwire import ProbeResult
from swarmwatch.tracker import AnnounceResult, RateLimiter, serialize_announce_response
from swarmwatch.transport import TransportError, VirtualClock

IH = bytes(range(20))


def meta(announce="http://t/a"):
    return TorrentMeta(IH, b"x", 8, 131072, 1000000, announce)


def result(seeders, peers, at=100.0):
    return AnnounceResult(seeders, max(0, len(peers) - seeders), 900, peers, received_at=at, vantage_id="v01")


def prober_from(outcomes):
    def prober(endpoint):
        outcome = outcomes.get(endpoint, peerwire.NON_SEED)
        pieces = {peerwire.SEED: 8, peerwire.NON_SEED: 3}.get(outcome)
        return ProbeResult(endpoint, outcome, pieces_have=pieces)

    return prober


class TestIdentify:
    def test_unique_seed_identified(self):
        peers = [(f"10.0.0.{i}", 6881) for i in range(1, 6)]
        prober = prober_from({peers[2]: peerwire.SEED})
        ident, probes = identify_initial_publisher(meta(), result(1, peers), prober, "alice")
        assert ident.ip == "10.0.0.3"
        assert ident.method == monitor.METHOD_BITFIELD
        assert ident.reason is None
        assert len(probes) == 5

    def test_two_seeders_reported(self):
        ident, probes = identify_initial_publisher(meta(), result(2, [("10.0.0.1", 1)]), prober_from({}), "a")
        assert ident.ip is None
        assert ident.reason == monitor.REASON_MULTI_SEED
        assert probes == []

    def test_too_many_peers(self):
        peers = [(f"10.0.1.{i}", 6881) for i in range(25)]
        ident, probes = identify_initial_publisher(meta(), result(1, peers), prober_from({}), "a")
        assert ident.reason == monitor.REASON_TOO_MANY
        assert probes == []

    def test_all_probes_refused_means_nat(self):
        peers = [(f"10.0.0.{i}", 6881) for i in range(1, 6)]
        prober = prober_from({p: peerwire.REFUSED for p in peers})
        ident, _ = identify_initial_publisher(meta(), result(1, peers), prober, "a")
        assert ident.reason == monitor.REASON_NAT

    def test_mixed_refusal_and_leechers_means_nat(self):
        peers = [("10.0.0.1", 1), ("10.0.0.2", 2), ("10.0.0.3", 3)]
        prober = prober_from({peers[0]: peerwire.REFUSED})
        ident, _ = identify_initial_publisher(meta(), result(1, peers), prober, "a")
        assert ident.reason == monitor.REASON_NAT

    def test_stale_count_two_probed_seeds(self):
        peers = [("10.0.0.1", 1), ("10.0.0.2", 2)]
        prober = prober_from({peers[0]: peerwire.SEED, peers[1]: peerwire.SEED})
        ident, _ = identify_initial_publisher(meta(), result(1, peers), prober, "a")
        assert ident.ip is None
        assert ident.reason == monitor.REASON_MULTI_SEED

    def test_no_seed_reported(self):
        ident, _ = identify_initial_publisher(meta(), result(0, [("10.0.0.1", 1)]), prober_from({}), "a")
        assert ident.reason == monitor.REASON_NO_SEED

    def test_responsive_but_no_seed(self):
        peers = [("10.0.0.1", 1), ("10.0.0.2", 2)]
        ident, _ = identify_initial_publisher(meta(), result(1, peers), prober_from({}), "a")
        assert ident.reason == monitor.REASON_NO_SEED

    def test_prepublished_heuristic(self):
        peers = [(f"10.0.1.{i}", 6881) for i in range(25)]
        ident, _ = identify_initial_publisher(
            meta(), result(1, peers), prober_from({}), "a",
            published_at=0.0, first_seen_at=4 * 3600.0,
        )
        assert ident.reason == monitor.REASON_PREPUBLISHED

    def test_username_always_present(self):
        ident, _ = identify_initial_publisher(meta(), result(2, []), prober_from({}), "bob")
        assert ident.username == "bob"


def snap(at, empty, vantage="v01"):
    peers = [] if empty else [("10.0.0.1", 6881)]
    return SwarmSnapshot(IH, at, vantage, 0 if empty else 1, 0, peers)


class TestShouldTerminate:
    def test_ten_trailing_empty(self):
        history = [snap(i, False) for i in range(5)] + [snap(5 + i, True) for i in range(10)]
        assert should_terminate(history) is True

    def test_nine_then_nonempty(self):
        history = [snap(i, True) for i in range(9)] + [snap(9, False)]
        assert should_terminate(history) is False

    def test_insufficient_evidence(self):
        assert should_terminate([snap(i, True) for i in range(9)]) is False

    def test_merged_order_across_vantages(self):
        # Written out of order; merged by time the trailing ten are not all empty.
        history = [snap(10 + i, True, "v01") for i in range(10)]
        history.insert(0, snap(15.5, False, "v02"))
        assert should_terminate(history) is False


class ScriptedTrackerTransport:
    """Announce responses per call index; optionally raises."""

    def __init__(self, script):
        self.script = script
        self.calls = 0
        self.times = []

    def fetch(self, url):
        index = min(self.calls, len(self.script) - 1)
        self.calls += 1
        item = self.script[index]
        if isinstance(item, Exception):
            raise item
        return serialize_announce_response(item)

    def connect(self, ip, port, timeout_s):
        raise TransportError("unused")


def run(transport, vantage_count=1, interval=600.0, horizon=None, dead_time=24 * 3600.0, initial=None):
    clock = VirtualClock(0.0)
    limiter = RateLimiter(min_interval_s=interval)
    sink_out = []
    status = run_swarm(
        meta(),
        PublisherIdentification(IH, "a"),
        limiter,
        sink_out.append,
        transport=transport,
        clock=clock,
        vantages=make_vantages(vantage_count),
        dead_time_s=dead_time,
        horizon=horizon,
        initial_snapshots=initial,
    )
    return status, sink_out


class TestRunSwarm:
    def test_terminates_exactly_on_tenth_empty(self):
        alive = [AnnounceResult(1, 2, 900, [("10.0.0.1", 1)])] * 3
        dead = [AnnounceResult(0, 0, 900, [])] * 30
        status, snaps = run(ScriptedTrackerTransport(alive + dead))
        assert status.status == monitor.STATUS_COMPLETED
        assert [s.empty for s in snaps[-10:]] == [True] * 10
        assert snaps[-11].empty is False
        assert len(snaps) == 13
        assert status.snapshot_count == 13

    def test_counter_resets_on_revival(self):
        script = (
            [AnnounceResult(1, 0, 900, [("10.0.0.1", 1)])]
            + [AnnounceResult(0, 0, 900, [])] * 9
            + [AnnounceResult(1, 0, 900, [("10.0.0.2", 1)])]
            + [AnnounceResult(0, 0, 900, [])] * 10
        )
        status, snaps = run(ScriptedTrackerTransport(script))
        assert len(snaps) == 21

    def test_tracker_always_failing_aborts_after_dead_time(self):
        transport = ScriptedTrackerTransport([TransportError("down")])
        status, snaps = run(transport, dead_time=4 * 3600.0)
        assert status.status == monitor.STATUS_ABORTED
        assert status.reason == "tracker unreachable"
        assert snaps == []

    def test_tracker_error_counts_as_empty_reply(self):
        from swarmwatch.bencode import encode

        class FailureReasonTransport(ScriptedTrackerTransport):
            def fetch(self, url):
                self.calls += 1
                return encode({b"failure reason": b"torrent not found"})

        status, snaps = run(FailureReasonTransport([]))
        assert status.status == monitor.STATUS_COMPLETED
        assert all(s.empty for s in snaps)

    def test_aggregate_cadence_with_three_vantages(self):
        class TimedTransport:
            def __init__(self, clock):
                self.clock = clock
                self.times = []

            def fetch(self, url):
                self.times.append(self.clock.now())
                return serialize_announce_response(AnnounceResult(0, 0, 900, []))

            def connect(self, *a):
                raise TransportError("unused")

        clock = VirtualClock(0.0)
        transport = TimedTransport(clock)
        limiter = RateLimiter(min_interval_s=600.0)
        run_swarm(
            meta(), PublisherIdentification(IH, "a"), limiter, lambda s: None,
            transport=transport, clock=clock, vantages=make_vantages(3),
        )
        gaps = [round(b - a) for a, b in zip(transport.times, transport.times[1:])]
        assert gaps == [200] * (len(gaps))

    def test_rate_limiter_gap_per_vantage(self):
        dead = [AnnounceResult(0, 0, 900, [])] * 40
        clock_times = {}

        class RecordingTransport(ScriptedTrackerTransport):
            pass

        transport = RecordingTransport(dead)
        clock = VirtualClock(0.0)
        limiter = RateLimiter(min_interval_s=600.0)
        collected = []
        run_swarm(
            meta(), PublisherIdentification(IH, "a"), limiter, collected.append,
            transport=transport, clock=clock, vantages=make_vantages(2),
        )
        per_vantage = {}
        for s in collected:
            per_vantage.setdefault(s.vantage_id, []).append(s.observed_at)
        for times in per_vantage.values():
            assert all(b - a >= 600.0 for a, b in zip(times, times[1:]))

    def test_horizon_aborts(self):
        alive = [AnnounceResult(1, 2, 900, [("10.0.0.1", 1)])] * 1000
        status, snaps = run(ScriptedTrackerTransport(alive), horizon=3600.0)
        assert status.status == monitor.STATUS_ABORTED
        assert status.reason == "horizon"

    def test_initial_snapshots_count_toward_termination(self):
        dead = [AnnounceResult(0, 0, 900, [])] * 20
        initial = [snap(0.0, True)] * 4
        status, snaps = run(ScriptedTrackerTransport(dead), initial=initial)
        assert len(snaps) == 6  # 4 carried in + 6 observed = 10 empties


class TestVantages:
    def test_deterministic_and_distinct(self):
        a = make_vantages(3, run_tag="x")
        b = make_vantages(3, run_tag="x")
        assert a == b
        assert len({v.peer_id for v in a}) == 3
        assert all(len(v.peer_id) == 20 for v in a)

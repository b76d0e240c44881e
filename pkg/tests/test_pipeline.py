from collections import defaultdict

import pytest

from swarmwatch import monitor, peerwire, pipeline, store, tracker
from swarmwatch.bencode import encode
from swarmwatch.feeds import FeedItem
from swarmwatch.store import EventLog
from swarmwatch.transport import TransportError, VirtualClock


class TestSimulationInvariants:
    def test_no_silent_drops_one_terminal_per_item(self, exact_run):
        events = exact_run["events"]
        feed_urls = [e.payload["torrent_url"] for e in events if e.kind == store.KIND_FEED_ITEM]
        terminals = [e for e in events if e.kind == store.KIND_TERMINAL]
        identified = {e.payload["infohash"] for e in events if e.kind == store.KIND_IDENTIFICATION}
        assert len(feed_urls) == len(set(feed_urls))
        assert len(terminals) == len(feed_urls)
        assert {t.payload["infohash"] for t in terminals} == identified

    def test_snapshot_stream_per_swarm_ordered_as_written(self, exact_run):
        last_seen = {}
        for event in exact_run["events"]:
            if event.kind != store.KIND_SNAPSHOT:
                continue
            infohash = event.payload["infohash"]
            t = event.payload["observed_at"]
            assert last_seen.get(infohash, float("-inf")) <= t
            last_seen[infohash] = t

    def test_every_query_respects_limiter_in_query_log(self, exact_run):
        world = exact_run["result"].world
        cfg = exact_run["cfg"]
        per_stream = defaultdict(list)
        for t, infohash, query in world.query_log:
            peer_id = query.split("peer_id=", 1)[1].split("&", 1)[0]
            per_stream[(infohash, peer_id)].append(t)
        assert per_stream
        for series in per_stream.values():
            series.sort()
            for a, b in zip(series, series[1:]):
                assert b - a >= cfg.min_interval_s - 1e-6

    def test_simulation_stats(self, exact_run):
        result = exact_run["result"]
        assert result.torrents_seen == len(exact_run["truth"].torrents)
        assert result.snapshots > 0


def feed_item(url="http://p/t/x.torrent"):
    return FeedItem(
        portal_id="p", title="x", category="video", subcategory="", username="alice",
        content_size=1000, torrent_url=url, published_at=0.0,
    )


def torrent_bytes(announce=b"http://t/announce"):
    info = {b"name": b"x.bin", b"piece length": 256, b"pieces": b"\x00" * 80, b"length": 1000}
    return encode({b"announce": announce, b"info": info})


class ScriptedNet:
    """fetch() serves the torrent and a queue of announce results; peers
    answer a full bitfield."""

    def __init__(self, announces, infohash):
        self.announces = list(announces)
        self.infohash = infohash

    def fetch(self, url):
        if url.endswith(".torrent"):
            return torrent_bytes()
        if "/announce" in url:
            if not self.announces:
                return tracker.serialize_announce_response(tracker.AnnounceResult(0, 0, 60, []))
            item = self.announces.pop(0)
            if isinstance(item, Exception):
                raise item
            return tracker.serialize_announce_response(item)
        raise TransportError(f"no route {url}")

    def connect(self, ip, port, timeout_s):
        class SeedConn:
            def __init__(self, infohash):
                self.buffer = b""
                self.infohash = infohash

            def send(self, data):
                ih, _ = peerwire.parse_handshake(data)
                self.buffer = peerwire.build_handshake(ih, b"-XX0000-000000000000")
                self.buffer += peerwire.build_message(peerwire.MSG_BITFIELD, b"\xf0")

            def recv(self, n):
                if not self.buffer:
                    raise TimeoutError()
                chunk, self.buffer = self.buffer[:n], self.buffer[n:]
                return chunk

            def close(self):
                pass

        return SeedConn(self.infohash)


def run_one(net, tmp_path, id_retry_window_s=0.0):
    clock = VirtualClock(0.0)
    limiter = tracker.RateLimiter(min_interval_s=60.0)
    vantages = monitor.make_vantages(1)
    with EventLog(tmp_path / "e.log") as log:
        pipeline._process_torrent(
            feed_item(), 0.0, net, clock, limiter, vantages, log,
            numwant=50, horizon=7200.0, id_retry_window_s=id_retry_window_s,
        )
    return store.load_events(tmp_path / "e.log")


class TestProcessTorrent:
    def test_fetch_failure_records_terminal(self, tmp_path):
        class DeadNet:
            def fetch(self, url):
                raise TransportError("404")

            def connect(self, *a):
                raise TransportError("no")

        clock = VirtualClock(0.0)
        with EventLog(tmp_path / "e.log") as log:
            pipeline._process_torrent(
                feed_item(), 0.0, DeadNet(), clock, tracker.RateLimiter(), monitor.make_vantages(1),
                log, numwant=50, horizon=100.0,
            )
        events = store.load_events(tmp_path / "e.log")
        assert [e.kind for e in events] == [store.KIND_FEED_ITEM, store.KIND_TERMINAL]
        assert events[1].payload["status"] == "fetch_failed"

    def test_identifies_from_first_announce(self, tmp_path):
        from swarmwatch.bencode import parse_metainfo

        infohash = parse_metainfo(torrent_bytes()).infohash
        announces = [tracker.AnnounceResult(1, 0, 60, [("10.0.0.9", 1234)])]
        events = run_one(ScriptedNet(announces, infohash), tmp_path)
        (ident,) = [e for e in events if e.kind == store.KIND_IDENTIFICATION]
        assert ident.payload["ip"] == "10.0.0.9"
        assert ident.payload["method"] == "single_seed_bitfield"

    def test_no_retry_when_window_zero(self, tmp_path):
        announces = [
            tracker.AnnounceResult(0, 1, 60, [("10.0.0.9", 1234)]),
            tracker.AnnounceResult(1, 0, 60, [("10.0.0.9", 1234)]),
        ]
        events = run_one(ScriptedNet(announces, None), tmp_path)
        (ident,) = [e for e in events if e.kind == store.KIND_IDENTIFICATION]
        assert ident.payload["ip"] is None
        assert ident.payload["reason"] == "no_seed_reported"

    def test_retry_window_recovers_late_seeder(self, tmp_path):
        announces = [
            tracker.AnnounceResult(0, 1, 60, [("10.0.0.9", 1234)]),
            tracker.AnnounceResult(1, 0, 60, [("10.0.0.9", 1234)]),
        ]
        events = run_one(ScriptedNet(announces, None), tmp_path, id_retry_window_s=300.0)
        (ident,) = [e for e in events if e.kind == store.KIND_IDENTIFICATION]
        assert ident.payload["ip"] == "10.0.0.9"
        assert ident.payload["method"] == "single_seed_bitfield"

    def test_first_announce_transport_failure(self, tmp_path):
        events = run_one(ScriptedNet([TransportError("boom")], None), tmp_path)
        assert [e.kind for e in events] == [store.KIND_FEED_ITEM, store.KIND_TERMINAL]
        assert "first announce" in events[1].payload["reason"]


class TestSamplingOption:
    def test_deterministic_publisher_sample(self, exact_run):
        from swarmwatch import analytics
        from swarmwatch.sessions import DiscoveryModel

        observations = analytics.collect_observations(exact_run["events"])
        full = analytics.compute_seeding_behavior(observations, DiscoveryModel().offline_threshold_s())
        sampled = analytics.compute_seeding_behavior(
            observations, DiscoveryModel().offline_threshold_s(), publisher_sample=10, sample_seed=4
        )
        again = analytics.compute_seeding_behavior(
            observations, DiscoveryModel().offline_threshold_s(), publisher_sample=10, sample_seed=4
        )
        assert len(sampled) == 10
        assert set(sampled) <= set(full)
        assert set(sampled) == set(again)


class TestWorldAdvance:
    def test_advance_moves_clock_and_samples_follow(self):
        from swarmwatch.simnet import WorldConfig, generate_world

        cfg = WorldConfig(
            rng_seed=33, publisher_count=5, top_tier_size=1, zipf_max_count=2,
            fake_publisher_count=0, timeline_days=0.2, downloads_mean_regular=4,
            downloads_mean_top=4, seed_hours_regular=(2.0, 3.0),
        )
        world, truth = generate_world(cfg)
        ih, torrent = next(iter(truth.torrents.items()))
        world.now = torrent.birth
        alive = world.announce(ih, numwant=200)
        assert any(p == (torrent.publisher_ip, torrent.publisher_port) for p in alive.peers)
        world.advance(torrent.death - torrent.birth + 3600.0)
        assert world.announce(ih, numwant=200).peers == []
        with pytest.raises(ValueError):
            world.advance(0)

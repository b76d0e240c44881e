import random

import pytest

from swarmwatch import analytics, geoip, store
from swarmwatch.analytics import (
    PublisherRecord,
    TorrentRef,
    class_aggregates,
    classify_multi_ip,
    contribution_curve,
    extract_urls,
    flag_fake,
    group_breakdown,
    longitudinal,
    popularity_stats,
    rank_top,
    resolve_identities,
)

from conftest import FIXTURES


def record(username, count, downloads_per_torrent=0, ips=(), category="video", first=0.0, spacing=86400.0):
    torrents = [
        TorrentRef(f"{username}-{i:04d}", f"t{i}", category, "", 100, first + i * spacing, f"u{i}")
        for i in range(count)
    ]
    rec = PublisherRecord(username=username, ips=set(ips), torrents=torrents)
    for t in torrents:
        rec.downloader_counts[t.infohash] = downloads_per_torrent
    return rec


def records_from_counts(counts):
    return {f"p{i:04d}": record(f"p{i:04d}", c) for i, c in enumerate(counts)}


class TestResolveIdentities:
    def test_matches_ground_truth_exactly(self, exact_run):
        truth, events = exact_run["truth"], exact_run["events"]
        records = resolve_identities(events)
        assert len(records) == 50
        assert set(records) == set(truth.publishers)
        for username, rec in records.items():
            pub = truth.publishers[username]
            assert {t.infohash for t in rec.torrents} == set(pub.torrents)
            used_ips = {truth.torrents[ih].publisher_ip for ih in pub.torrents}
            assert rec.ips == used_ips
            for t in rec.torrents:
                assert rec.downloader_counts[t.infohash] == len(truth.torrents[t.infohash].downloader_ips())
                assert t.category == truth.torrents[t.infohash].category

    def test_no_ip_when_never_identified(self):
        events = [
            store.EventRecord(0.0, store.KIND_IDENTIFICATION, {
                "infohash": "aa", "username": "u", "ip": None, "method": "none",
                "reason": "multi_seed", "torrent_url": "x",
            })
        ]
        records = resolve_identities(events)
        assert records["u"].ips == set()

    def test_shared_downloader_counted_per_torrent(self):
        events = [
            store.EventRecord(0.0, store.KIND_IDENTIFICATION,
                              {"infohash": ih, "username": "u", "ip": None, "method": "none",
                               "reason": None, "torrent_url": ih})
            for ih in ("aa", "bb")
        ] + [
            store.EventRecord(1.0, store.KIND_SNAPSHOT,
                              {"infohash": ih, "observed_at": 1.0, "vantage_id": "v01",
                               "seeders": 0, "leechers": 1, "peers": [["10.9.9.9", 1]], "empty": False})
            for ih in ("aa", "bb")
        ]
        rec = resolve_identities(events)["u"]
        assert rec.downloader_counts == {"aa": 1, "bb": 1}
        assert rec.downloads_attracted == 2

    def test_vantage_ips_excluded(self):
        events = [
            store.EventRecord(0.0, store.KIND_IDENTIFICATION,
                              {"infohash": "aa", "username": "u", "ip": None, "method": "none",
                               "reason": None, "torrent_url": "x"}),
            store.EventRecord(1.0, store.KIND_SNAPSHOT,
                              {"infohash": "aa", "observed_at": 1.0, "vantage_id": "v01",
                               "seeders": 0, "leechers": 2,
                               "peers": [["10.9.9.9", 1], ["192.0.2.1", 2]], "empty": False}),
        ]
        rec = resolve_identities(events, vantage_ips=frozenset({"192.0.2.1"}))["u"]
        assert rec.downloads_attracted == 1


class TestFlagFake:
    def test_ip_with_many_usernames(self):
        records = {f"u{i}": record(f"u{i}", 1, ips=["10.2.0.1"]) for i in range(8)}
        records["honest"] = record("honest", 3, ips=["10.16.0.1", "10.16.0.2", "10.16.0.3"])
        flag_fake(records, username_threshold=5)
        assert all(records[f"u{i}"].fake for i in range(8))
        assert not records["honest"].fake

    def test_below_threshold_not_flagged(self):
        records = {f"u{i}": record(f"u{i}", 1, ips=["10.2.0.1"]) for i in range(2)}
        flag_fake(records, username_threshold=5)
        assert not any(r.fake for r in records.values())

    def test_portal_removal_flags(self):
        records = {"u": record("u", 1)}
        records["u"].removed_by_portal = True
        flag_fake(records)
        assert records["u"].fake

    def test_threshold_validation(self):
        with pytest.raises(ValueError):
            flag_fake({}, username_threshold=1)

    def test_idempotent_and_order_independent(self):
        rng = random.Random(8)
        base = {f"u{i}": record(f"u{i}", 1, ips=[f"10.2.0.{i % 3}"]) for i in range(12)}
        flag_fake(base)
        first = {u: r.fake for u, r in base.items()}
        flag_fake(base)
        assert {u: r.fake for u, r in base.items()} == first
        order = list(base)
        rng.shuffle(order)
        shuffled = {u: base[u] for u in order}
        flag_fake(shuffled)
        assert {u: r.fake for u, r in shuffled.items()} == first


class TestRankTop:
    def test_fake_removed_from_top_k(self):
        records = records_from_counts([50 - i for i in range(100)])
        for i in range(16):
            records[f"p{i:04d}"].fake = True
        top = rank_top(records, k=100)
        assert len(top) == 84
        assert all(not r.fake for r in top)

    def test_k_larger_than_population(self):
        records = records_from_counts([3, 2, 1])
        records["p0000"].fake = True
        top = rank_top(records, k=100)
        assert {r.username for r in top} == {"p0001", "p0002"}

    def test_matches_bruteforce_ordering(self):
        rng = random.Random(9)
        for _ in range(30):
            records = {}
            for i in range(rng.randint(1, 40)):
                rec = record(f"p{i:04d}", rng.randint(1, 9), downloads_per_torrent=rng.randint(0, 30))
                records[rec.username] = rec
            k = rng.randint(1, 15)
            expected = sorted(
                records.values(),
                key=lambda r: (-r.torrent_count, -r.downloads_attracted, r.username),
            )[:k]
            assert [r.username for r in rank_top(records, k=k)] == [r.username for r in expected]

    def test_top_flag_set(self):
        records = records_from_counts([5, 1])
        rank_top(records, k=1)
        assert records["p0000"].top and not records["p0001"].top


class TestContributionCurve:
    def test_quarter_point(self):
        curve = dict(contribution_curve(records_from_counts([5, 3, 1, 1])))
        assert curve[25] == pytest.approx(0.5)
        assert curve[100] == pytest.approx(1.0)

    def test_uniform_is_diagonal(self):
        curve = contribution_curve(records_from_counts([2] * 100))
        for x, share in curve:
            assert share == pytest.approx(x / 100)

    def test_non_decreasing_reaches_one(self):
        rng = random.Random(10)
        for _ in range(50):
            counts = [rng.randint(1, 50) for _ in range(rng.randint(1, 300))]
            curve = contribution_curve(records_from_counts(counts))
            shares = [s for _, s in curve]
            assert all(a <= b + 1e-12 for a, b in zip(shares, shares[1:]))
            assert shares[-1] == pytest.approx(1.0)

    def test_matches_bruteforce_oracle_on_random_instances(self):
        rng = random.Random(11)
        for _ in range(100):
            counts = [rng.randint(1, 100) for _ in range(rng.randint(1, 500))]
            records = records_from_counts(counts)
            curve = contribution_curve(records)
            ordered = sorted(counts, reverse=True)
            total = sum(ordered)
            for x, share in curve:
                k = len(ordered) * x // 100
                assert share == pytest.approx(sum(ordered[:k]) / total)

    def test_zipf_fixture_top3_percent(self):
        from swarmwatch.simnet import WorldConfig, generate_world

        cfg = WorldConfig.load(FIXTURES / "world_skew.json")
        _, truth = generate_world(cfg)
        records = records_from_counts([len(p.torrents) for p in truth.publishers.values()])
        curve = dict(contribution_curve(records))
        assert abs(curve[3] - 0.40) <= 0.02


class TestGeoLookup:
    def test_fixture_row(self, tmp_path):
        path = tmp_path / "geo.csv"
        path.write_text("10.0.0.0/8,SimHost,hosting,FR,Roubaix\n")
        table = geoip.GeoIpTable.load(path)
        info = table.lookup("10.1.2.3")
        assert (info.isp_name, info.isp_type, info.country, info.city) == ("SimHost", "hosting", "FR", "Roubaix")

    def test_unknown_when_uncovered(self, geo_table):
        assert geo_table.lookup("203.0.113.9").isp_type == geoip.UNKNOWN

    def test_longest_prefix_wins(self, tmp_path):
        path = tmp_path / "geo.csv"
        path.write_text("10.0.0.0/8,Wide,commercial,US,Denver\n10.1.0.0/16,Narrow,hosting,FR,Roubaix\n")
        table = geoip.GeoIpTable.load(path)
        assert table.lookup("10.1.9.9").isp_name == "Narrow"
        assert table.lookup("10.2.9.9").isp_name == "Wide"

    def test_malformed_rows_rejected(self, tmp_path):
        path = tmp_path / "geo.csv"
        path.write_text("not-a-cidr,X,hosting,FR,Paris\n")
        with pytest.raises(ValueError):
            geoip.GeoIpTable.load(path)
        path.write_text("10.0.0.0/8,X,mystery,FR,Paris\n")
        with pytest.raises(ValueError):
            geoip.GeoIpTable.load(path)


class TestClassifyMultiIp:
    def test_cases(self, geo_table):
        hosting3 = record("a", 1, ips=["10.1.0.1", "10.1.0.2", "10.2.0.1"])
        assert classify_multi_ip(hosting3, geo_table) == analytics.CASE_FEW_HOSTING

        one_isp = record("b", 1, ips=[f"10.16.0.{i}" for i in range(1, 11)])
        assert classify_multi_ip(one_isp, geo_table) == analytics.CASE_SINGLE_COMMERCIAL

        multi_isp = record("c", 1, ips=["10.16.0.1", "10.17.0.1", "10.18.0.1", "10.18.0.2", "10.19.0.1"])
        assert classify_multi_ip(multi_isp, geo_table) == analytics.CASE_MULTI_COMMERCIAL

        single = record("d", 1, ips=["10.16.0.1"])
        assert classify_multi_ip(single, geo_table) == analytics.CASE_SINGLE_IP

        mixed_mostly_hosting = record("e", 1, ips=["10.1.0.1", "10.1.0.2", "10.16.0.1"])
        assert classify_multi_ip(mixed_mostly_hosting, geo_table) == analytics.CASE_FEW_HOSTING

        mixed_mostly_commercial = record("f", 1, ips=["10.1.0.1", "10.16.0.1", "10.17.0.1"])
        assert classify_multi_ip(mixed_mostly_commercial, geo_table) == analytics.CASE_MULTI_COMMERCIAL


class TestPopularityStats:
    def test_nearest_rank(self):
        group = [record(f"p{i}", 1, downloads_per_torrent=d) for i, d in enumerate([2, 4, 8, 100])]
        assert popularity_stats(group) == (2, 4, 8)

    def test_single_publisher(self):
        group = [record("p", 2, downloads_per_torrent=7)]
        assert popularity_stats(group) == (7, 7, 7)

    def test_empty_group(self):
        with pytest.raises(ValueError):
            popularity_stats([])

    def test_matches_bruteforce_percentiles(self):
        import math

        rng = random.Random(12)
        for _ in range(50):
            group = [
                record(f"p{i}", rng.randint(1, 4), downloads_per_torrent=rng.randint(0, 500))
                for i in range(rng.randint(1, 80))
            ]
            means = sorted(r.mean_downloaders_per_torrent() for r in group)
            expected = tuple(means[max(0, math.ceil(q * len(means)) - 1)] for q in (0.25, 0.5, 0.75))
            assert popularity_stats(group) == expected


class TestGroupBreakdown:
    def test_fractions(self):
        group = [record("p", 3, category="video"), record("q", 1, category="audio")]
        out = group_breakdown({"All": group})
        assert out["All"] == {"video": 0.75, "audio": 0.25}

    def test_blank_category_bucketed_unknown(self):
        out = group_breakdown({"g": [record("p", 2, category="")]})
        assert out["g"] == {"unknown": 1.0}

    def test_simnet_matches_generator_mix(self, exact_run):
        truth = exact_run["truth"]
        records = resolve_identities(exact_run["events"])
        out = group_breakdown({"All": list(records.values())})["All"]
        expected = {}
        for t in truth.torrents.values():
            expected[t.category] = expected.get(t.category, 0) + 1
        total = sum(expected.values())
        for category, count in expected.items():
            assert out[category] == pytest.approx(count / total)


class TestExtractUrls:
    def test_filename_channel(self):
        found = extract_urls(name="movie-divxatope.com.avi")
        assert set(found) == {"divxatope.com"}
        assert found["divxatope.com"] == {"filename"}

    def test_textbox_channel(self):
        found = extract_urls(description="Visit www.ultratorrents.com for more")
        assert set(found) == {"ultratorrents.com"}
        assert found["ultratorrents.com"] == {"textbox"}

    def test_no_domains(self):
        assert extract_urls(name="plain file v1.2", description="nothing here") == {}

    def test_bundled_and_scheme(self):
        found = extract_urls(
            name="x", description="http://tracker-zone.net/path?q=1",
            bundled_filenames=["visit-best-site.org.txt"],
        )
        assert found["zone.net"] == {"textbox"}
        assert found["site.org"] == {"bundled_file"}

    def test_dedup_and_lowercase(self):
        found = extract_urls(name="A-EXAMPLE.COM.mkv", description="see Example.com today")
        assert set(found) == {"example.com"}
        assert found["example.com"] == {"filename", "textbox"}


class TestLongitudinal:
    def test_basic(self):
        rec = record("p", 60, first=1262304000.0, spacing=30 * 86400.0 / 59)
        lifetime, rate = longitudinal(rec)
        assert lifetime == 30
        assert rate == pytest.approx(2.0)

    def test_single_publication(self):
        rec = record("p", 1)
        assert longitudinal(rec) == (1, 1.0)

    def test_requires_publications(self):
        with pytest.raises(ValueError):
            longitudinal(PublisherRecord(username="empty"))


class TestClassAggregates:
    def test_all_one_class(self):
        records = records_from_counts([3, 2])
        for r in records.values():
            r.business_class = "bt_portal"
            for t in r.torrents:
                r.downloader_counts[t.infohash] = 5
        out = class_aggregates(records)
        assert out["bt_portal"] == (pytest.approx(1.0), pytest.approx(1.0))

    def test_unannotated_goes_unclassified(self):
        out = class_aggregates(records_from_counts([1, 1]))
        assert set(out) == {"unclassified"}

    def test_targets_world_hits_configured_shares(self):
        from swarmwatch.simnet import WorldConfig, generate_world

        cfg = WorldConfig(
            rng_seed=13,
            publisher_count=220,
            top_tier_size=40,
            zipf_exponent=0.6,
            zipf_max_count=16,
            fake_publisher_count=1,
            fake_usernames_per_ip=8,
            fake_torrents_per_username=4,
            downloads_mean_regular=20.0,
            downloads_mean_fake=6.0,
            class_share_targets={"bt_portal": [0.18, 0.29], "other_web": [0.08, 0.11]},
            timeline_days=3.0,
        )
        _, truth = generate_world(cfg)
        records = {}
        for username, pub in truth.publishers.items():
            rec = record(username, len(pub.torrents))
            rec.business_class = pub.business_class
            for ih, t in zip([t.infohash for t in rec.torrents], pub.torrents):
                rec.downloader_counts[ih] = len(truth.torrents[t].downloader_ips())
            records[username] = rec
        out = class_aggregates(records)
        content, downloads = out["bt_portal"]
        assert abs(content - 0.18) <= 0.02
        assert abs(downloads - 0.29) <= 0.02
        content, downloads = out["other_web"]
        assert abs(content - 0.08) <= 0.02
        assert abs(downloads - 0.11) <= 0.02


class TestGroups:
    def test_hp_ci_partition_Top(self, geo_table):
        records = {}
        for i in range(30):
            pool = "10.1.0" if i % 2 == 0 else "10.16.0"
            records[f"p{i:04d}"] = record(f"p{i:04d}", 5, ips=[f"{pool}.{i}"])
        groups = analytics.make_groups(records, geo_table, top_k=10)
        assert len(groups[analytics.GROUP_TOP]) == 10
        hp = {r.username for r in groups[analytics.GROUP_TOP_HP]}
        ci = {r.username for r in groups[analytics.GROUP_TOP_CI]}
        top = {r.username for r in groups[analytics.GROUP_TOP]}
        assert hp | ci == top
        assert not (hp & ci)

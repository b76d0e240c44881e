import pathlib

import pytest

from swarmwatch import geoip, pipeline, store
from swarmwatch.simnet import WorldConfig

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# Independently computed digests (sha1sum(1)); see fixtures/single_seed.torrent.
SINGLE_SEED_INFOHASH = "7ce8740e05c938c9d67a2f8d33f7bb55f7c17f39"
SHA1_OF_DE = "600ccd1b71569232d01d110bc63e906beab04d8c"


@pytest.fixture(scope="session")
def geo_table():
    return geoip.GeoIpTable.load(FIXTURES / "geoip_sim.csv")


@pytest.fixture(scope="session")
def accept_cfg():
    return WorldConfig.load(FIXTURES / "world_accept.json")


@pytest.fixture(scope="session")
def accept_run(accept_cfg, tmp_path_factory):
    """One full campaign on the shipped 500-torrent world; shared by the
    acceptance criteria and the heavier integration tests."""
    import time

    out = tmp_path_factory.mktemp("accept")
    started = time.perf_counter()
    result = pipeline.run_simulation(
        accept_cfg, out / "events.log", out / "truth.jsonl", keep_world=True
    )
    elapsed = time.perf_counter() - started
    events = store.load_events(result.log_path)
    return {
        "cfg": accept_cfg,
        "result": result,
        "truth": result.truth,
        "events": events,
        "log_path": result.log_path,
        "truth_path": result.truth_path,
        "run_seconds": elapsed,
    }


def exact_world_config(seed: int = 50) -> WorldConfig:
    """A world tuned for loss-free observation: swarms stay non-empty from
    birth to death, populations stay below the reply size, and every peer
    session spans multiple polls, so analytics equal ground truth exactly."""
    return WorldConfig(
        rng_seed=seed,
        timeline_days=1.5,
        publisher_count=50,
        top_tier_size=8,
        zipf_exponent=0.6,
        zipf_max_count=4,
        fake_publisher_count=0,
        nat_fraction=0.0,
        nat_leecher_fraction=0.0,
        extra_seed_fraction=0.0,
        prepublished_fraction=0.0,
        peer_session_mean_s=3600.0,
        peer_session_min_s=1500.0,
        completion_fraction=0.2,
        arrival_window_hours=6.0,
        downloads_mean_regular=6.0,
        downloads_mean_top=15.0,
        seed_hours_regular=(8.0, 12.0),
        seed_hours_top_hp=(10.0, 14.0),
        seed_hours_top_ci=(10.0, 14.0),
        multi_session_fraction=0.0,
        vantage_count=2,
        min_interval_s=900.0,
        feed_poll_interval_s=60.0,
    )


@pytest.fixture(scope="session")
def exact_run(tmp_path_factory):
    cfg = exact_world_config()
    out = tmp_path_factory.mktemp("exact")
    result = pipeline.run_simulation(cfg, out / "events.log", out / "truth.jsonl", keep_world=True)
    return {
        "cfg": cfg,
        "result": result,
        "truth": result.truth,
        "events": store.load_events(result.log_path),
        "log_path": result.log_path,
    }

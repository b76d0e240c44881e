"""Deterministic swarm simulator: generated worlds with ground truth,
served through the same transport interface the live monitor uses."""

from .config import WorldConfig, ConfigError
from .generate import (
    ANNOUNCE_URL,
    FEED_URL,
    PORTAL_ID,
    generate_world,
    geoip_rows,
    write_geoip_csv,
)
from .model import GroundTruth, GtPublisher, GtSession, GtStint, GtTorrent
from .world import (
    SimPeerConnection,
    SimTransport,
    SwarmSim,
    World,
    build_static_world,
    discovery_trials,
    sim_portal_profile,
)

__all__ = [
    "ANNOUNCE_URL",
    "FEED_URL",
    "PORTAL_ID",
    "ConfigError",
    "GroundTruth",
    "GtPublisher",
    "GtSession",
    "GtStint",
    "GtTorrent",
    "SimPeerConnection",
    "SimTransport",
    "SwarmSim",
    "World",
    "WorldConfig",
    "build_static_world",
    "discovery_trials",
    "generate_world",
    "geoip_rows",
    "sim_portal_profile",
    "write_geoip_csv",
]

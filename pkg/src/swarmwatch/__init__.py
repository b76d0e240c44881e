"""swarmwatch: measurement pipeline for BitTorrent content publishers.

Portal RSS ingestion, tracker polling, peer-wire seeder probes, session
reconstruction from sampled observations, publisher analytics, and a
deterministic swarm simulator that provides ground truth for all of it.
"""

from .bencode import TorrentMeta, decode, encode, infohash, parse_metainfo
from .sessions import (
    DiscoveryModel,
    SessionRecord,
    aggregated_session_time,
    discovery_probability,
    parallel_torrents,
    reconstruct_sessions,
    required_queries,
    seeding_time,
)

__version__ = "0.1.0"

__all__ = [
    "DiscoveryModel",
    "SessionRecord",
    "TorrentMeta",
    "aggregated_session_time",
    "decode",
    "discovery_probability",
    "encode",
    "infohash",
    "parallel_torrents",
    "parse_metainfo",
    "reconstruct_sessions",
    "required_queries",
    "seeding_time",
    "__version__",
]

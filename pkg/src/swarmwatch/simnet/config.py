"""World configuration for the deterministic swarm simulator.

The seed fully determines the generated world: same config + seed means
byte-identical ground truth and, through the simulated transport, an
identical event stream.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

# Virtual time origin: 2010-04-06 00:00:00 UTC. Purely cosmetic (feed
# timestamps look like real dates); nothing depends on the wall clock.
DEFAULT_EPOCH = 1270512000.0


class ConfigError(ValueError):
    pass


def _default_class_mix() -> dict[str, float]:
    return {"bt_portal": 0.26, "other_web": 0.24, "altruistic": 0.50}


def _default_category_mix() -> dict[str, float]:
    return {"video": 0.45, "audio": 0.20, "software": 0.15, "games": 0.10, "books": 0.10}


def _default_fake_category_mix() -> dict[str, float]:
    return {"video": 0.70, "software": 0.30}


@dataclass
class WorldConfig:
    rng_seed: int = 1
    epoch: float = DEFAULT_EPOCH
    timeline_days: float = 10.0  # window in which honest torrents are born

    # Honest publishers. The first top_tier_size publishers follow the head
    # of the count distribution and get top-publisher behavior.
    publisher_count: int = 60
    top_tier_size: int = 10
    content_counts: list[int] | None = None  # explicit per-publisher counts
    zipf_exponent: float = 1.05
    zipf_max_count: int = 12
    content_total_target: int | None = None  # pad/trim tail counts to hit this

    # Fake publishers: one entity per IP, many throwaway usernames each.
    fake_publisher_count: int = 1
    fake_usernames_per_ip: int = 8
    fake_torrents_per_username: int = 4
    fake_birth_window_days: float = 3.0
    fake_seed_days: tuple[float, float] = (10.0, 12.0)
    removal_delay_hours: float = 48.0  # portal pulls fake usernames after this

    # Swarm shape.
    nat_fraction: float = 0.05  # honest publishers behind NAT
    nat_leecher_fraction: float = 0.2
    extra_seed_fraction: float = 0.0  # torrents born with a second seed
    prepublished_fraction: float = 0.0  # torrents that surface late and big
    prepublished_age_hours: tuple[float, float] = (4.0, 8.0)
    swarm_population_cap: int = 165
    peer_session_mean_s: float = 2.5 * 3600
    peer_session_min_s: float = 1200.0
    completion_fraction: float = 0.25  # leechers that finish and stay as seeds
    completion_hours: tuple[float, float] = (1.0, 3.0)
    arrival_window_hours: float = 36.0
    fake_arrival_window_hours: float = 24.0

    # Popularity: expected unique downloaders per torrent by tier.
    downloads_mean_regular: float = 18.0
    downloads_mean_top: float = 160.0
    downloads_mean_fake: float = 5.0

    # Seeding behavior by tier (hours, uniform ranges).
    seed_hours_regular: tuple[float, float] = (2.0, 6.0)
    seed_hours_top_hp: tuple[float, float] = (36.0, 60.0)
    seed_hours_top_ci: tuple[float, float] = (8.0, 16.0)
    multi_session_fraction: float = 0.3  # top pairs with a second session
    session_gap_hours: tuple[float, float] = (7.0, 12.0)

    # Identity and classes.
    top_hosting_fraction: float = 0.45
    business_class_mix: dict[str, float] = field(default_factory=_default_class_mix)
    class_share_targets: dict[str, list[float]] | None = None  # class -> [content, downloads] shares
    category_mix: dict[str, float] = field(default_factory=_default_category_mix)
    fake_category_mix: dict[str, float] = field(default_factory=_default_fake_category_mix)

    # Tracker and crawler knobs.
    tracker_sample_size: int = 50  # peers per reply, regardless of numwant
    numwant: int = 200
    vantage_count: int = 2
    min_interval_s: float = 600.0
    feed_poll_interval_s: float = 600.0
    feed_window: int = 80
    first_query_delay_s: float = 0.0
    id_retry_window_s: float = 0.0  # keep retrying identification while no seeder reported

    def __post_init__(self) -> None:
        for name in (
            "nat_fraction",
            "nat_leecher_fraction",
            "extra_seed_fraction",
            "prepublished_fraction",
            "completion_fraction",
            "multi_session_fraction",
            "top_hosting_fraction",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {value}")
        if self.publisher_count < 1:
            raise ConfigError("publisher_count must be >= 1")
        if self.top_tier_size > self.publisher_count:
            raise ConfigError("top_tier_size cannot exceed publisher_count")
        if self.content_counts is not None and len(self.content_counts) != self.publisher_count:
            raise ConfigError("content_counts length must equal publisher_count")
        if self.tracker_sample_size < 1 or self.swarm_population_cap < 1:
            raise ConfigError("tracker_sample_size and swarm_population_cap must be >= 1")
        if self.vantage_count < 1:
            raise ConfigError("vantage_count must be >= 1")
        if abs(sum(self.business_class_mix.values()) - 1.0) > 1e-6:
            raise ConfigError("business_class_mix must sum to 1")
        if abs(sum(self.category_mix.values()) - 1.0) > 1e-6:
            raise ConfigError("category_mix must sum to 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, raw: dict) -> "WorldConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown world config keys: {sorted(unknown)}")
        coerced = dict(raw)
        for name in (
            "fake_seed_days",
            "prepublished_age_hours",
            "completion_hours",
            "seed_hours_regular",
            "seed_hours_top_hp",
            "seed_hours_top_ci",
            "session_gap_hours",
        ):
            if name in coerced and isinstance(coerced[name], list):
                coerced[name] = tuple(coerced[name])
        return cls(**coerced)

    @classmethod
    def load(cls, path: str | Path) -> "WorldConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

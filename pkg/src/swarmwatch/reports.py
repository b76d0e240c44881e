"""Analysis reports: delimited datasets plus rendered figures.

`analyze` replays an event log into publisher records, groups, and session
metrics, then writes a report directory: CSV/JSON files with stable column
order and sorting (byte-identical for identical logs) and PNG figures for
the headline distributions.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from . import analytics, geoip, store
from .analytics import (
    GROUP_ALL,
    GROUP_FAKE,
    GROUP_TOP,
    GROUP_TOP_CI,
    GROUP_TOP_HP,
    PublisherRecord,
    SeedingBehavior,
)
from .sessions import DiscoveryModel

GROUP_ORDER = [GROUP_ALL, GROUP_FAKE, GROUP_TOP, GROUP_TOP_HP, GROUP_TOP_CI]

HOUR = 3600.0


@dataclass
class AnalysisResult:
    records: dict[str, PublisherRecord]
    groups: dict[str, list[PublisherRecord]]
    behaviors: dict[str, SeedingBehavior]
    model: DiscoveryModel
    report_dir: Path
    files: list[str] = field(default_factory=list)


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def analyze(
    events: list[store.EventRecord],
    report_dir: str | Path,
    *,
    geo: geoip.GeoIpTable = geoip.EMPTY_TABLE,
    model: DiscoveryModel | None = None,
    classes: dict[str, str] | None = None,
    vantage_ips: frozenset[str] = frozenset(),
    top_k: int = analytics.TOP_K,
    fake_threshold: int = analytics.FAKE_USERNAME_THRESHOLD,
    figures: bool = True,
) -> AnalysisResult:
    model = model or DiscoveryModel()
    report_dir = Path(report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)

    records = analytics.resolve_identities(events, vantage_ips=vantage_ips)
    if classes:
        for username, label in classes.items():
            if username in records:
                records[username].business_class = label
    groups = analytics.make_groups(records, geo, top_k=top_k, fake_threshold=fake_threshold)
    for record in records.values():
        analytics.classify_multi_ip(record, geo)
        if record.ips:
            record.isp_class = analytics.publisher_isp_class(record, geo)
    observations = analytics.collect_observations(events)
    behaviors = analytics.compute_seeding_behavior(observations, model.offline_threshold_s())

    result = AnalysisResult(records, groups, behaviors, model, report_dir)
    _write_publishers_csv(result)
    _write_contribution_csv(result)
    _write_group_stats_csv(result)
    _write_category_csv(result)
    _write_class_csv(result)
    _write_sessions_csv(result)
    _write_summary_json(result)
    if figures:
        render_figures(result)
    return result


def _behavior_columns(result: AnalysisResult, record: PublisherRecord) -> tuple[str, str, str]:
    behavior = result.behaviors.get(record.username)
    if behavior is None:
        return "", "", ""
    return (
        _fmt(behavior.mean_seeding_time / HOUR),
        _fmt(behavior.parallel_torrents),
        _fmt(behavior.aggregated_session_time / HOUR),
    )


def _write_publishers_csv(result: AnalysisResult) -> None:
    rows = []
    for username in sorted(result.records):
        record = result.records[username]
        lifetime, rate = analytics.longitudinal(record)
        seeding, parallel, aggregated = _behavior_columns(result, record)
        rows.append(
            [
                username,
                record.torrent_count,
                record.downloads_attracted,
                _fmt(record.mean_downloaders_per_torrent()),
                len(record.ips),
                ";".join(sorted(record.ips)),
                record.isp_class,
                record.multi_ip_case,
                int(record.fake),
                int(record.top),
                int(record.removed_by_portal),
                record.business_class or "",
                lifetime,
                _fmt(rate),
                ";".join(sorted(record.promoted_urls)),
                seeding,
                parallel,
                aggregated,
            ]
        )
    _write_csv(
        result.report_dir / "publishers.csv",
        [
            "username", "torrent_count", "downloads_attracted", "mean_downloaders_per_torrent",
            "ip_count", "ips", "isp_class", "multi_ip_case", "fake", "top", "removed_by_portal",
            "business_class", "lifetime_days", "publish_rate_per_day", "promoted_urls",
            "mean_seeding_time_h", "parallel_torrents", "aggregated_session_time_h",
        ],
        rows,
    )
    result.files.append("publishers.csv")


def _write_contribution_csv(result: AnalysisResult) -> None:
    curve = analytics.contribution_curve(result.records)
    _write_csv(
        result.report_dir / "contribution_curve.csv",
        ["top_percent", "content_share"],
        [[x, _fmt(share)] for x, share in curve],
    )
    result.files.append("contribution_curve.csv")


def group_metrics(result: AnalysisResult, label: str) -> dict:
    members = result.groups[label]
    total_content = sum(r.torrent_count for r in result.records.values())
    total_downloads = sum(r.downloads_attracted for r in result.records.values())
    content = sum(r.torrent_count for r in members)
    downloads = sum(r.downloads_attracted for r in members)
    metrics = {
        "members": len(members),
        "content_share": content / total_content if total_content else 0.0,
        "download_share": downloads / total_downloads if total_downloads else 0.0,
    }
    if members:
        p25, p50, p75 = analytics.popularity_stats(members)
        metrics.update({"popularity_p25": p25, "popularity_p50": p50, "popularity_p75": p75})
    else:
        metrics.update({"popularity_p25": 0.0, "popularity_p50": 0.0, "popularity_p75": 0.0})
    tracked = [result.behaviors[r.username] for r in members if r.username in result.behaviors]
    metrics["tracked_members"] = len(tracked)
    metrics["median_seeding_time_h"] = analytics.group_median(
        [b.mean_seeding_time / HOUR for b in tracked]
    )
    metrics["median_parallel_torrents"] = analytics.group_median(
        [b.parallel_torrents for b in tracked]
    )
    metrics["median_aggregated_session_h"] = analytics.group_median(
        [b.aggregated_session_time / HOUR for b in tracked]
    )
    return metrics


def _write_group_stats_csv(result: AnalysisResult) -> None:
    header = [
        "group", "members", "tracked_members", "content_share", "download_share",
        "popularity_p25", "popularity_p50", "popularity_p75",
        "median_seeding_time_h", "median_parallel_torrents", "median_aggregated_session_h",
    ]
    rows = []
    for label in GROUP_ORDER:
        m = group_metrics(result, label)
        rows.append(
            [
                label, m["members"], m["tracked_members"], _fmt(m["content_share"]),
                _fmt(m["download_share"]), _fmt(m["popularity_p25"]), _fmt(m["popularity_p50"]),
                _fmt(m["popularity_p75"]), _fmt(m["median_seeding_time_h"]),
                _fmt(m["median_parallel_torrents"]), _fmt(m["median_aggregated_session_h"]),
            ]
        )
    _write_csv(result.report_dir / "group_stats.csv", header, rows)
    result.files.append("group_stats.csv")


def _write_category_csv(result: AnalysisResult) -> None:
    breakdown = analytics.group_breakdown(result.groups)
    rows = []
    for label in GROUP_ORDER:
        for category, fraction in sorted(breakdown.get(label, {}).items()):
            rows.append([label, category, _fmt(fraction)])
    _write_csv(result.report_dir / "category_breakdown.csv", ["group", "category", "fraction"], rows)
    result.files.append("category_breakdown.csv")


def _write_class_csv(result: AnalysisResult) -> None:
    aggregates = analytics.class_aggregates(result.records)
    rows = [
        [label, _fmt(content), _fmt(downloads)]
        for label, (content, downloads) in sorted(aggregates.items())
    ]
    _write_csv(
        result.report_dir / "class_aggregates.csv",
        ["business_class", "content_share", "download_share"],
        rows,
    )
    result.files.append("class_aggregates.csv")


def _write_sessions_csv(result: AnalysisResult) -> None:
    rows = []
    for username in sorted(result.behaviors):
        behavior = result.behaviors[username]
        for infohash in sorted(behavior.sessions_by_torrent):
            for session in behavior.sessions_by_torrent[infohash]:
                rows.append(
                    [
                        username, infohash, _fmt(session.start), _fmt(session.end),
                        session.observation_count,
                    ]
                )
    _write_csv(
        result.report_dir / "sessions.csv",
        ["username", "infohash", "start", "end", "observations"],
        rows,
    )
    result.files.append("sessions.csv")


def _write_summary_json(result: AnalysisResult) -> None:
    curve = analytics.contribution_curve(result.records)
    case_counts: dict[str, int] = {}
    for record in result.records.values():
        if record.ips:
            case_counts[record.multi_ip_case] = case_counts.get(record.multi_ip_case, 0) + 1
    summary = {
        "publishers": len(result.records),
        "torrents": sum(r.torrent_count for r in result.records.values()),
        "downloads": sum(r.downloads_attracted for r in result.records.values()),
        "model": {
            "population": result.model.population,
            "sample_size": result.model.sample_size,
            "target_probability": result.model.target_probability,
            "queries_needed": result.model.queries_needed,
            "inter_query_s": result.model.inter_query_s,
            "offline_threshold_s": result.model.offline_threshold_s(),
        },
        "groups": {label: group_metrics(result, label) for label in GROUP_ORDER},
        "contribution_top_3pct": curve[2][1],
        "multi_ip_cases": case_counts,
        "class_aggregates": {
            label: {"content_share": c, "download_share": d}
            for label, (c, d) in analytics.class_aggregates(result.records).items()
        },
    }
    path = result.report_dir / "summary.json"
    path.write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    result.files.append("summary.json")


# --- figures ---


def render_figures(result: AnalysisResult) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    written.append(_fig_contribution(result, plt))
    written.append(_fig_categories(result, plt))
    written.append(_fig_popularity(result, plt))
    written.append(_fig_seeding(result, plt))
    result.files.extend(written)
    return written


def _fig_contribution(result: AnalysisResult, plt) -> str:
    curve = analytics.contribution_curve(result.records)
    xs = [x for x, _ in curve]
    ys = [100.0 * share for _, share in curve]
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(xs, ys, lw=2)
    ax.set_xlabel("top x% of publishers")
    ax.set_ylabel("% of published content")
    ax.set_xscale("log")
    ax.set_xlim(1, 100)
    ax.set_ylim(0, 100)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(result.report_dir / "contribution_curve.png", dpi=120)
    plt.close(fig)
    return "contribution_curve.png"


def _fig_categories(result: AnalysisResult, plt) -> str:
    breakdown = analytics.group_breakdown(result.groups)
    categories = sorted({c for dist in breakdown.values() for c in dist})
    fig, ax = plt.subplots(figsize=(7, 3.5))
    width = 1.0 / (len(GROUP_ORDER) + 1)
    for offset, label in enumerate(GROUP_ORDER):
        dist = breakdown.get(label, {})
        xs = [i + offset * width for i in range(len(categories))]
        ax.bar(xs, [100.0 * dist.get(c, 0.0) for c in categories], width=width, label=label)
    ax.set_xticks([i + width * (len(GROUP_ORDER) - 1) / 2 for i in range(len(categories))])
    ax.set_xticklabels(categories, rotation=20)
    ax.set_ylabel("% of group's torrents")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(result.report_dir / "category_breakdown.png", dpi=120)
    plt.close(fig)
    return "category_breakdown.png"


def _fig_popularity(result: AnalysisResult, plt) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for index, label in enumerate(GROUP_ORDER):
        members = result.groups[label]
        if not members:
            continue
        p25, p50, p75 = analytics.popularity_stats(members)
        ax.bar(index, p75 - p25, bottom=p25, width=0.55, alpha=0.5)
        ax.plot([index - 0.28, index + 0.28], [p50, p50], color="black", lw=2)
    ax.set_xticks(range(len(GROUP_ORDER)))
    ax.set_xticklabels(GROUP_ORDER)
    ax.set_yscale("log")
    ax.set_ylabel("avg downloaders per torrent")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(result.report_dir / "popularity_quartiles.png", dpi=120)
    plt.close(fig)
    return "popularity_quartiles.png"


def _fig_seeding(result: AnalysisResult, plt) -> str:
    metrics = {label: group_metrics(result, label) for label in GROUP_ORDER}
    panels = [
        ("median_seeding_time_h", "seeding time (h)"),
        ("median_parallel_torrents", "parallel torrents"),
        ("median_aggregated_session_h", "aggregated session (h)"),
    ]
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    for ax, (key, title) in zip(axes, panels):
        values = [metrics[label][key] for label in GROUP_ORDER]
        ax.bar(range(len(GROUP_ORDER)), values, width=0.6)
        ax.set_xticks(range(len(GROUP_ORDER)))
        ax.set_xticklabels(GROUP_ORDER, rotation=30, fontsize=7)
        ax.set_title(title, fontsize=9)
        ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(result.report_dir / "seeding_behavior.png", dpi=120)
    plt.close(fig)
    return "seeding_behavior.png"

"""Fixture-backed IP enrichment: CIDR prefix -> ISP name, type, and location.

The database is a CSV with columns cidr,isp_name,isp_type,country,city and
lookups use longest-prefix match. isp_type is either "hosting" or
"commercial"; addresses outside every prefix resolve to "unknown".
"""

from __future__ import annotations

import csv
import ipaddress
from dataclasses import dataclass
from pathlib import Path

HOSTING = "hosting"
COMMERCIAL = "commercial"
UNKNOWN = "unknown"


@dataclass(frozen=True)
class IspInfo:
    prefix: str
    isp_name: str
    isp_type: str
    country: str
    city: str


UNKNOWN_ISP = IspInfo(prefix="", isp_name="", isp_type=UNKNOWN, country="", city="")


class GeoIpTable:
    def __init__(self, rows: list[IspInfo]):
        # Longest prefix first so the first hit wins.
        self._rows = sorted(
            ((ipaddress.ip_network(r.prefix), r) for r in rows),
            key=lambda item: item[0].prefixlen,
            reverse=True,
        )
        self._cache: dict[str, IspInfo] = {}

    @classmethod
    def load(cls, path: str | Path) -> "GeoIpTable":
        rows = []
        with open(path, newline="") as fh:
            for lineno, record in enumerate(csv.reader(fh), start=1):
                if not record or record[0].startswith("#"):
                    continue
                if len(record) != 5:
                    raise ValueError(f"{path}:{lineno}: expected 5 columns, got {len(record)}")
                cidr, name, isp_type, country, city = (f.strip() for f in record)
                if isp_type not in (HOSTING, COMMERCIAL):
                    raise ValueError(f"{path}:{lineno}: bad isp_type {isp_type!r}")
                try:
                    ipaddress.ip_network(cidr)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad cidr {cidr!r}") from exc
                rows.append(IspInfo(cidr, name, isp_type, country, city))
        return cls(rows)

    def lookup(self, ip: str) -> IspInfo:
        hit = self._cache.get(ip)
        if hit is not None:
            return hit
        addr = ipaddress.ip_address(ip)
        info = UNKNOWN_ISP
        for network, row in self._rows:
            if addr in network:
                info = row
                break
        if len(self._cache) < 1_000_000:
            self._cache[ip] = info
        return info


EMPTY_TABLE = GeoIpTable([])

"""Bencode wire format: decoding, canonical encoding, .torrent metainfo parsing.

Values map to plain Python types: int, bytes, list, and dict with bytes
keys. Strings are never text-decoded at this layer; metainfo hashing needs
the exact bytes as they appeared on disk.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class BencodeError(ValueError):
    """Malformed bencode input."""


class MetainfoError(BencodeError):
    """Structurally valid bencode that is not a usable torrent metainfo."""


BencodeValue = int | bytes | list | dict


def decode(data: bytes, *, strict: bool = False) -> BencodeValue:
    """Decode a complete bencode document.

    Rejects trailing bytes. In strict mode, unsorted or duplicate dict keys
    and non-canonical integers (leading zeros, negative zero) are errors;
    in lenient mode (the default, needed for third-party .torrent files)
    they produce a warning and parsing continues.
    """
    value, end = _decode_value(data, 0, strict)
    if end != len(data):
        raise BencodeError(f"trailing bytes after document (offset {end} of {len(data)})")
    return value


def encode(value: BencodeValue) -> bytes:
    """Serialize a value canonically (dict keys in ascending raw-byte order).

    str values are accepted for convenience and encoded as UTF-8 byte-strings.
    """
    out = bytearray()
    _encode_value(value, out)
    return bytes(out)


def infohash(info_span: bytes) -> bytes:
    """160-bit digest of the exact bencoded info dictionary bytes."""
    return hashlib.sha1(info_span).digest()


@dataclass
class TorrentMeta:
    """Fields of a parsed .torrent file that the monitoring pipeline needs."""

    infohash: bytes
    name: bytes
    piece_count: int
    piece_length: int
    total_size: int
    announce_url: str
    announce_list: list[str] | None = None
    file_names: list[str] = field(default_factory=list)

    @property
    def infohash_hex(self) -> str:
        return self.infohash.hex()


def parse_metainfo(data: bytes) -> TorrentMeta:
    """Parse .torrent bytes into a TorrentMeta.

    The infohash is computed over the original byte span of the `info`
    value, not a re-encoding, so files with non-canonical key order still
    hash to what the swarm uses.
    """
    try:
        top, span = _decode_top_dict_with_info_span(data)
    except BencodeError as exc:
        raise MetainfoError(f"not a bencoded metainfo file: {exc}") from exc
    if b"announce" not in top:
        raise MetainfoError("missing field: announce")
    if b"info" not in top or span is None:
        raise MetainfoError("missing field: info")
    info = top[b"info"]
    if not isinstance(info, dict):
        raise MetainfoError("info is not a dictionary")

    name = _require(info, b"name", bytes)
    piece_length = _require(info, b"piece length", int)
    pieces = _require(info, b"pieces", bytes)
    if piece_length <= 0:
        raise MetainfoError(f"non-positive piece length {piece_length}")
    if len(pieces) % 20 != 0:
        raise MetainfoError(f"pieces blob length {len(pieces)} is not a multiple of 20")
    piece_count = len(pieces) // 20

    file_names: list[str] = []
    if b"files" in info:
        total_size = 0
        files = info[b"files"]
        if not isinstance(files, list):
            raise MetainfoError("files is not a list")
        for entry in files:
            if not isinstance(entry, dict) or b"length" not in entry:
                raise MetainfoError("file entry missing length")
            total_size += entry[b"length"]
            path = entry.get(b"path", [])
            if isinstance(path, list) and path:
                file_names.append(b"/".join(p for p in path if isinstance(p, bytes)).decode("utf-8", "replace"))
    elif b"length" in info:
        total_size = info[b"length"]
        if not isinstance(total_size, int):
            raise MetainfoError("length is not an integer")
        file_names.append(name.decode("utf-8", "replace"))
    else:
        raise MetainfoError("missing field: length or files")
    if total_size <= 0:
        raise MetainfoError(f"non-positive total size {total_size}")

    expected = -(-total_size // piece_length)  # ceil
    if piece_count != expected:
        raise MetainfoError(
            f"inconsistent piece math: {piece_count} pieces but "
            f"ceil({total_size}/{piece_length}) = {expected}"
        )

    announce_list = None
    if b"announce-list" in top and isinstance(top[b"announce-list"], list):
        announce_list = [
            url.decode("utf-8", "replace")
            for tier in top[b"announce-list"]
            if isinstance(tier, list)
            for url in tier
            if isinstance(url, bytes)
        ]

    return TorrentMeta(
        infohash=infohash(data[span[0]:span[1]]),
        name=name,
        piece_count=piece_count,
        piece_length=piece_length,
        total_size=total_size,
        announce_url=_require(top, b"announce", bytes).decode("utf-8", "replace"),
        announce_list=announce_list,
        file_names=file_names,
    )


def _require(d: dict, key: bytes, kind: type):
    if key not in d:
        raise MetainfoError(f"missing field: {key.decode('ascii', 'replace')}")
    value = d[key]
    if not isinstance(value, kind):
        raise MetainfoError(f"field {key.decode('ascii', 'replace')} has wrong type")
    return value


# --- decoder internals ---


def _decode_value(data: bytes, pos: int, strict: bool) -> tuple[BencodeValue, int]:
    if pos >= len(data):
        raise BencodeError("truncated input")
    lead = data[pos:pos + 1]
    if lead == b"i":
        return _decode_int(data, pos, strict)
    if lead == b"l":
        return _decode_list(data, pos, strict)
    if lead == b"d":
        return _decode_dict(data, pos, strict)
    if lead.isdigit():
        return _decode_string(data, pos)
    raise BencodeError(f"invalid type prefix {lead!r} at offset {pos}")


def _decode_int(data: bytes, pos: int, strict: bool) -> tuple[int, int]:
    end = data.find(b"e", pos)
    if end == -1:
        raise BencodeError("unterminated integer")
    body = data[pos + 1:end]
    if not body or body == b"-":
        raise BencodeError("empty integer")
    digits = body[1:] if body[:1] == b"-" else body
    if not digits.isdigit():
        raise BencodeError(f"invalid integer {body!r}")
    if digits != b"0" and digits[:1] == b"0" or body == b"-0":
        if strict:
            raise BencodeError(f"non-canonical integer {body!r}")
        log.warning("lenient decode: non-canonical integer %r", body)
    value = int(body)
    if not INT64_MIN <= value <= INT64_MAX:
        raise BencodeError(f"integer {value} outside 64-bit signed range")
    return value, end + 1


def _decode_string(data: bytes, pos: int) -> tuple[bytes, int]:
    colon = data.find(b":", pos)
    if colon == -1:
        raise BencodeError("unterminated string length")
    length_bytes = data[pos:colon]
    if not length_bytes.isdigit():
        raise BencodeError(f"invalid string length {length_bytes!r}")
    length = int(length_bytes)
    start = colon + 1
    end = start + length
    if end > len(data):
        raise BencodeError("truncated string")
    return data[start:end], end


def _decode_list(data: bytes, pos: int, strict: bool) -> tuple[list, int]:
    items = []
    pos += 1
    while True:
        if pos >= len(data):
            raise BencodeError("unterminated list")
        if data[pos:pos + 1] == b"e":
            return items, pos + 1
        value, pos = _decode_value(data, pos, strict)
        items.append(value)


def _decode_dict(data: bytes, pos: int, strict: bool) -> tuple[dict, int]:
    items: dict[bytes, BencodeValue] = {}
    prev_key: bytes | None = None
    pos += 1
    while True:
        if pos >= len(data):
            raise BencodeError("unterminated dictionary")
        if data[pos:pos + 1] == b"e":
            return items, pos + 1
        key, pos = _decode_value(data, pos, strict)
        if not isinstance(key, bytes):
            raise BencodeError("dictionary key is not a byte-string")
        if key in items:
            if strict:
                raise BencodeError(f"duplicate dictionary key {key!r}")
            log.warning("lenient decode: duplicate dictionary key %r, keeping first", key)
            _, pos = _decode_value(data, pos, strict)
            continue
        if prev_key is not None and key < prev_key:
            if strict:
                raise BencodeError(f"unsorted dictionary keys ({prev_key!r} before {key!r})")
            log.warning("lenient decode: unsorted dictionary keys (%r before %r)", prev_key, key)
        prev_key = key
        items[key], pos = _decode_value(data, pos, strict)


def _decode_top_dict_with_info_span(data: bytes) -> tuple[dict, tuple[int, int] | None]:
    """Decode the top-level dict while recording the byte span of its `info` value."""
    if data[:1] != b"d":
        raise BencodeError("metainfo does not start with a dictionary")
    items: dict[bytes, BencodeValue] = {}
    span: tuple[int, int] | None = None
    pos = 1
    while True:
        if pos >= len(data):
            raise BencodeError("unterminated dictionary")
        if data[pos:pos + 1] == b"e":
            pos += 1
            break
        key, pos = _decode_string(data, pos)
        start = pos
        value, pos = _decode_value(data, pos, strict=False)
        if key == b"info" and key not in items:
            span = (start, pos)
        items.setdefault(key, value)
    if pos != len(data):
        raise BencodeError("trailing bytes after metainfo")
    return items, span


# --- encoder internals ---


def _encode_value(value: BencodeValue, out: bytearray) -> None:
    if isinstance(value, bool):
        raise TypeError("booleans are not bencodable")
    if isinstance(value, int):
        if not INT64_MIN <= value <= INT64_MAX:
            raise ValueError(f"integer {value} outside 64-bit signed range")
        out += b"i%de" % value
    elif isinstance(value, bytes):
        out += b"%d:" % len(value)
        out += value
    elif isinstance(value, str):
        raw = value.encode("utf-8")
        out += b"%d:" % len(raw)
        out += raw
    elif isinstance(value, list):
        out += b"l"
        for item in value:
            _encode_value(item, out)
        out += b"e"
    elif isinstance(value, dict):
        out += b"d"
        keys = [(k.encode("utf-8") if isinstance(k, str) else k) for k in value]
        if any(not isinstance(k, bytes) for k in keys):
            raise TypeError("dictionary keys must be byte-strings")
        for raw_key, key in sorted(zip(keys, value), key=lambda kv: kv[0]):
            _encode_value(raw_key, out)
            _encode_value(value[key], out)
        out += b"e"
    else:
        raise TypeError(f"type {type(value).__name__} is not bencodable")

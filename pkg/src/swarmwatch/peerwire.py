"""Peer wire handshake and bitfield probe used to pin a swarm's seeder.

A probe is deliberately inert: it sends the 68-byte handshake, reads the
peer's handshake and first message, and closes. It never requests pieces,
so monitored swarms are observed without being perturbed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .transport import ConnectionRefused, Transport, TransportError

PROTOCOL = b"BitTorrent protocol"
HANDSHAKE_LEN = 68
MSG_BITFIELD = 5

SEED = "seed"
NON_SEED = "non_seed"
NO_BITFIELD = "no_bitfield"
REFUSED = "refused"
TIMEOUT = "timeout"

DEFAULT_PROBE_TIMEOUT_S = 5.0


@dataclass
class ProbeResult:
    endpoint: tuple[str, int]
    outcome: str
    pieces_have: int | None = None
    probed_at: float = 0.0

    @property
    def is_seed(self) -> bool:
        return self.outcome == SEED


def build_handshake(infohash: bytes, peer_id: bytes) -> bytes:
    """68 bytes: length-prefixed protocol string, 8 zero reserved bytes,
    infohash, peer id."""
    if len(infohash) != 20 or len(peer_id) != 20:
        raise ValueError("infohash and peer_id must be exactly 20 bytes")
    return bytes([len(PROTOCOL)]) + PROTOCOL + b"\x00" * 8 + infohash + peer_id


def parse_handshake(data: bytes) -> tuple[bytes, bytes]:
    """Returns (infohash, peer_id) from a peer's handshake."""
    if len(data) < HANDSHAKE_LEN:
        raise ValueError(f"handshake too short ({len(data)} bytes)")
    if data[0] != len(PROTOCOL) or data[1:20] != PROTOCOL:
        raise ValueError("not a recognized handshake")
    return data[28:48], data[48:68]


def build_message(msg_id: int, payload: bytes = b"") -> bytes:
    return struct.pack(">I", 1 + len(payload)) + bytes([msg_id]) + payload


def is_seed(bitfield: bytes, piece_count: int) -> bool:
    """True iff the first piece_count bits are all set.

    The bitfield must be exactly ceil(piece_count/8) bytes; bits past
    piece_count are padding and ignored.
    """
    expected = (piece_count + 7) // 8
    if len(bitfield) != expected:
        raise ValueError(f"bitfield length {len(bitfield)} != ceil({piece_count}/8) = {expected}")
    full_bytes, rest = divmod(piece_count, 8)
    if any(b != 0xFF for b in bitfield[:full_bytes]):
        return False
    if rest:
        mask = (0xFF00 >> rest) & 0xFF
        return bitfield[full_bytes] & mask == mask
    return True


def count_pieces(bitfield: bytes, piece_count: int) -> int:
    have = 0
    for index in range(piece_count):
        if bitfield[index // 8] & (0x80 >> (index % 8)):
            have += 1
    return have


def _recv_exact(conn, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = conn.recv(n - len(buf))
        if not chunk:
            raise TransportError("peer closed connection")
        buf += chunk
    return bytes(buf)


def read_message(conn) -> tuple[int | None, bytes]:
    """Read one length-prefixed message; (None, b"") is a keep-alive."""
    (length,) = struct.unpack(">I", _recv_exact(conn, 4))
    if length == 0:
        return None, b""
    body = _recv_exact(conn, length)
    return body[0], body[1:]


def probe(
    transport: Transport,
    endpoint: tuple[str, int],
    infohash: bytes,
    piece_count: int,
    peer_id: bytes,
    *,
    timeout_s: float = DEFAULT_PROBE_TIMEOUT_S,
    now: float = 0.0,
) -> ProbeResult:
    """Handshake with a peer and classify it from its first real message.

    Outcomes: seed / non_seed when the peer opens with a bitfield, refused
    when the connection is rejected (NATed peers look like this), timeout
    when nothing arrives in time, no_bitfield for anything else (including
    clients that send have-sequences instead of a bitfield).
    """
    if timeout_s <= 0:
        raise ValueError("timeout must be positive")
    ip, port = endpoint
    try:
        conn = transport.connect(ip, port, timeout_s)
    except ConnectionRefused:
        return ProbeResult(endpoint, REFUSED, probed_at=now)
    except TransportError:
        return ProbeResult(endpoint, TIMEOUT, probed_at=now)
    try:
        conn.send(build_handshake(infohash, peer_id))
        their_hs = _recv_exact(conn, HANDSHAKE_LEN)
        try:
            their_ih, _ = parse_handshake(their_hs)
        except ValueError:
            return ProbeResult(endpoint, NO_BITFIELD, probed_at=now)
        if their_ih != infohash:
            return ProbeResult(endpoint, NO_BITFIELD, probed_at=now)
        msg_id, payload = read_message(conn)
        for _ in range(8):  # tolerate a few keep-alives, nothing more
            if msg_id is not None:
                break
            msg_id, payload = read_message(conn)
        if msg_id != MSG_BITFIELD:
            return ProbeResult(endpoint, NO_BITFIELD, probed_at=now)
        try:
            full = is_seed(payload, piece_count)
        except ValueError:
            return ProbeResult(endpoint, NO_BITFIELD, probed_at=now)
        have = count_pieces(payload, piece_count)
        return ProbeResult(endpoint, SEED if full else NON_SEED, pieces_have=have, probed_at=now)
    except (TimeoutError, TransportError, struct.error):
        return ProbeResult(endpoint, TIMEOUT, probed_at=now)
    finally:
        conn.close()

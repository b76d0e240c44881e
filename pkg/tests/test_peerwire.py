import pytest

from swarmwatch import peerwire
from swarmwatch.peerwire import (
    build_handshake,
    build_message,
    count_pieces,
    is_seed,
    parse_handshake,
    probe,
)
from swarmwatch.transport import ConnectionRefused, TransportError

IH = bytes(range(20))
PID = b"-SW0100-XXXXYYYYZZZZ"


class TestHandshake:
    def test_layout(self):
        hs = build_handshake(IH, PID)
        assert len(hs) == 68
        assert hs[0] == 19
        assert hs[1:20] == b"BitTorrent protocol"
        assert hs[20:28] == b"\x00" * 8
        assert parse_handshake(hs) == (IH, PID)

    def test_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_handshake(b"\x13NotTheRightProtocol" + b"\x00" * 48)
        with pytest.raises(ValueError):
            parse_handshake(b"short")


class TestIsSeed:
    def test_all_bits_set(self):
        assert is_seed(b"\xff", 8) is True

    def test_missing_last_piece(self):
        assert is_seed(b"\xfe", 8) is False

    def test_padding_ignored(self):
        assert is_seed(b"\xf0", 4) is True
        assert is_seed(b"\xe0", 4) is False

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            is_seed(b"\xff\xff", 8)

    def test_count_pieces(self):
        assert count_pieces(b"\xff", 8) == 8
        assert count_pieces(b"\xa0", 4) == 2


class ScriptedConnection:
    """Plays back canned bytes; collects whatever the prober sends."""

    def __init__(self, reply: bytes):
        self.reply = bytearray(reply)
        self.sent = bytearray()

    def send(self, data):
        self.sent += data

    def recv(self, n):
        if not self.reply:
            raise TimeoutError("silence")
        chunk = bytes(self.reply[:n])
        del self.reply[:n]
        return chunk

    def close(self):
        pass


class ScriptedTransport:
    def __init__(self, script):
        self.script = script

    def fetch(self, url):
        raise TransportError("no fetch in this test")

    def connect(self, ip, port, timeout_s):
        item = self.script[(ip, port)]
        if isinstance(item, Exception):
            raise item
        return item


def peer_reply(bitfield=None, msg_id=peerwire.MSG_BITFIELD, infohash=IH):
    reply = build_handshake(infohash, b"peer-id-000000000000")
    if bitfield is not None:
        reply += build_message(msg_id, bitfield)
    return reply


class TestProbe:
    def test_seed(self):
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(peer_reply(b"\xff"))})
        result = probe(transport, ("10.0.0.1", 6881), IH, 8, PID, now=5.0)
        assert result.outcome == peerwire.SEED
        assert result.pieces_have == 8
        assert result.probed_at == 5.0

    def test_non_seed(self):
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(peer_reply(b"\xe0"))})
        result = probe(transport, ("10.0.0.1", 6881), IH, 8, PID)
        assert result.outcome == peerwire.NON_SEED
        assert result.pieces_have == 3

    def test_refused(self):
        transport = ScriptedTransport({("10.0.0.1", 6881): ConnectionRefused("nat")})
        assert probe(transport, ("10.0.0.1", 6881), IH, 8, PID).outcome == peerwire.REFUSED

    def test_timeout_when_silent(self):
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(b"")})
        assert probe(transport, ("10.0.0.1", 6881), IH, 8, PID).outcome == peerwire.TIMEOUT

    def test_non_bitfield_first_message(self):
        reply = peer_reply(b"\x00\x00\x00\x01", msg_id=4)  # have
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(reply)})
        assert probe(transport, ("10.0.0.1", 6881), IH, 8, PID).outcome == peerwire.NO_BITFIELD

    def test_keepalive_then_bitfield(self):
        reply = build_handshake(IH, b"peer-id-000000000000")
        reply += b"\x00\x00\x00\x00" + build_message(peerwire.MSG_BITFIELD, b"\xff")
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(reply)})
        assert probe(transport, ("10.0.0.1", 6881), IH, 8, PID).outcome == peerwire.SEED

    def test_wrong_infohash_in_reply(self):
        reply = peer_reply(b"\xff", infohash=bytes(20))
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(reply)})
        assert probe(transport, ("10.0.0.1", 6881), IH, 8, PID).outcome == peerwire.NO_BITFIELD

    def test_bad_bitfield_length(self):
        transport = ScriptedTransport({("10.0.0.1", 6881): ScriptedConnection(peer_reply(b"\xff\xff"))})
        assert probe(transport, ("10.0.0.1", 6881), IH, 8, PID).outcome == peerwire.NO_BITFIELD

    def test_probe_sends_only_handshake(self):
        conn = ScriptedConnection(peer_reply(b"\xff"))
        transport = ScriptedTransport({("10.0.0.1", 6881): conn})
        probe(transport, ("10.0.0.1", 6881), IH, 8, PID)
        assert bytes(conn.sent) == build_handshake(IH, PID)


class TestProbeAgainstSimPeers:
    def test_sim_seed_and_leecher_and_nat(self):
        from swarmwatch.simnet import SimTransport, WorldConfig, generate_world
        from swarmwatch.transport import VirtualClock

        cfg = WorldConfig(
            rng_seed=9, publisher_count=4, top_tier_size=1, zipf_max_count=2,
            fake_publisher_count=0, nat_fraction=0.0, nat_leecher_fraction=0.0,
            downloads_mean_regular=8, downloads_mean_top=8, timeline_days=0.5,
            peer_session_min_s=3600.0, peer_session_mean_s=7200.0,
        )
        world, truth = generate_world(cfg)
        ih, torrent = next(iter(truth.torrents.items()))
        mid = torrent.birth + 60.0
        clock = VirtualClock(mid)
        transport = SimTransport(world, clock)
        infohash = bytes.fromhex(ih)

        seed_result = probe(
            transport, (torrent.publisher_ip, torrent.publisher_port), infohash,
            torrent.piece_count, PID, now=mid,
        )
        assert seed_result.outcome == peerwire.SEED
        assert seed_result.pieces_have == torrent.piece_count

        leechers = [s for s in torrent.stints if s.kind == "leecher" and s.active_at(mid)]
        if leechers:
            lr = probe(transport, (leechers[0].ip, leechers[0].port), infohash, torrent.piece_count, PID)
            assert lr.outcome == peerwire.NON_SEED
            assert 0 <= lr.pieces_have < torrent.piece_count

        # NAT the publisher and retry: connection refused.
        for s in torrent.stints:
            if s.kind == "publisher":
                s.nat = True
        nat_result = probe(
            transport, (torrent.publisher_ip, torrent.publisher_port), infohash,
            torrent.piece_count, PID,
        )
        assert nat_result.outcome == peerwire.REFUSED

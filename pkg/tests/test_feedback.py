import random

import pytest

from ecnprobe.ecn import EcnCodepoint
from ecnprobe.feedback import (
    EcnByteCounters,
    InvalidFeedback,
    NotCounted,
    QuicEcnCounts,
    TcpEcnFlags,
    counts_delta_codepoint,
    decode_handshake,
    encode_handshake,
    record_bytes,
    record_packet,
    wireshark_string,
)

# The SYN-ACK reflection table: codepoint -> (AE/CWR/ECE bits, dissector string)
HANDSHAKE_TABLE = {
    EcnCodepoint.NOT_ECT: (0b010, ".C."),
    EcnCodepoint.ECT1: (0b011, ".CE"),
    EcnCodepoint.ECT0: (0b100, "A.."),
    EcnCodepoint.CE: (0b110, "AC."),
}


@pytest.mark.parametrize("cp", list(EcnCodepoint))
def test_handshake_encoding_table(cp):
    bits, shark = HANDSHAKE_TABLE[cp]
    flags = encode_handshake(cp)
    assert flags.to_bits() == bits
    assert wireshark_string(flags) == shark


@pytest.mark.parametrize("cp", list(EcnCodepoint))
def test_handshake_round_trip(cp):
    assert decode_handshake(encode_handshake(cp)) is cp


def test_decode_specific_patterns():
    assert decode_handshake(TcpEcnFlags.from_bits(0b011)) is EcnCodepoint.ECT1
    assert decode_handshake(TcpEcnFlags.from_bits(0b110)) is EcnCodepoint.CE


@pytest.mark.parametrize("bits", [0b000, 0b001, 0b101, 0b111])
def test_invalid_patterns_rejected(bits):
    with pytest.raises(InvalidFeedback):
        decode_handshake(TcpEcnFlags.from_bits(bits))


def test_exactly_four_patterns_decode():
    decodable = []
    for bits in range(8):
        try:
            decode_handshake(TcpEcnFlags.from_bits(bits))
            decodable.append(bits)
        except InvalidFeedback:
            pass
    assert decodable == [0b010, 0b011, 0b100, 0b110]


def test_flags_bits_round_trip():
    for bits in range(8):
        assert TcpEcnFlags.from_bits(bits).to_bits() == bits
    with pytest.raises(ValueError):
        TcpEcnFlags.from_bits(8)


def test_byte_counters_start_at_one():
    fresh = EcnByteCounters()
    assert (fresh.ect0, fresh.ect1, fresh.ce) == (1, 1, 1)


def test_record_bytes_examples():
    fresh = EcnByteCounters()
    after = record_bytes(fresh, EcnCodepoint.ECT0, 100)
    assert (after.ect0, after.ect1, after.ce) == (101, 1, 1)
    # zero-length payload changes nothing
    assert record_bytes(fresh, EcnCodepoint.CE, 0) == fresh
    # accumulation: 1 + 50 + 50
    c = record_bytes(record_bytes(fresh, EcnCodepoint.ECT1, 50), EcnCodepoint.ECT1, 50)
    assert c.ect1 == 101


def test_record_bytes_not_ect_rejected():
    with pytest.raises(NotCounted):
        record_bytes(EcnByteCounters(), EcnCodepoint.NOT_ECT, 10)
    with pytest.raises(ValueError):
        record_bytes(EcnByteCounters(), EcnCodepoint.CE, -1)


def test_counters_monotone_over_random_sequences():
    rng = random.Random(1)
    countable = [EcnCodepoint.ECT0, EcnCodepoint.ECT1, EcnCodepoint.CE]
    for _ in range(50):
        counters = EcnByteCounters()
        counts = QuicEcnCounts()
        for _ in range(rng.randrange(40)):
            cp = rng.choice(countable)
            previous = counters
            counters = record_bytes(counters, cp, rng.randrange(1500))
            assert counters.ect0 >= previous.ect0 >= 1
            assert counters.ect1 >= previous.ect1 >= 1
            assert counters.ce >= previous.ce >= 1
            counts = record_packet(counts, rng.choice(list(EcnCodepoint)))
        assert min(counts.ect0_packets, counts.ect1_packets, counts.ce_packets) >= 0


def test_record_packet_examples():
    zero = QuicEcnCounts()
    assert record_packet(zero, EcnCodepoint.ECT1) == QuicEcnCounts(0, 1, 0)
    assert record_packet(zero, EcnCodepoint.NOT_ECT) == zero
    assert record_packet(QuicEcnCounts(2, 0, 1), EcnCodepoint.CE) == QuicEcnCounts(2, 0, 2)


def test_counts_delta_decoding():
    zero = QuicEcnCounts()
    for cp in EcnCodepoint:
        after = record_packet(zero, cp)
        assert counts_delta_codepoint(zero, after) is cp


def test_counts_delta_rejects_impossible():
    with pytest.raises(InvalidFeedback):
        counts_delta_codepoint(QuicEcnCounts(1, 0, 0), QuicEcnCounts(0, 0, 0))
    with pytest.raises(InvalidFeedback):
        counts_delta_codepoint(QuicEcnCounts(), QuicEcnCounts(1, 1, 0))
    with pytest.raises(InvalidFeedback):
        counts_delta_codepoint(QuicEcnCounts(), QuicEcnCounts(2, 0, 0))

import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from diqkd.protocol.framing import (
    FramingError,
    MessageType,
    decode_frame,
    decode_stream,
    encode_frame,
    pack_bits,
    pack_u32_array,
    unpack_bits,
    unpack_u32_array,
)


def test_frame_layout():
    frame = encode_frame(MessageType.SETTINGS, b"\x01\x02")
    assert frame == b"\x00\x00\x00\x03\x03\x01\x02"


def test_type_codes():
    assert [int(t) for t in MessageType] == list(range(0x01, 0x0B))


@given(st.sampled_from(list(MessageType)), st.binary(max_size=300))
def test_frame_round_trip(mtype, payload):
    got_type, got_payload, end = decode_frame(encode_frame(mtype, payload))
    assert (got_type, got_payload, end) == (mtype, payload, 5 + len(payload))


def test_stream_of_frames():
    msgs = [(MessageType.PE_INDICES, b"abc"), (MessageType.ABORT, b""), (MessageType.PA_SEED, b"\xff" * 12)]
    buf = b"".join(encode_frame(t, p) for t, p in msgs)
    assert decode_stream(buf) == msgs


@pytest.mark.parametrize(
    "buf, msg",
    [
        (b"\x00\x00", "truncated"),
        (b"\x00\x00\x00\x00\x01", "without a type"),
        (b"\x00\x00\x00\x09\x01ab", "declares 9 bytes"),
        (b"\x00\x00\x00\x01\x7f", "unknown message type 0x7f"),
    ],
)
def test_malformed_frames(buf, msg):
    with pytest.raises(FramingError, match=msg):
        decode_frame(buf)


def test_bits_msb_first():
    data = pack_bits([1, 0, 0, 0, 0, 0, 0, 1, 1])
    assert data == struct.pack(">I", 9) + bytes([0b10000001, 0b10000000])


@given(st.lists(st.integers(0, 1), max_size=100))
def test_bits_round_trip(bits):
    out, end = unpack_bits(pack_bits(bits))
    assert out.tolist() == bits
    assert end == 4 + (len(bits) + 7) // 8


@given(st.lists(st.integers(0, 2**32 - 1), max_size=50))
def test_u32_round_trip(values):
    out, end = unpack_u32_array(pack_u32_array(values))
    assert out.tolist() == values and end == 4 + 4 * len(values)
    assert isinstance(out, np.ndarray)

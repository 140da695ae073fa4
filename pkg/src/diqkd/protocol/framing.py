"""Wire format for the classical channel.

Frame layout: 4-byte big-endian length ``L``, then ``L`` bytes made of a
1-byte message type and the payload. Bit strings are packed
most-significant-bit first behind a 4-byte bit count.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class MessageType(IntEnum):
    PE_INDICES = 0x01
    STATE_REQUEST = 0x02
    SETTINGS = 0x03
    FLIPS = 0x04
    PERMUTATION_SEED = 0x05
    ESTIMATE = 0x06
    RECONCILIATION = 0x07
    VERIFICATION_TAG = 0x08
    PA_SEED = 0x09
    ABORT = 0x0A


class FramingError(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    sender: str
    type: MessageType
    payload: bytes
    confidential: bool = False

    def frame(self) -> bytes:
        return encode_frame(self.type, self.payload)


def encode_frame(mtype: int, payload: bytes) -> bytes:
    body = bytes([int(mtype)]) + payload
    return struct.pack(">I", len(body)) + body


def decode_frame(buf: bytes, offset: int = 0) -> tuple[MessageType, bytes, int]:
    """Decode one frame at ``offset``; returns (type, payload, next offset)."""
    if len(buf) - offset < 5:
        raise FramingError("truncated frame header")
    (length,) = struct.unpack_from(">I", buf, offset)
    if length < 1:
        raise FramingError("frame without a type byte")
    end = offset + 4 + length
    if end > len(buf):
        raise FramingError(f"frame declares {length} bytes, {len(buf) - offset - 4} available")
    try:
        mtype = MessageType(buf[offset + 4])
    except ValueError:
        raise FramingError(f"unknown message type 0x{buf[offset + 4]:02x}") from None
    return mtype, bytes(buf[offset + 5 : end]), end


def decode_stream(buf: bytes) -> list[tuple[MessageType, bytes]]:
    out = []
    pos = 0
    while pos < len(buf):
        mtype, payload, pos = decode_frame(buf, pos)
        out.append((mtype, payload))
    return out


def pack_bits(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return struct.pack(">I", bits.size) + np.packbits(bits, bitorder="big").tobytes()


def unpack_bits(data: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    (n,) = struct.unpack_from(">I", data, offset)
    nbytes = (n + 7) // 8
    raw = np.frombuffer(data, dtype=np.uint8, count=nbytes, offset=offset + 4)
    return np.unpackbits(raw, bitorder="big")[:n].copy(), offset + 4 + nbytes


def pack_u32_array(values) -> bytes:
    arr = np.asarray(values, dtype=">u4")
    return struct.pack(">I", arr.size) + arr.tobytes()


def unpack_u32_array(data: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    (n,) = struct.unpack_from(">I", data, offset)
    arr = np.frombuffer(data, dtype=">u4", count=n, offset=offset + 4).astype(np.int64)
    return arr, offset + 4 + 4 * n

"""Executable protocol: devices, wire format, post-processing and runs."""

from .devices import DeviceModel, HighDimStrategy, planted_highdim_strategy, werner_state
from .framing import FramingError, Message, MessageType, decode_frame, encode_frame
from .postprocess import (
    estimate_S,
    final_key_length,
    privacy_amplify,
    reconcile,
    toeplitz_hash,
)
from .runner import ProtocolConfig, ProtocolTranscript, TrialRecord, run_protocol

__all__ = [
    "DeviceModel",
    "FramingError",
    "HighDimStrategy",
    "Message",
    "MessageType",
    "ProtocolConfig",
    "ProtocolTranscript",
    "TrialRecord",
    "decode_frame",
    "encode_frame",
    "estimate_S",
    "final_key_length",
    "planted_highdim_strategy",
    "privacy_amplify",
    "reconcile",
    "run_protocol",
    "toeplitz_hash",
    "werner_state",
]

"""AICL: a typed message language for agent-to-agent traffic, with text
and canonical binary forms, validators, trace tooling and a scenario
harness."""

from .binary import (
    CONF_TOLERANCE_MASK,
    DIFF_MASK,
    REPLAY_MASK,
    DecodeError,
    FieldMask,
    canonical_hash,
    decode,
    encode_canonical,
)
from .core import (
    CallExpr,
    Diagnostic,
    Ident,
    Message,
    MessageClass,
    MessageType,
    Metadata,
    Severity,
    Timestamp,
    check_metadata,
    classify,
)
from .text import ParseError, PrintStyle, parse_message, parse_stream, parse_value, print_message, print_stream
from .trace import Envelope, TraceLog, diff_traces, replay
from .validate import check_trace, validate_conversation, validate_message, verify_integrity

__version__ = "0.1.0"

__all__ = [
    "CONF_TOLERANCE_MASK", "CallExpr", "DIFF_MASK", "DecodeError", "Diagnostic", "Envelope", "FieldMask",
    "Ident", "Message", "MessageClass", "MessageType", "Metadata", "ParseError", "PrintStyle", "REPLAY_MASK",
    "Severity", "Timestamp", "TraceLog", "canonical_hash", "check_metadata", "check_trace", "classify",
    "decode", "diff_traces", "encode_canonical", "parse_message", "parse_stream", "parse_value",
    "print_message", "print_stream", "replay", "validate_conversation", "validate_message", "verify_integrity",
]

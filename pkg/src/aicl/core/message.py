"""Message types, metadata, and the single-message metadata checks."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, replace
from typing import Any, Optional

from .diagnostics import Diagnostic, diag
from .values import (
    INT_MIN,
    INT_MAX,
    Ident,
    InvalidValue,
    KEY_RE,
    Timestamp,
    check_text,
    check_value,
    structural_key,
)


class MessageType(enum.Enum):
    HELLO = "HELLO"
    QUERY = "QUERY"
    PLAN = "PLAN"
    FACT = "FACT"
    FACTS = "FACTS"
    RESULT = "RESULT"
    ERROR = "ERROR"
    MEMORY_STORE = "MEMORY.STORE"
    MEMORY_RECALL = "MEMORY.RECALL"
    COORD_DELEGATE = "COORD.DELEGATE"
    REASONING_START = "REASONING.START"
    REASONING_STEP = "REASONING.STEP"
    REASONING_COMPLETE = "REASONING.COMPLETE"

    def __str__(self) -> str:
        return self.value


class MessageClass(enum.Enum):
    LIFECYCLE = "Lifecycle"
    REQUEST = "Request"
    ASSERTION = "Assertion"
    RESPONSE = "Response"
    MEMORY = "Memory"
    COORDINATION = "Coordination"
    REASONING_MARK = "ReasoningMark"


T = MessageType

_CLASSES = {
    T.HELLO: MessageClass.LIFECYCLE,
    T.QUERY: MessageClass.REQUEST,
    T.PLAN: MessageClass.REQUEST,
    T.FACT: MessageClass.ASSERTION,
    T.FACTS: MessageClass.ASSERTION,
    T.RESULT: MessageClass.RESPONSE,
    T.ERROR: MessageClass.RESPONSE,
    T.MEMORY_STORE: MessageClass.MEMORY,
    T.MEMORY_RECALL: MessageClass.MEMORY,
    T.COORD_DELEGATE: MessageClass.COORDINATION,
    T.REASONING_START: MessageClass.REASONING_MARK,
    T.REASONING_STEP: MessageClass.REASONING_MARK,
    T.REASONING_COMPLETE: MessageClass.REASONING_MARK,
}

_REQUIRES_OF = frozenset({T.RESULT, T.ERROR, T.REASONING_STEP, T.REASONING_COMPLETE})
_CONF_EXPECTED = frozenset({T.RESULT, T.FACT, T.FACTS})


def classify(mtype: MessageType) -> MessageClass:
    return _CLASSES[mtype]


def requires_of(mtype: MessageType) -> bool:
    """True for types whose ``of`` pointer is mandatory."""
    return mtype in _REQUIRES_OF


# Canonical metadata key order used by the text printer.
META_FIELDS = (
    "id", "ts", "ver", "cid", "ctx", "model_version", "conf", "priors", "space",
    "of", "reasoning_trace", "cost", "latency", "sig", "cap",
)
OPTIONAL_FIELDS = frozenset({"of", "reasoning_trace", "cost", "latency", "sig", "cap"})

SEMVER_RE = re.compile(r"(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)\.(0|[1-9][0-9]*)\Z")


def _expect(cond: bool, name: str, what: str) -> None:
    if not cond:
        raise InvalidValue(f"metadata field {name} must be {what}")


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _as_prob(v: Any, name: str) -> float:
    if _is_int(v):
        v = float(v)
    _expect(isinstance(v, float), name, "a number")
    check_value(v, name)
    return v


@dataclass(frozen=True, eq=False)
class Metadata:
    """Envelope metadata. ``id`` and ``ts`` are structurally required; the
    remaining core fields may be absent (``None``) and are flagged by
    :func:`check_metadata` instead of being rejected at construction."""

    id: Ident
    ts: Timestamp
    ver: Optional[str] = None
    cid: Optional[Ident] = None
    ctx: Optional[tuple] = None
    model_version: Optional[str] = None
    conf: Optional[float] = None
    priors: Optional[dict] = None
    space: Optional[str] = None
    of: Optional[Ident] = None
    reasoning_trace: Optional[Ident] = None
    cost: Optional[dict] = None
    latency: Optional[int] = None
    sig: Optional[bytes] = None
    cap: Optional[tuple] = None

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        _expect(isinstance(self.id, Ident), "id", "an identifier")
        _expect(isinstance(self.ts, Timestamp), "ts", "a timestamp")
        for name in ("cid", "of", "reasoning_trace"):
            v = getattr(self, name)
            _expect(v is None or isinstance(v, Ident), name, "an identifier")
        for name in ("ver", "model_version", "space"):
            v = getattr(self, name)
            _expect(v is None or isinstance(v, str), name, "text")
            if v is not None:
                check_text(v, name)
        if self.ctx is not None:
            _expect(isinstance(self.ctx, (list, tuple)), "ctx", "a list of identifiers")
            _expect(all(isinstance(c, Ident) for c in self.ctx), "ctx", "a list of identifiers")
            set_(self, "ctx", tuple(self.ctx))
        if self.conf is not None:
            set_(self, "conf", _as_prob(self.conf, "conf"))
        if self.priors is not None:
            _expect(isinstance(self.priors, dict), "priors", "a map")
            priors = {}
            for k, v in self.priors.items():
                _expect(isinstance(k, str) and bool(KEY_RE.match(k)), "priors", "keyed by bare words")
                priors[k] = _as_prob(v, f"priors.{k}")
            set_(self, "priors", priors)
        if self.cost is not None:
            _expect(isinstance(self.cost, dict), "cost", "a map")
            for k, v in self.cost.items():
                _expect(isinstance(k, str) and bool(KEY_RE.match(k)), "cost", "keyed by bare words")
                _expect(_is_int(v) and INT_MIN <= v <= INT_MAX, "cost", "a map of integers")
        if self.latency is not None:
            _expect(_is_int(self.latency) and INT_MIN <= self.latency <= INT_MAX, "latency", "an integer")
        if self.sig is not None:
            _expect(isinstance(self.sig, (bytes, bytearray)), "sig", "a byte string")
            set_(self, "sig", bytes(self.sig))
        if self.cap is not None:
            _expect(isinstance(self.cap, (list, tuple)), "cap", "a list of text")
            _expect(all(isinstance(c, str) for c in self.cap), "cap", "a list of text")
            for c in self.cap:
                check_text(c, "cap")
            set_(self, "cap", tuple(self.cap))

    def present(self) -> dict[str, Any]:
        """Fields that are set, in canonical order."""
        return {f: getattr(self, f) for f in META_FIELDS if getattr(self, f) is not None}

    def key(self) -> tuple:
        return tuple(structural_key(getattr(self, f)) for f in META_FIELDS)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Metadata):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def replace(self, **changes: Any) -> Metadata:
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Message:
    """``[TYPE: CONTENT | METADATA]``."""

    mtype: MessageType
    content: Any
    meta: Metadata

    def __post_init__(self) -> None:
        if isinstance(self.mtype, str):
            object.__setattr__(self, "mtype", MessageType(self.mtype))
        if not isinstance(self.mtype, MessageType):
            raise InvalidValue(f"bad message type {self.mtype!r}")
        if not isinstance(self.meta, Metadata):
            raise InvalidValue("meta must be a Metadata record")
        check_value(self.content, "content")

    def key(self) -> tuple:
        return (self.mtype.value, structural_key(self.content), self.meta.key())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Message):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def with_meta(self, **changes: Any) -> Message:
        return replace(self, meta=replace(self.meta, **changes))

    def __repr__(self) -> str:
        from ..text import print_message

        return f"Message({print_message(self)})"


def check_metadata(meta: Metadata, mtype: MessageType) -> list[Diagnostic]:
    """Required-field, range and format findings for one message's metadata."""
    out: list[Diagnostic] = []

    def add(rule: str, field_path: str, detail: str) -> None:
        out.append(diag(rule, detail, path=field_path))

    if meta.ver is None:
        add("META.VER.REQUIRED", "meta.ver", "ver is required")
    elif not SEMVER_RE.match(meta.ver):
        add("META.VER.FORMAT", "meta.ver", f"ver {meta.ver!r} is not MAJOR.MINOR.PATCH")
    if meta.cid is None:
        add("META.CID.REQUIRED", "meta.cid", "cid is required")
    if meta.ctx is None:
        add("META.CTX.REQUIRED", "meta.ctx", "ctx is required")
    elif not meta.ctx:
        add("META.CTX.EMPTY", "meta.ctx", "ctx must name at least one scope")
    if meta.model_version is None:
        add("META.MODEL_VERSION.REQUIRED", "meta.model_version", "model_version is required")
    if meta.conf is None:
        if mtype in _CONF_EXPECTED:
            add("META.CONF.REQUIRED", "meta.conf", f"conf is required on {mtype}")
        else:
            add("META.CONF.MISSING", "meta.conf", f"conf is absent on {mtype}")
    elif not 0.0 <= meta.conf <= 1.0:
        add("META.CONF.RANGE", "meta.conf", f"conf {meta.conf!r} outside [0, 1]")
    if meta.priors is None:
        add("META.PRIORS.REQUIRED", "meta.priors", "priors is required (may be empty)")
    else:
        for k in sorted(meta.priors):
            p = meta.priors[k]
            if not 0.0 <= p <= 1.0:
                add("META.PRIORS.RANGE", f"meta.priors.{k}", f"prior {k}={p!r} outside [0, 1]")
    if meta.space is None:
        add("META.SPACE.REQUIRED", "meta.space", "space is required")
    if meta.of is None and requires_of(mtype):
        add("META.OF.REQUIRED", "meta.of", f"{mtype} must carry of")
    if meta.cost is not None:
        for k in sorted(meta.cost):
            if meta.cost[k] < 0:
                add("META.COST.RANGE", f"meta.cost.{k}", f"cost {k}={meta.cost[k]} is negative")
    if meta.latency is not None and meta.latency < 0:
        add("META.LATENCY.RANGE", "meta.latency", f"latency {meta.latency} is negative")
    if meta.cap is not None:
        for i, tag in enumerate(meta.cap):
            if not tag or any(ch.isspace() for ch in tag):
                add("META.CAP.FORMAT", f"meta.cap.{i}", f"cap tag {tag!r} is malformed")
    return out

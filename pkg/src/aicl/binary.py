"""Canonical CBOR codec (RFC 8949 deterministic profile) and content hashing.

Envelope layout::

    [type-name, content, {metadata}]

* integers, lengths and tags use the shortest argument form
* floats use the shortest of binary16/32/64 that preserves the value
* all lengths are definite; map keys are text, sorted by encoded bytes
* Timestamp  -> tag 0 over the RFC 3339 text (``...Z``, no trailing zeros)
* Ident      -> tag 16713 over ``[namespace, local]``
* CallExpr   -> tag 16707 over ``[namespace, name, {args}]``
* ``meta.sig`` is a byte string; absent optional fields are omitted

The decoder accepts exactly the encoder's image and rejects anything else
with a :class:`DecodeError` naming the violated rule.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .core.message import META_FIELDS, Message, MessageType, Metadata
from .core.values import INT_MAX, INT_MIN, CallExpr, Ident, InvalidValue, Timestamp

TAG_DATETIME = 0
TAG_IDENT = 0x4149
TAG_CALL = 0x4143

FILE_MAGIC = b"AICL"
FILE_VERSION = 1

_MAX_DEPTH = 256


class DecodeError(ValueError):
    def __init__(self, offset: int, rule: str, detail: str = ""):
        super().__init__(f"byte {offset}: {rule}" + (f" ({detail})" if detail else ""))
        self.offset = offset
        self.rule = rule
        self.detail = detail


# -- encoding -----------------------------------------------------------------


def _head(major: int, n: int) -> bytes:
    mt = major << 5
    if n < 24:
        return bytes([mt | n])
    if n < 0x100:
        return bytes([mt | 24, n])
    if n < 0x10000:
        return bytes([mt | 25]) + n.to_bytes(2, "big")
    if n < 0x100000000:
        return bytes([mt | 26]) + n.to_bytes(4, "big")
    return bytes([mt | 27]) + n.to_bytes(8, "big")


def encode_float(x: float) -> bytes:
    for fmt, ai in ((">e", 25), (">f", 26)):
        try:
            packed = struct.pack(fmt, x)
        except OverflowError:
            continue
        if struct.unpack(fmt, packed)[0] == x:
            return bytes([0xE0 | ai]) + packed
    return b"\xfb" + struct.pack(">d", x)


def _text(s: str) -> bytes:
    b = s.encode("utf-8")
    return _head(3, len(b)) + b


def _map(items: Iterable[tuple[str, Any]]) -> bytes:
    pairs = sorted((_text(k), encode_value(v)) for k, v in items)
    return _head(5, len(pairs)) + b"".join(k + v for k, v in pairs)


def encode_value(v: Any) -> bytes:
    """Canonical encoding of one Value (``None`` encodes as null; it only
    arises inside masked hashing trees)."""
    if v is True:
        return b"\xf5"
    if v is False:
        return b"\xf4"
    if v is None:
        return b"\xf6"
    if isinstance(v, int):
        if not INT_MIN <= v <= INT_MAX:
            raise InvalidValue("integer outside signed 64-bit range")
        return _head(0, v) if v >= 0 else _head(1, -1 - v)
    if isinstance(v, float):
        return encode_float(v)
    if isinstance(v, str):
        return _text(v)
    if isinstance(v, bytes):
        return _head(2, len(v)) + v
    if isinstance(v, Ident):
        return _head(6, TAG_IDENT) + b"\x82" + _text(v.namespace) + _text(v.local)
    if isinstance(v, Timestamp):
        return _head(6, TAG_DATETIME) + _text(str(v))
    if isinstance(v, (list, tuple)):
        return _head(4, len(v)) + b"".join(encode_value(x) for x in v)
    if isinstance(v, dict):
        return _map(v.items())
    if isinstance(v, CallExpr):
        return (_head(6, TAG_CALL) + b"\x83" + _text(v.namespace) + _text(v.name)
                + _map(v.args.items()))
    raise InvalidValue(f"cannot encode {type(v).__name__}")


def _envelope(mtype: str, content: Any, meta: Mapping[str, Any]) -> bytes:
    return b"\x83" + _text(mtype) + encode_value(content) + _map(meta.items())


def encode_canonical(m: Message) -> bytes:
    return _envelope(m.mtype.value, m.content, m.meta.present())


# -- decoding -----------------------------------------------------------------

_MIN_FOR_AI = {24: 24, 25: 0x100, 26: 0x10000, 27: 0x100000000}


class _Reader:
    def __init__(self, data: bytes):
        self.b = bytes(data)
        self.pos = 0
        self.bytes_ok = False  # set only while reading meta.sig

    def fail(self, rule: str, detail: str = "", at: int | None = None) -> DecodeError:
        return DecodeError(self.pos if at is None else at, rule, detail)

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.b):
            raise self.fail("CANON.TRUNCATED", f"need {n} bytes")
        out = self.b[self.pos:self.pos + n]
        self.pos += n
        return out

    def head(self) -> tuple[int, int, int]:
        """Return (major, additional-info, argument) enforcing shortest form."""
        start = self.pos
        ib = self.take(1)[0]
        major, ai = ib >> 5, ib & 0x1F
        if major == 7:
            return major, ai, 0
        if ai < 24:
            return major, ai, ai
        if ai == 31:
            raise self.fail("CANON.INDEFINITE", "indefinite length", start)
        if ai > 27:
            raise self.fail("CANON.RESERVED", f"additional info {ai}", start)
        n = int.from_bytes(self.take(1 << (ai - 24)), "big")
        if n < _MIN_FOR_AI[ai]:
            raise self.fail("CANON.INTWIDTH", f"argument {n} not in shortest form", start)
        return major, ai, n

    def item(self, depth: int = 0) -> Any:
        if depth > _MAX_DEPTH:
            raise self.fail("CANON.DEPTH", "nesting too deep")
        start = self.pos
        major, ai, n = self.head()
        if major == 0:
            if n > INT_MAX:
                raise self.fail("VALUE.RANGE", "integer above signed 64-bit range", start)
            return n
        if major == 1:
            if -1 - n < INT_MIN:
                raise self.fail("VALUE.RANGE", "integer below signed 64-bit range", start)
            return -1 - n
        if major == 2:
            if not self.bytes_ok:
                raise self.fail("SCHEMA.CONTENT", "byte strings are only allowed as meta.sig", start)
            self.bytes_ok = False
            return self.take(n)
        if major == 3:
            return self.text_body(n, start)
        if major == 4:
            return [self.item(depth + 1) for _ in range(n)]
        if major == 5:
            return self.map_body(n, depth)
        if major == 6:
            return self.tagged(n, start, depth)
        return self.simple(ai, start)

    def text_body(self, n: int, start: int) -> str:
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise self.fail("CANON.UTF8", "invalid UTF-8 in text string", start) from None

    def text(self, what: str) -> str:
        start = self.pos
        major, _, n = self.head()
        if major != 3:
            raise self.fail("SCHEMA.TYPE", f"{what} must be a text string", start)
        return self.text_body(n, start)

    def map_body(self, n: int, depth: int, offsets: dict | None = None) -> dict:
        out: dict[str, Any] = {}
        prev = b""
        for _ in range(n):
            kstart = self.pos
            key = self.text("map key")
            kbytes = self.b[kstart:self.pos]
            if out and kbytes == prev:
                raise self.fail("CANON.DUPKEY", f"duplicate key {key!r}", kstart)
            if out and kbytes < prev:
                raise self.fail("CANON.KEYORDER", f"key {key!r} out of order", kstart)
            prev = kbytes
            if offsets is not None:
                offsets[key] = self.pos
                self.bytes_ok = key == "sig"
            out[key] = self.item(depth + 1)
            self.bytes_ok = False
        return out

    def tagged(self, tag: int, start: int, depth: int) -> Any:
        if tag == TAG_DATETIME:
            s = self.text("timestamp")
            try:
                ts = Timestamp.parse(s)
            except InvalidValue as exc:
                raise self.fail("VALUE.TIMESTAMP", str(exc), start) from None
            if str(ts) != s:
                raise self.fail("CANON.TIMESTAMP", f"{s!r} is not in canonical form", start)
            return ts
        if tag in (TAG_IDENT, TAG_CALL):
            astart = self.pos
            major, _, n = self.head()
            want = 2 if tag == TAG_IDENT else 3
            if major != 4 or n != want:
                raise self.fail("SCHEMA.TYPE", f"tag {tag} wraps a {want}-element array", astart)
            ns = self.text("namespace")
            name = self.text("name")
            try:
                if tag == TAG_IDENT:
                    return Ident(ns, name)
                mstart = self.pos
                major, _, n = self.head()
                if major != 5:
                    raise self.fail("SCHEMA.TYPE", "call arguments must be a map", mstart)
                args = self.map_body(n, depth)
                return CallExpr(ns, name, args)
            except InvalidValue as exc:
                raise self.fail("VALUE.INVALID", str(exc), start) from None
        raise self.fail("CANON.TAG", f"unsupported tag {tag}", start)

    def simple(self, ai: int, start: int) -> Any:
        if ai == 20:
            return False
        if ai == 21:
            return True
        if ai in (25, 26, 27):
            width = 1 << (ai - 24)
            raw = self.take(width)
            fmt = {2: ">e", 4: ">f", 8: ">d"}[width]
            x = struct.unpack(fmt, raw)[0]
            if x != x or x in (float("inf"), float("-inf")):
                raise self.fail("VALUE.NONFINITE", "NaN or infinity", start)
            if len(encode_float(x)) != width + 1:
                raise self.fail("CANON.FLOATWIDTH", f"{x!r} fits a narrower float", start)
            return x
        if ai == 31:
            raise self.fail("CANON.INDEFINITE", "break outside indefinite item", start)
        raise self.fail("CANON.SIMPLE", f"unsupported simple value {ai}", start)


def _meta_from_tree(tree: dict, offsets: dict, r: _Reader, at: int) -> Metadata:
    for k in tree:
        if k not in META_FIELDS:
            raise r.fail("SCHEMA.FIELD", f"unknown metadata field {k!r}", offsets[k])
    for k in ("id", "ts"):
        if k not in tree:
            raise r.fail("SCHEMA.REQUIRED", f"metadata field {k} missing", at)
    checks = {
        "id": Ident, "cid": Ident, "of": Ident, "reasoning_trace": Ident, "ts": Timestamp,
        "ver": str, "model_version": str, "space": str, "conf": float, "latency": int,
        "sig": bytes, "ctx": list, "cap": list, "priors": dict, "cost": dict,
    }
    for k, v in tree.items():
        ok = isinstance(v, checks[k]) and not isinstance(v, bool)
        if ok and k == "ctx":
            ok = all(isinstance(x, Ident) for x in v)
        elif ok and k == "cap":
            ok = all(isinstance(x, str) for x in v)
        elif ok and k == "priors":
            ok = all(isinstance(x, float) for x in v.values())
        elif ok and k == "cost":
            ok = all(isinstance(x, int) and not isinstance(x, bool) for x in v.values())
        if not ok:
            raise r.fail("SCHEMA.TYPE", f"metadata field {k} has the wrong type", offsets[k])
    try:
        return Metadata(**tree)
    except InvalidValue as exc:
        raise r.fail("SCHEMA.TYPE", str(exc), at) from None


_TYPES = {t.value: t for t in MessageType}


def _decode_message(r: _Reader) -> Message:
    start = r.pos
    major, _, n = r.head()
    if major != 4 or n != 3:
        raise r.fail("SCHEMA.ENVELOPE", "envelope must be a 3-element array", start)
    tstart = r.pos
    name = r.text("message type")
    mtype = _TYPES.get(name)
    if mtype is None:
        raise r.fail("SCHEMA.MTYPE", f"unknown message type {name!r}", tstart)
    cstart = r.pos
    content = r.item(1)
    mstart = r.pos
    major, _, n = r.head()
    if major != 5:
        raise r.fail("SCHEMA.ENVELOPE", "metadata must be a map", mstart)
    offsets: dict[str, int] = {}
    tree = r.map_body(n, 1, offsets)
    meta = _meta_from_tree(tree, offsets, r, mstart)
    try:
        return Message(mtype, content, meta)
    except InvalidValue as exc:
        raise r.fail("VALUE.INVALID", str(exc), cstart) from None


def decode(data: bytes) -> Message:
    r = _Reader(data)
    m = _decode_message(r)
    if r.pos != len(r.b):
        raise r.fail("CANON.TRAILING", f"{len(r.b) - r.pos} bytes after the message")
    return m


# -- masks and hashing --------------------------------------------------------

_MASKABLE_META = frozenset(META_FIELDS)


class MaskError(ValueError):
    pass


def check_path(path: str) -> None:
    """Reject paths that do not name a Message (or Envelope) field."""
    parts = path.split(".")
    if any(not p for p in parts):
        raise MaskError(f"malformed field path {path!r}")
    root = parts[0]
    if root == "content":
        return
    if root == "meta" and len(parts) >= 2 and parts[1] in _MASKABLE_META:
        return
    if root == "wall_ts" and len(parts) == 1:
        return
    raise MaskError(f"unknown field path {path!r}")


@dataclass(frozen=True)
class FieldMask:
    """Paths excluded from comparison/hashing, plus numeric tolerance bands.

    A path under ``tolerances`` is compared as ``|left - right| <= band``
    when both sides are numbers; for hashing it is treated as excluded.
    """

    excluded: frozenset = frozenset()
    tolerances: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "excluded", frozenset(self.excluded))
        tol = self.tolerances.items() if isinstance(self.tolerances, Mapping) else self.tolerances
        object.__setattr__(self, "tolerances", tuple(sorted((p, float(b)) for p, b in tol)))
        for p in self.excluded:
            check_path(p)
        for p, band in self.tolerances:
            check_path(p)
            if band < 0:
                raise MaskError(f"negative tolerance for {p}")

    def union(self, paths: Iterable[str] = (), tolerances: Mapping[str, float] | None = None) -> FieldMask:
        tol = dict(self.tolerances)
        tol.update(tolerances or {})
        return FieldMask(self.excluded | frozenset(paths), tol)

    def tolerance(self, path: str) -> float | None:
        for p, band in self.tolerances:
            if p == path:
                return band
        return None

    def hides(self, path: str) -> bool:
        """True if ``path`` or one of its ancestors is excluded."""
        parts = path.split(".")
        return any(".".join(parts[:i]) in self.excluded for i in range(1, len(parts) + 1))

    def hash_paths(self) -> frozenset:
        return self.excluded | frozenset(p for p, _ in self.tolerances)


VOLATILE_META = ("meta.id", "meta.ts", "meta.latency", "meta.cost", "meta.sig")
EMPTY_MASK = FieldMask()
REPLAY_MASK = FieldMask(frozenset(VOLATILE_META))
DIFF_MASK = FieldMask(frozenset(VOLATILE_META) | {"wall_ts"})
CONF_TOLERANCE_MASK = DIFF_MASK.union(tolerances={"meta.conf": 0.05})

PRESETS = {
    "none": EMPTY_MASK,
    "replay": REPLAY_MASK,
    "default": DIFF_MASK,
    "conf-tolerance": CONF_TOLERANCE_MASK,
}


def _without(obj: Any, parts: list[str]) -> Any:
    """Copy of ``obj`` with the sub-path removed (absent paths are no-ops)."""
    head, rest = parts[0], parts[1:]
    if isinstance(obj, CallExpr):
        return CallExpr(obj.namespace, obj.name, _without(obj.args, parts))
    if isinstance(obj, dict):
        if head not in obj:
            return obj
        out = dict(obj)
        if rest:
            out[head] = _without(obj[head], rest)
        else:
            del out[head]
        return out
    if isinstance(obj, (list, tuple)) and head.isdigit() and int(head) < len(obj):
        out = list(obj)
        i = int(head)
        out[i] = _without(obj[i], rest) if rest else None
        return out
    return obj


def masked_encoding(m: Message, mask: FieldMask) -> bytes:
    content: Any = m.content
    meta: dict[str, Any] = m.meta.present()
    for path in sorted(mask.hash_paths()):
        parts = path.split(".")
        if parts[0] == "content":
            content = None if len(parts) == 1 else _without(content, parts[1:])
        elif parts[0] == "meta":
            meta = _without(meta, parts[1:])
    return _envelope(m.mtype.value, content, meta)


def canonical_hash(m: Message, mask: FieldMask = EMPTY_MASK) -> bytes:
    """SHA-256 over the canonical encoding with masked fields removed."""
    if not isinstance(mask, FieldMask):
        mask = FieldMask(frozenset(mask))
    return hashlib.sha256(masked_encoding(m, mask)).digest()


# -- .aiclb files -------------------------------------------------------------


def dump_records(msgs: Iterable[Message]) -> bytes:
    out = bytearray(FILE_MAGIC + bytes([FILE_VERSION]))
    for m in msgs:
        rec = encode_canonical(m)
        out += len(rec).to_bytes(4, "big") + rec
    return bytes(out)


def load_records(data: bytes) -> list[Message]:
    if data[:4] != FILE_MAGIC:
        raise DecodeError(0, "FILE.MAGIC", "missing AICL magic")
    if len(data) < 5 or data[4] != FILE_VERSION:
        raise DecodeError(4, "FILE.VERSION", "unsupported format version")
    pos = 5
    out = []
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError(pos, "FILE.TRUNCATED", "partial length prefix")
        n = int.from_bytes(data[pos:pos + 4], "big")
        body = data[pos + 4:pos + 4 + n]
        if len(body) != n:
            raise DecodeError(pos, "FILE.TRUNCATED", "record shorter than its prefix")
        try:
            out.append(decode(body))
        except DecodeError as exc:
            raise DecodeError(pos + 4 + exc.offset, exc.rule, exc.detail) from None
        pos += 4 + n
    return out

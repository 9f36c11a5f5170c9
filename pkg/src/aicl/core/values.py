"""Recursive value model shared by the text and binary forms.

A Value is one of: ``str``, ``int`` (signed 64-bit), ``float`` (finite
binary64), ``bool``, :class:`Ident`, :class:`Timestamp`, ``list`` (or
``tuple``), ``dict`` with bare-word string keys, or :class:`CallExpr`.
Plain Python containers are used for lists and maps; they are treated as
immutable once placed inside a Message.
"""

from __future__ import annotations

import math
import re
import struct
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Union

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

NAMESPACE_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
LOCAL_RE = re.compile(r"[A-Za-z0-9_-]+\Z")
KEY_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
CALL_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*\Z")

_RFC3339_RE = re.compile(
    r"(\d{4})-(\d{2})-(\d{2})[Tt](\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?"
    r"(?:([Zz])|([+-])(\d{2}):(\d{2}))\Z"
)


class InvalidValue(ValueError):
    """A value violates the data-model invariants."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass(frozen=True)
class Ident:
    """``namespace!local`` identifier (e.g. ``u!q1``)."""

    namespace: str
    local: str

    def __post_init__(self) -> None:
        if not isinstance(self.namespace, str) or not NAMESPACE_RE.match(self.namespace):
            raise InvalidValue(f"bad identifier namespace {self.namespace!r}")
        if not isinstance(self.local, str) or not LOCAL_RE.match(self.local):
            raise InvalidValue(f"bad identifier local part {self.local!r}")

    @classmethod
    def parse(cls, text: str) -> Ident:
        ns, sep, local = text.partition("!")
        if not sep:
            raise InvalidValue(f"identifier {text!r} lacks '!'")
        return cls(ns, local)

    def __str__(self) -> str:
        return f"{self.namespace}!{self.local}"


@dataclass(frozen=True, order=False)
class Timestamp:
    """A UTC instant with second precision plus optional fractional digits.

    ``fraction`` holds the decimal digits after the point with trailing
    zeros removed, so equal instants compare equal and print identically.
    """

    seconds: datetime
    fraction: str = ""

    def __post_init__(self) -> None:
        s = self.seconds
        if s.tzinfo is None or s.utcoffset() != timedelta(0) or s.microsecond:
            raise InvalidValue("timestamp seconds must be a whole-second UTC datetime")
        if self.fraction and (not self.fraction.isdigit() or self.fraction.endswith("0")):
            raise InvalidValue(f"bad fraction digits {self.fraction!r}")

    @classmethod
    def parse(cls, text: str) -> Timestamp:
        m = _RFC3339_RE.match(text)
        if not m:
            raise InvalidValue(f"not an RFC 3339 date-time: {text!r}")
        year, month, day, hour, minute, sec = (int(g) for g in m.group(1, 2, 3, 4, 5, 6))
        try:
            dt = datetime(year, month, day, hour, minute, sec, tzinfo=timezone.utc)
            if m.group(9):
                offset = timedelta(hours=int(m.group(10)), minutes=int(m.group(11)))
                if offset >= timedelta(hours=24):
                    raise ValueError("offset out of range")
                dt = dt - offset if m.group(9) == "+" else dt + offset
        except (ValueError, OverflowError) as exc:
            raise InvalidValue(f"invalid date-time {text!r}: {exc}") from None
        return cls(dt, (m.group(7) or "").rstrip("0"))

    @classmethod
    def from_datetime(cls, dt: datetime) -> Timestamp:
        if dt.tzinfo is None:
            raise InvalidValue("naive datetime")
        dt = dt.astimezone(timezone.utc)
        frac = f"{dt.microsecond:06d}".rstrip("0") if dt.microsecond else ""
        return cls(dt.replace(microsecond=0), frac)

    def shifted(self, seconds: int) -> Timestamp:
        return Timestamp(self.seconds + timedelta(seconds=seconds), self.fraction)

    def sort_key(self) -> tuple:
        return (self.seconds, self.fraction.ljust(32, "0"))

    def __lt__(self, other: Timestamp) -> bool:
        return self.sort_key() < other.sort_key()

    def __le__(self, other: Timestamp) -> bool:
        return self.sort_key() <= other.sort_key()

    def __str__(self) -> str:
        s = self.seconds
        base = f"{s.year:04d}-{s.month:02d}-{s.day:02d}T{s.hour:02d}:{s.minute:02d}:{s.second:02d}"
        return f"{base}.{self.fraction}Z" if self.fraction else f"{base}Z"


@dataclass(frozen=True, eq=False)
class CallExpr:
    """``namespace:name{args}``, e.g. ``tool:weather_now{location:"Shanghai"}``."""

    namespace: str
    name: str
    args: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not isinstance(self.namespace, str) or not NAMESPACE_RE.match(self.namespace):
            raise InvalidValue(f"bad call namespace {self.namespace!r}")
        if not isinstance(self.name, str) or not CALL_NAME_RE.match(self.name):
            raise InvalidValue(f"bad call name {self.name!r}")
        check_value(self.args, "args")
        if not isinstance(self.args, dict):
            raise InvalidValue("call args must be a map")

    @property
    def head(self) -> str:
        return f"{self.namespace}:{self.name}"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CallExpr):
            return NotImplemented
        return structural_key(self) == structural_key(other)

    def __hash__(self) -> int:
        return hash(structural_key(self))


Value = Union[str, int, float, bool, Ident, Timestamp, list, tuple, dict, CallExpr]


def check_value(v: Any, path: str = "") -> None:
    """Raise InvalidValue unless ``v`` is a well-formed Value."""
    if isinstance(v, bool):
        return
    if isinstance(v, int):
        if not INT_MIN <= v <= INT_MAX:
            raise InvalidValue("integer outside signed 64-bit range", path)
    elif isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            raise InvalidValue("NaN and infinities are not values", path)
    elif isinstance(v, str):
        check_text(v, path)
    elif isinstance(v, (Ident, Timestamp, CallExpr)):
        return
    elif isinstance(v, (list, tuple)):
        for i, item in enumerate(v):
            check_value(item, f"{path}.{i}" if path else str(i))
    elif isinstance(v, dict):
        for k, item in v.items():
            if not isinstance(k, str) or not KEY_RE.match(k):
                raise InvalidValue(f"map key {k!r} is not a bare word", path)
            check_value(item, f"{path}.{k}" if path else k)
    else:
        raise InvalidValue(f"unsupported value type {type(v).__name__}", path)


def check_text(s: str, path: str = "") -> None:
    try:
        s.encode("utf-8")
    except UnicodeEncodeError:
        raise InvalidValue("text contains lone surrogates", path) from None


def structural_key(v: Any) -> tuple:
    """Hashable key under which two Values are equal iff they are the same Value.

    Unlike ``==`` it keeps ``True``/``1``/``1.0`` and ``0.0``/``-0.0`` apart,
    matching byte equality of the canonical encoding.
    """
    if isinstance(v, bool):
        return ("b", v)
    if isinstance(v, int):
        return ("i", v)
    if isinstance(v, float):
        return ("f", struct.pack(">d", v))
    if isinstance(v, str):
        return ("s", v)
    if isinstance(v, Ident):
        return ("id", v.namespace, v.local)
    if isinstance(v, Timestamp):
        return ("t", str(v))
    if isinstance(v, (list, tuple)):
        return ("l", tuple(structural_key(x) for x in v))
    if isinstance(v, dict):
        return ("m", tuple(sorted((k, structural_key(x)) for k, x in v.items())))
    if isinstance(v, CallExpr):
        return ("c", v.namespace, v.name, structural_key(v.args))
    if isinstance(v, bytes):
        return ("y", v)
    if v is None:
        return ("n",)
    raise InvalidValue(f"unsupported value type {type(v).__name__}")


def values_equal(a: Any, b: Any) -> bool:
    return structural_key(a) == structural_key(b)

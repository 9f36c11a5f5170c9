"""Compact text form: ``[TYPE: CONTENT | key:value, ...]``.

Grammar (whitespace between tokens is insignificant)::

    stream   := (message | comment)*          comment := '#' .* EOL
    message  := '[' TYPE ':' value '|' pair (',' pair)* ']'
    pair     := KEY ':' value
    value    := string | number | 'true' | 'false' | ident | timestamp
              | list | map | call
    list     := '[' (value (',' value)*)? ']'
    map      := '{' (pair (',' pair)*)? '}'
    ident    := NS '!' LOCAL                  e.g. u!q1
    call     := NS ':' NAME map               e.g. tool:weather_now{...}
    timestamp:= 't(' RFC3339 ')'
    string   := '"' (char | '\\"' | '\\\\' | '\\n' | '\\t' | '\\u{' HEX '}')* '"'

Comments are only legal between messages.
"""

from __future__ import annotations

import bisect
import enum
import re
from typing import Any, Iterable

from .core.message import META_FIELDS, Message, MessageType, Metadata
from .core.values import (
    INT_MAX,
    INT_MIN,
    CallExpr,
    Ident,
    InvalidValue,
    Timestamp,
)


class PrintStyle(enum.Enum):
    COMPACT = "compact"
    PRETTY = "pretty"


class ParseError(ValueError):
    def __init__(self, line: int, column: int, expected: str, found: str, offset: int = 0):
        super().__init__(f"line {line}, column {column}: expected {expected}, found {found}")
        self.line = line
        self.column = column
        self.expected = expected
        self.found = found
        self.offset = offset


_WS = " \t\r\n"
_WORD = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_LOCAL = re.compile(r"[A-Za-z0-9_-]+")
_CALL_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*")
_TYPE = re.compile(r"[A-Z]+(?:\.[A-Z]+)*")
_NUMBER = re.compile(r"-?(?:0|[1-9][0-9]*)(\.[0-9]+)?([eE][+-]?[0-9]+)?")
_HEX = re.compile(r"(?:[0-9a-fA-F]{2})*\Z")
_UESC = re.compile(r"\\u\{([0-9A-Fa-f]{1,6})\}")
_FOUND = re.compile(r"[^\s,:|\[\]{}()]+|.", re.S)
_TYPES = {t.value: t for t in MessageType}


class _Parser:
    def __init__(self, text: str):
        self.s = text
        self.n = len(text)
        self.pos = 0
        self._lines = [0] + [m.end() for m in re.finditer("\n", text)]

    # -- errors -------------------------------------------------------------
    def error(self, expected: str, at: int | None = None) -> ParseError:
        at = self.pos if at is None else at
        line = bisect.bisect_right(self._lines, at)
        column = at - self._lines[line - 1] + 1
        if at >= self.n:
            found = "end of input"
        else:
            m = _FOUND.match(self.s, at)
            found = repr(m.group(0))
        return ParseError(line, column, expected, found, at)

    # -- lexical helpers ----------------------------------------------------
    def ws(self, comments: bool = False) -> None:
        s, n = self.s, self.n
        while self.pos < n:
            c = s[self.pos]
            if c in _WS:
                self.pos += 1
            elif comments and c == "#":
                end = s.find("\n", self.pos)
                self.pos = n if end < 0 else end + 1
            else:
                break

    def peek(self) -> str:
        return self.s[self.pos] if self.pos < self.n else ""

    def expect(self, ch: str, what: str | None = None) -> None:
        self.ws()
        if self.peek() != ch:
            raise self.error(what or repr(ch))
        self.pos += 1

    def match(self, rx: re.Pattern, what: str) -> str:
        m = rx.match(self.s, self.pos)
        if not m:
            raise self.error(what)
        self.pos = m.end()
        return m.group(0)

    # -- grammar ------------------------------------------------------------
    def stream(self) -> list[Message]:
        out = []
        self.ws(comments=True)
        while self.pos < self.n:
            out.append(self.message())
            self.ws(comments=True)
        return out

    def message(self) -> Message:
        self.expect("[", "'[' starting a message")
        self.ws()
        start = self.pos
        name = self.match(_TYPE, "message type")
        mtype = _TYPES.get(name)
        if mtype is None:
            raise self.error("message type", start)
        self.expect(":")
        content = self.value()
        self.expect("|")
        meta_start = self.pos
        fields: dict[str, Any] = {}
        while True:
            self.ws()
            key_at = self.pos
            if not _WORD.match(self.s, self.pos):
                raise self.error("metadata field")
            key = self.match(_WORD, "metadata field")
            if key not in META_FIELDS:
                raise self.error("metadata field", key_at)
            if key in fields:
                raise self.error(f"metadata field other than duplicate {key}", key_at)
            self.expect(":")
            self.ws()
            val_at = self.pos
            fields[key] = _meta_field(self, key, self.value(), val_at)
            self.ws()
            if self.peek() == ",":
                self.pos += 1
                continue
            break
        self.ws()
        if self.peek() != "]":
            raise self.error("',' or ']'")
        for required in ("id", "ts"):
            if required not in fields:
                raise self.error(f"metadata field {required}")
        self.pos += 1
        try:
            return Message(mtype, content, Metadata(**fields))
        except InvalidValue as exc:
            raise self.error(str(exc), meta_start) from None

    def value(self) -> Any:
        self.ws()
        c = self.peek()
        if c == '"':
            return self.string()
        if c == "-" or c.isdigit():
            return self.number()
        if c == "[":
            return self.list_()
        if c == "{":
            return self.map_()
        if c.isalpha() or c == "_":
            return self.word_value()
        raise self.error("value")

    def list_(self) -> list:
        self.pos += 1
        items = []
        self.ws()
        if self.peek() == "]":
            self.pos += 1
            return items
        while True:
            items.append(self.value())
            self.ws()
            c = self.peek()
            if c == ",":
                self.pos += 1
            elif c == "]":
                self.pos += 1
                return items
            else:
                raise self.error("',' or ']'")

    def map_(self) -> dict:
        self.expect("{")
        out: dict[str, Any] = {}
        self.ws()
        if self.peek() == "}":
            self.pos += 1
            return out
        while True:
            self.ws()
            key_at = self.pos
            key = self.match(_WORD, "map key")
            if key in out:
                raise self.error(f"map key other than duplicate {key}", key_at)
            self.expect(":")
            out[key] = self.value()
            self.ws()
            c = self.peek()
            if c == ",":
                self.pos += 1
            elif c == "}":
                self.pos += 1
                return out
            else:
                raise self.error("',' or '}'")

    def word_value(self) -> Any:
        start = self.pos
        word = self.match(_WORD, "value")
        c = self.peek()
        if c == "!":
            self.pos += 1
            local = self.match(_LOCAL, "identifier local part")
            return Ident(word, local)
        if c == ":":
            self.pos += 1
            name = self.match(_CALL_NAME, "call name")
            self.ws()
            if self.peek() != "{":
                raise self.error("'{' opening call arguments")
            args = self.map_()
            return CallExpr(word, name, args)
        if word == "t" and c == "(":
            self.pos += 1
            end = self.s.find(")", self.pos)
            body_at = self.pos
            if end < 0:
                raise self.error("RFC 3339 date-time followed by ')'")
            try:
                ts = Timestamp.parse(self.s[self.pos:end])
            except InvalidValue:
                raise self.error("RFC 3339 date-time", body_at) from None
            self.pos = end + 1
            return ts
        if word == "true":
            return True
        if word == "false":
            return False
        raise self.error("value", start)

    def number(self) -> int | float:
        start = self.pos
        m = _NUMBER.match(self.s, self.pos)
        if not m:
            raise self.error("number")
        end = m.end()
        if end < self.n and (self.s[end].isalnum() or self.s[end] in "._"):
            raise self.error("number", start)
        self.pos = end
        text = m.group(0)
        if m.group(1) is None and m.group(2) is None:
            v = int(text)
            if not INT_MIN <= v <= INT_MAX:
                raise self.error("integer within signed 64-bit range", start)
            return v
        f = float(text)
        if f in (float("inf"), float("-inf")):
            raise self.error("finite number", start)
        return f

    def string(self) -> str:
        start = self.pos
        self.pos += 1
        s, n = self.s, self.n
        buf = []
        while True:
            if self.pos >= n:
                raise self.error("closing '\"'", start)
            c = s[self.pos]
            if c == '"':
                self.pos += 1
                return "".join(buf)
            if c == "\\":
                esc = s[self.pos + 1:self.pos + 2]
                if esc == '"' or esc == "\\":
                    buf.append(esc)
                    self.pos += 2
                elif esc == "n":
                    buf.append("\n")
                    self.pos += 2
                elif esc == "t":
                    buf.append("\t")
                    self.pos += 2
                elif esc == "u":
                    m = _UESC.match(s, self.pos)
                    cp = int(m.group(1), 16) if m else -1
                    if not m or cp > 0x10FFFF or 0xD800 <= cp <= 0xDFFF:
                        raise self.error("escape \\u{HEX} naming a scalar value")
                    buf.append(chr(cp))
                    self.pos = m.end()
                else:
                    raise self.error("escape sequence")
            elif c < " " or c == "\x7f":
                raise self.error("printable character or escape")
            elif 0xD800 <= ord(c) <= 0xDFFF:
                raise self.error("unicode scalar value")
            else:
                buf.append(c)
                self.pos += 1


def _meta_field(p: _Parser, key: str, v: Any, at: int) -> Any:
    def bad(what: str) -> ParseError:
        return p.error(what, at)

    if key in ("id", "cid", "of", "reasoning_trace"):
        if not isinstance(v, Ident):
            raise bad("identifier")
        return v
    if key == "ts":
        if not isinstance(v, Timestamp):
            raise bad("timestamp t(...)")
        return v
    if key in ("ver", "model_version", "space"):
        if not isinstance(v, str):
            raise bad("string")
        return v
    if key == "ctx":
        if not isinstance(v, list) or not all(isinstance(x, Ident) for x in v):
            raise bad("list of identifiers")
        return tuple(v)
    if key == "conf":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise bad("number")
        return float(v)
    if key == "priors":
        if not isinstance(v, dict) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v.values()):
            raise bad("map of probabilities")
        return {k: float(x) for k, x in v.items()}
    if key == "cost":
        if not isinstance(v, dict) or any(isinstance(x, bool) or not isinstance(x, int) for x in v.values()):
            raise bad("map of integer counters")
        return v
    if key == "latency":
        if isinstance(v, bool) or not isinstance(v, int):
            raise bad("integer milliseconds")
        return v
    if key == "sig":
        if not isinstance(v, str) or not _HEX.match(v):
            raise bad("hex string")
        return bytes.fromhex(v)
    if key == "cap":
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise bad("list of strings")
        return tuple(v)
    raise bad("metadata field")  # pragma: no cover


def parse_message(text: str) -> Message:
    p = _Parser(text)
    p.ws()
    m = p.message()
    p.ws()
    if p.pos < p.n:
        raise p.error("end of input")
    return m


def parse_stream(text: str) -> list[Message]:
    return _Parser(text).stream()


def parse_value(text: str) -> Any:
    """Parse one standalone Value literal."""
    p = _Parser(text)
    v = p.value()
    p.ws()
    if p.pos < p.n:
        raise p.error("end of input")
    return v


# -- printing ---------------------------------------------------------------

_ESCAPES = {'"': '\\"', "\\": "\\\\", "\n": "\\n", "\t": "\\t"}


def _quote(s: str) -> str:
    out = ['"']
    for c in s:
        if c in _ESCAPES:
            out.append(_ESCAPES[c])
        elif c < " " or c == "\x7f":
            out.append(f"\\u{{{ord(c):X}}}")
        else:
            out.append(c)
    out.append('"')
    return "".join(out)


def format_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return _quote(v)
    if isinstance(v, Ident):
        return str(v)
    if isinstance(v, Timestamp):
        return f"t({v})"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(format_value(x) for x in v) + "]"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}:{format_value(v[k])}" for k in sorted(v)) + "}"
    if isinstance(v, CallExpr):
        return f"{v.namespace}:{v.name}{format_value(v.args)}"
    raise InvalidValue(f"cannot print {type(v).__name__}")


def format_meta_value(key: str, v: Any) -> str:
    if key == "sig":
        return _quote(v.hex())
    return format_value(v)


def print_message(m: Message, style: PrintStyle = PrintStyle.COMPACT) -> str:
    pairs = [f"{k}:{format_meta_value(k, v)}" for k, v in m.meta.present().items()]
    head = f"[{m.mtype.value}: {format_value(m.content)}"
    if style is PrintStyle.COMPACT:
        return f"{head} | {', '.join(pairs)}]"
    return head + "\n  | " + ",\n    ".join(pairs) + "]"


def print_stream(msgs: Iterable[Message], style: PrintStyle = PrintStyle.COMPACT) -> str:
    return "".join(print_message(m, style) + "\n" for m in msgs)

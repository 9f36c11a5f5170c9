"""Trace logs: persistence, conversation slicing, replay and masked diffing."""

from __future__ import annotations

import enum
import os
import tempfile
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence, Union

from .binary import DIFF_MASK, REPLAY_MASK, FieldMask, canonical_hash, dump_records, load_records
from .core.message import Message, MessageClass, classify
from .core.values import CallExpr, Ident, Timestamp, structural_key
from .text import format_value, parse_stream, print_stream


class TraceError(ValueError):
    def __init__(self, code: str, detail: str):
        super().__init__(f"{code}: {detail}")
        self.code = code


class Direction(enum.Enum):
    INBOUND = "in"
    OUTBOUND = "out"


def default_direction(m: Message) -> Direction:
    """Responses, reasoning marks and assertions leave the system under test."""
    cls = classify(m.mtype)
    if cls in (MessageClass.RESPONSE, MessageClass.REASONING_MARK, MessageClass.ASSERTION):
        return Direction.OUTBOUND
    return Direction.INBOUND


@dataclass(frozen=True)
class Envelope:
    seq: int
    wall_ts: Timestamp
    direction: Direction
    msg: Message


@dataclass(frozen=True)
class TraceHeader:
    format_version: int = 1
    creator: str = "aicl"
    created_at: Optional[Timestamp] = None


@dataclass
class TraceLog:
    """Append-only envelope sequence. One writer; readers should take
    :meth:`snapshot` for a stable prefix."""

    header: TraceHeader = field(default_factory=TraceHeader)
    envelopes: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.envelopes)

    def append(self, e: Envelope) -> TraceLog:
        n = len(self.envelopes)
        if e.seq < n:
            raise TraceError("SEQ.DUP", f"seq {e.seq} already present (next is {n})")
        if e.seq > n:
            raise TraceError("SEQ.GAP", f"seq {e.seq} leaves a gap (next is {n})")
        self.envelopes.append(e)
        return self

    def add(self, m: Message, wall_ts: Optional[Timestamp] = None,
            direction: Optional[Direction] = None) -> Envelope:
        e = Envelope(len(self.envelopes), wall_ts or m.meta.ts, direction or default_direction(m), m)
        self.append(e)
        return e

    def snapshot(self) -> tuple:
        return tuple(self.envelopes)

    def messages(self) -> list[Message]:
        return [e.msg for e in self.envelopes]

    @classmethod
    def from_messages(cls, msgs: Iterable[Message], header: Optional[TraceHeader] = None) -> TraceLog:
        log = cls(header or TraceHeader())
        for m in msgs:
            log.add(m)
        return log


def append(log: TraceLog, e: Envelope) -> TraceLog:
    return log.append(e)


def slice_by_cid(log: TraceLog, cid: Ident) -> list[Envelope]:
    return [e for e in log.snapshot() if e.msg.meta.cid == cid]


# -- persistence --------------------------------------------------------------

PathLike = Union[str, os.PathLike]


def to_bytes(log: TraceLog) -> bytes:
    return dump_records(log.messages())


def from_bytes(data: bytes) -> TraceLog:
    return TraceLog.from_messages(load_records(data))


def _is_binary(path: PathLike) -> bool:
    return Path(path).suffix == ".aiclb"


def write_atomic(path: PathLike, data: bytes) -> None:
    """Write via a temp file, fsync, then rename; readers never see a torn file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(log: TraceLog, path: PathLike) -> None:
    """Write ``.aiclb`` (binary) or any other suffix as compact text;
    durable once this returns."""
    data = to_bytes(log) if _is_binary(path) else print_stream(log.messages()).encode("utf-8")
    write_atomic(path, data)


def read_messages(path: PathLike) -> list[Message]:
    """Load messages from ``.aiclb`` or text; raises ParseError/DecodeError."""
    data = Path(path).read_bytes()
    if _is_binary(path) or data[:4] == b"AICL":
        return load_records(data)
    return parse_stream(data.decode("utf-8"))


def load(path: PathLike) -> TraceLog:
    return TraceLog.from_messages(read_messages(path))


# -- diffing ------------------------------------------------------------------


@dataclass(frozen=True)
class DiffEntry:
    """A differing field. ``None`` on a side means the field is absent there."""

    path: str
    left: Any
    right: Any


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _plain(v: Any) -> Any:
    return v.hex() if isinstance(v, bytes) else v


def _diff(path: str, x: Any, y: Any, mask: FieldMask, out: list[DiffEntry]) -> None:
    if mask.hides(path):
        return
    if x is None and y is None:
        return
    band = mask.tolerance(path)
    if band is not None and _is_num(x) and _is_num(y) and abs(x - y) <= band:
        return
    if isinstance(x, dict) and isinstance(y, dict):
        for k in sorted(set(x) | set(y)):
            _diff(f"{path}.{k}", x.get(k), y.get(k), mask, out)
    elif isinstance(x, (list, tuple)) and isinstance(y, (list, tuple)):
        for i in range(max(len(x), len(y))):
            _diff(f"{path}.{i}", x[i] if i < len(x) else None, y[i] if i < len(y) else None, mask, out)
    elif isinstance(x, CallExpr) and isinstance(y, CallExpr) and x.head == y.head:
        _diff(path, x.args, y.args, mask, out)
    elif x is None or y is None or structural_key(x) != structural_key(y):
        out.append(DiffEntry(path, _plain(x), _plain(y)))


def diff_messages(a: Message, b: Message, mask: FieldMask = DIFF_MASK) -> list[DiffEntry]:
    out: list[DiffEntry] = []
    if a.mtype is not b.mtype:
        out.append(DiffEntry("mtype", a.mtype.value, b.mtype.value))
    _diff("content", a.content, b.content, mask, out)
    _diff("meta", a.meta.present(), b.meta.present(), mask, out)
    return out


def diff_envelopes(a: Envelope, b: Envelope, mask: FieldMask = DIFF_MASK) -> list[DiffEntry]:
    out = diff_messages(a.msg, b.msg, mask)
    _diff("wall_ts", a.wall_ts, b.wall_ts, mask, out)
    return out


def _alignment_keys(envs: Sequence[Envelope], mask: FieldMask) -> list[tuple]:
    """Requests align by (cid, masked replay key); anything correlated by
    ``of`` aligns under its aligned parent; the rest by (cid, type).
    Repeats are told apart by their ordinal in recorded order."""
    key_mask = REPLAY_MASK.union(mask.hash_paths())
    by_id: dict[tuple, tuple] = {}
    seen: Counter = Counter()
    keys = []
    for e in envs:
        m = e.msg
        cid = m.meta.cid
        parent = by_id.get((cid, m.meta.of)) if m.meta.of is not None else None
        if parent is not None:
            base: tuple = ("of", parent, m.mtype.value)
        elif classify(m.mtype) is MessageClass.REQUEST:
            base = ("req", cid, canonical_hash(m, key_mask))
        else:
            base = ("root", cid, m.mtype.value)
        key = (base, seen[base])
        seen[base] += 1
        by_id.setdefault((cid, m.meta.id), key)
        keys.append(key)
    return keys


SeqPair = tuple  # (left seq or None, right seq or None)


def diff_traces(a: TraceLog, b: TraceLog, mask: FieldMask = DIFF_MASK) -> list[tuple[SeqPair, list[DiffEntry]]]:
    """Align ``a`` and ``b`` and diff each aligned pair under ``mask``.

    Messages left unaligned by key (e.g. one whose ``of`` or ``cid``
    changed) are paired in order with unaligned messages of the same
    type; anything still unpaired is reported as missing or extra."""
    ea, eb = a.snapshot(), b.snapshot()
    ka, kb = _alignment_keys(ea, mask), _alignment_keys(eb, mask)
    right = dict(zip(kb, eb))
    pairs: list[tuple[Optional[Envelope], Optional[Envelope]]] = []
    used = set()
    left_over = []
    for key, e in zip(ka, ea):
        other = right.get(key)
        if other is None:
            left_over.append(e)
        else:
            used.add(key)
            pairs.append((e, other))
    right_over = [e for key, e in zip(kb, eb) if key not in used]
    for e in left_over:
        match = next((o for o in right_over if o.msg.mtype is e.msg.mtype), None)
        if match is not None:
            right_over.remove(match)
        pairs.append((e, match))
    pairs.extend((None, o) for o in right_over)
    pairs.sort(key=lambda p: (p[0].seq if p[0] else p[1].seq, p[0] is None))
    out = []
    for x, y in pairs:
        if y is None:
            out.append(((x.seq, None), [DiffEntry("mtype", x.msg.mtype.value, None)]))
        elif x is None:
            out.append(((None, y.seq), [DiffEntry("mtype", None, y.msg.mtype.value)]))
        else:
            entries = diff_envelopes(x, y, mask)
            if entries:
                out.append(((x.seq, y.seq), entries))
    return out


# -- replay -------------------------------------------------------------------


def replay_key(m: Message) -> bytes:
    if classify(m.mtype) is not MessageClass.REQUEST:
        raise TraceError("REPLAY.NOT_REQUEST", f"{m.mtype} is not a request")
    return canonical_hash(m, REPLAY_MASK)


def recorded_responses(msgs: Sequence[Message]) -> dict[tuple, Message]:
    """(cid, request id) -> first RESULT/ERROR correlated to it."""
    out: dict[tuple, Message] = {}
    for m in msgs:
        if classify(m.mtype) is MessageClass.RESPONSE and m.meta.of is not None:
            out.setdefault((m.meta.cid, m.meta.of), m)
    return out


class ResponderAdapter(Protocol):
    def respond(self, request: Message) -> Optional[Message]:
        """Return the response to ``request``, or None if there is none."""


class StubFromTrace:
    """Answers each request with the response recorded for an equal request
    (by replay key); repeated keys are served first-in, first-out."""

    def __init__(self, log: TraceLog):
        msgs = log.messages()
        answers = recorded_responses(msgs)
        self._queues: dict[bytes, deque] = defaultdict(deque)
        for m in msgs:
            if classify(m.mtype) is MessageClass.REQUEST:
                self._queues[replay_key(m)].append(answers.get((m.meta.cid, m.meta.id)))

    def respond(self, request: Message) -> Optional[Message]:
        q = self._queues.get(replay_key(request))
        if not q:
            return None
        return q.popleft()


class NullResponder:
    """Never answers; every recorded response shows up as missing."""

    def respond(self, request: Message) -> Optional[Message]:
        return None


ADAPTERS: dict[str, Callable[[TraceLog], ResponderAdapter]] = {
    "recorded": StubFromTrace,
    "null": lambda log: NullResponder(),
}


@dataclass
class ReplayReport:
    total: int = 0
    matched: int = 0
    mismatched: list = field(default_factory=list)  # (seq, [DiffEntry])
    missing_stub: list = field(default_factory=list)  # seq

    @property
    def ok(self) -> bool:
        return self.matched == self.total


def replay(log: TraceLog, responder: ResponderAdapter, mask: FieldMask = REPLAY_MASK) -> ReplayReport:
    """Feed every request in seq order and compare the answer with the
    recording under ``mask``. Responder failures never escape."""
    envs = log.snapshot()
    answers = recorded_responses([e.msg for e in envs])
    report = ReplayReport()
    for e in envs:
        m = e.msg
        if classify(m.mtype) is not MessageClass.REQUEST:
            continue
        report.total += 1
        expected = answers.get((m.meta.cid, m.meta.id))
        try:
            got = responder.respond(m)
        except Exception:
            report.missing_stub.append(e.seq)
            continue
        if got is None and expected is None:
            report.matched += 1
        elif got is None:
            report.missing_stub.append(e.seq)
        elif expected is None:
            report.mismatched.append((e.seq, [DiffEntry("mtype", None, got.mtype.value)]))
        else:
            entries = diff_messages(expected, got, mask)
            if entries:
                report.mismatched.append((e.seq, entries))
            else:
                report.matched += 1
    return report


# -- reports ------------------------------------------------------------------


def _cell(v: Any) -> str:
    return "<absent>" if v is None else format_value(v)


def format_replay(report: ReplayReport, porcelain: bool = False) -> list[str]:
    rows = []
    for seq, entries in report.mismatched:
        for d in entries:
            rows.append(("error", str(seq), d.path, _cell(d.left), _cell(d.right)))
    for seq in report.missing_stub:
        rows.append(("error", str(seq), "-", "<recorded>", "<absent>"))
    lines = ["\t".join(r) if porcelain else " ".join(r) for r in rows]
    if not porcelain:
        lines.append(f"replay: {report.matched}/{report.total} matched, {len(report.mismatched)} mismatched, "
                     f"{len(report.missing_stub)} missing")
    return lines


def format_diff(entries: list[tuple[SeqPair, list[DiffEntry]]], porcelain: bool = False) -> list[str]:
    rows = []
    for (sa, sb), diffs in entries:
        seq = f"{'-' if sa is None else sa}/{'-' if sb is None else sb}"
        for d in diffs:
            rows.append(("error", seq, d.path, _cell(d.left), _cell(d.right)))
    return ["\t".join(r) if porcelain else " ".join(r) for r in rows]

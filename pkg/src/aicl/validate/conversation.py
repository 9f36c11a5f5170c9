"""Conversation-level conformance: handshake, correlation, reasoning marks,
timestamp order and id uniqueness."""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional, Sequence

from ..core.diagnostics import Diagnostic, Overrides, apply_overrides, diag
from ..core.message import Message, MessageClass, MessageType, classify
from ..core.values import Ident, Timestamp

T = MessageType


class Phase(enum.Enum):
    UNOPENED = "Unopened"
    OPEN = "Open"


@dataclass
class SessionState:
    """Running state for one conversation (cid)."""

    phase: Phase = Phase.UNOPENED
    ids: dict = field(default_factory=dict)  # Ident -> index
    open_reasoning: OrderedDict = field(default_factory=OrderedDict)  # START id -> index
    started: set = field(default_factory=set)
    pending_requests: OrderedDict = field(default_factory=OrderedDict)  # request id -> index
    last_ts: Optional[Timestamp] = None


def validate_conversation(msgs: Sequence[Message], overrides: Optional[Overrides] = None) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    sessions: dict[Optional[Ident], SessionState] = {}
    seen: dict[Ident, int] = {}

    for i, m in enumerate(msgs):
        meta = m.meta
        s = sessions.setdefault(meta.cid, SessionState())

        if meta.id in seen:
            out.append(diag("ID.DUP", f"id {meta.id} first used at #{seen[meta.id]}", i, "meta.id"))
        else:
            seen[meta.id] = i

        if s.phase is Phase.UNOPENED:
            if m.mtype is not T.HELLO:
                out.append(diag("HELLO.MISSING", f"conversation {meta.cid} opens with {m.mtype}, not HELLO", i))
            s.phase = Phase.OPEN

        if s.last_ts is not None and meta.ts < s.last_ts:
            out.append(diag("TS.ORDER", f"ts {meta.ts} precedes {s.last_ts}", i, "meta.ts"))
        if s.last_ts is None or s.last_ts < meta.ts:
            s.last_ts = meta.ts

        if meta.of is not None:
            j = s.ids.get(meta.of)
            if j is None:
                out.append(diag("OF.DANGLING", f"of {meta.of} matches no earlier message in {meta.cid}", i, "meta.of"))
            else:
                target = msgs[j]
                if m.mtype in (T.RESULT, T.ERROR):
                    cls = classify(target.mtype)
                    if cls is MessageClass.REQUEST:
                        s.pending_requests.pop(meta.of, None)
                    elif target.mtype is T.COORD_DELEGATE:
                        out.append(diag("OF.DELEGATE", f"{m.mtype} answers COORD.DELEGATE {meta.of} directly",
                                        i, "meta.of"))
                    else:
                        out.append(diag("OF.TARGET", f"{m.mtype} of points at {target.mtype} {meta.of}", i, "meta.of"))
                elif m.mtype in (T.REASONING_STEP, T.REASONING_COMPLETE):
                    if target.mtype is not T.REASONING_START or meta.of not in s.open_reasoning:
                        out.append(diag("REASONING.TARGET", f"{m.mtype} of {meta.of} is not an open REASONING.START",
                                        i, "meta.of"))
                    elif m.mtype is T.REASONING_COMPLETE:
                        del s.open_reasoning[meta.of]

        if meta.reasoning_trace is not None and meta.reasoning_trace not in s.started:
            out.append(diag("REASONING.TRACE", f"reasoning_trace {meta.reasoning_trace} names no earlier "
                            "REASONING.START", i, "meta.reasoning_trace"))

        if meta.id not in s.ids:
            s.ids[meta.id] = i
        if m.mtype is T.REASONING_START:
            s.open_reasoning.setdefault(meta.id, i)
            s.started.add(meta.id)
        if classify(m.mtype) is MessageClass.REQUEST:
            s.pending_requests.setdefault(meta.id, i)

    for s in sessions.values():
        for sid, i in s.open_reasoning.items():
            out.append(diag("REASONING.OPEN", f"REASONING.START {sid} never completed", i))
        for rid, i in s.pending_requests.items():
            out.append(diag("REQ.UNANSWERED", f"request {rid} has no RESULT or ERROR", i))
    out.sort(key=Diagnostic.sort_key)
    return apply_overrides(out, overrides)


@dataclass(frozen=True)
class CorrelationGraph:
    nodes: tuple  # message ids, trace order, first occurrence
    edges: tuple  # (from_id, to_id, field)

    def is_acyclic(self) -> bool:
        adj: dict = {n: [] for n in self.nodes}
        for a, b, _ in self.edges:
            adj.setdefault(a, []).append(b)
        indeg = {n: 0 for n in adj}
        for a in adj:
            for b in adj[a]:
                indeg[b] = indeg.get(b, 0) + 1
        ready = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while ready:
            n = ready.pop()
            seen += 1
            for b in adj.get(n, ()):
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
        return seen == len(indeg)


class GraphError(ValueError):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


def build_correlation_graph(msgs: Sequence[Message]) -> CorrelationGraph:
    """Edges from ``of`` and ``reasoning_trace``; raises GraphError if any
    pointer is dangling or points forward."""
    nodes: list[Ident] = []
    pos: dict[Ident, int] = {}
    edges = []
    problems = []
    for i, m in enumerate(msgs):
        for name, rule in (("of", "OF.DANGLING"), ("reasoning_trace", "REASONING.TRACE")):
            target = getattr(m.meta, name)
            if target is None:
                continue
            if target not in pos:
                problems.append(diag(rule, f"{name} {target} does not point at an earlier message", i, f"meta.{name}"))
            else:
                edges.append((m.meta.id, target, name))
        if m.meta.id not in pos:
            pos[m.meta.id] = i
            nodes.append(m.meta.id)
    if problems:
        raise GraphError(problems)
    return CorrelationGraph(tuple(nodes), tuple(edges))

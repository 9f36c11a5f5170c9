"""Deterministic scenario execution and fault injection.

Agents talk over a synchronous in-process bus: each schedule step emits one
message; deliveries are processed FIFO until the bus drains, then the next
step runs. The clock advances one second per emitted message and ids are
minted from a counter, so a (scenario, seed) pair always yields the same
trace, byte for byte.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, replace
from typing import Any, Optional, Sequence

from ..binary import MaskError, check_path
from ..core.diagnostics import Diagnostic, Severity
from ..core.message import Message, MessageType, Metadata
from ..core.values import CallExpr, Ident, InvalidValue
from ..trace import Direction, Envelope, TraceHeader, TraceLog, default_direction
from ..validate import sign_message, validate_message
from .behaviors import AgentContext, Emit, make_behavior
from .scenario import DEFAULT_TARGET_TYPE, Fault, FaultKind, Scenario, ScenarioFormatError, Step

T = MessageType

MAX_EMISSIONS = 100_000
FAULT_NAMESPACE = "fault"


class ScenarioError(RuntimeError):
    """A scripted agent emitted a message that fails core validation."""

    def __init__(self, step: int, diagnostics: list[Diagnostic], detail: str = ""):
        shown = "; ".join(str(d) for d in diagnostics) or detail
        super().__init__(f"schedule step {step}: {shown}")
        self.step = step
        self.diagnostics = diagnostics


class FaultTargetError(ValueError):
    """A fault's target does not resolve to a message it can apply to."""


@dataclass(frozen=True)
class Emitted:
    msg: Message
    step: int
    sender: Ident


@dataclass(frozen=True)
class Injection:
    """Where a fault landed. ``locus`` is the post-fault trace index a
    checker is expected to flag with ``expected_rule``; both are None when
    the consequence depends on what the fault changed (e.g. ``mutate``)."""

    fault: Fault
    target_seq: int
    locus: Optional[int]
    expected_rule: Optional[str]


@dataclass(frozen=True)
class Run:
    scenario: Scenario
    trace: TraceLog
    emitted: tuple
    injections: tuple


# -- clean execution ----------------------------------------------------------


class _Bus:
    def __init__(self, s: Scenario):
        self.s = s
        self.rng = random.Random(s.seed)
        self.counter = 0
        self.tick = 0
        self.emitted: list[Emitted] = []
        self.behaviors = {a.agent_id: make_behavior(a) for a in s.agents}
        self.contexts = {a.agent_id: AgentContext(a, self.rng, self.mint) for a in s.agents}

    def mint(self) -> Ident:
        ident = Ident(self.s.id_namespace, f"m{self.counter}")
        self.counter += 1
        return ident

    def build(self, sender: Ident, em: Emit, step: int) -> Message:
        s, agent = self.s, self.s.agent(sender)
        fields: dict[str, Any] = dict(
            ver=s.ver, cid=s.cid, ctx=s.ctx, model_version=agent.model_version, conf=agent.conf,
            priors=agent.priors if agent.priors is not None else s.priors, space=s.space,
        )
        if em.mtype is T.HELLO and agent.capabilities:
            fields["cap"] = agent.capabilities
        fields.update(em.meta)
        ident = em.id or self.mint()
        ts = s.epoch.shifted(self.tick)
        self.tick += 1
        try:
            msg = Message(em.mtype, em.content, Metadata(id=ident, ts=ts, **fields))
        except (InvalidValue, TypeError) as exc:
            raise ScenarioError(step, [], str(exc)) from None
        errors = [d for d in validate_message(msg) if d.severity is Severity.ERROR]
        if errors:
            raise ScenarioError(step, errors)
        if agent.sign_key is not None:
            msg = sign_message(msg, agent.sign_key)
        return msg

    def step_emit(self, i: int, st: Step, labels: dict[str, Ident]) -> Emit:
        content = st.content
        if content is None and st.mtype is T.HELLO:
            a = self.s.agent(st.agent)
            content = {"agent": a.agent_id, "capabilities": list(a.capabilities), "version": a.version}
        if content is None:
            raise ScenarioFormatError(f"schedule[{i}]: {st.mtype} step needs content")
        meta = dict(st.meta)
        if st.of is not None:
            if "!" in st.of:
                meta["of"] = Ident.parse(st.of)
            elif st.of in labels:
                meta["of"] = labels[st.of]
            else:
                raise ScenarioFormatError(f"schedule[{i}]: of refers to unknown label {st.of!r}")
        return Emit(st.mtype, content, to=st.to, id=st.id, meta=meta)

    def run(self) -> list[Emitted]:
        labels: dict[str, Ident] = {}
        for i, st in enumerate(self.s.schedule):
            queue = deque([(st.agent, self.step_emit(i, st, labels))])
            first = True
            while queue:
                sender, em = queue.popleft()
                msg = self.build(sender, em, i)
                self.emitted.append(Emitted(msg, i, sender))
                if len(self.emitted) > MAX_EMISSIONS:
                    raise ScenarioError(i, [], "agents did not quiesce")
                if first and st.label:
                    labels[st.label] = msg.meta.id
                first = False
                if em.to is not None:
                    for reply in self.behaviors[em.to].react(msg, sender, self.contexts[em.to]):
                        queue.append((em.to, reply))
        return self.emitted


def emit_messages(s: Scenario) -> list[Emitted]:
    """Run the scripted agents, before any fault is applied."""
    return _Bus(s).run()


# -- fault injection ----------------------------------------------------------


def _resolve(f: Fault, emitted: Sequence[Emitted]) -> int:
    sel = f.target
    if sel.seq is not None:
        if not 0 <= sel.seq < len(emitted):
            raise FaultTargetError(f"{f.kind.value}: seq {sel.seq} is outside 0..{len(emitted) - 1}")
        return sel.seq
    mtype = sel.mtype
    if mtype is None and sel.step is None:
        mtype = DEFAULT_TARGET_TYPE[f.kind]
    hits = [i for i, e in enumerate(emitted)
            if (sel.step is None or e.step == sel.step) and (mtype is None or e.msg.mtype is mtype)]
    if sel.nth >= len(hits):
        what = " ".join(x for x in (f"step {sel.step}" if sel.step is not None else "",
                                    str(mtype) if mtype else "") if x)
        raise FaultTargetError(f"{f.kind.value}: no message #{sel.nth} matching {what}")
    return hits[sel.nth]


def _set_in(container: Any, parts: list[str], value: Any, path: str) -> Any:
    if not parts:
        return value
    head, rest = parts[0], parts[1:]
    if isinstance(container, CallExpr):
        return replace(container, args=_set_in(container.args, parts, value, path))
    if isinstance(container, dict):
        out = dict(container)
        out[head] = _set_in(container.get(head), rest, value, path) if rest else value
        return out
    if isinstance(container, (list, tuple)) and head.isdigit() and int(head) < len(container):
        out = list(container)
        out[int(head)] = _set_in(container[int(head)], rest, value, path)
        return out
    raise FaultTargetError(f"mutate: path {path!r} does not address a field of the target")


def set_path(m: Message, path: str, value: Any) -> Message:
    """Return ``m`` with the field at ``path`` replaced by ``value``."""
    try:
        check_path(path)
    except MaskError as exc:
        raise FaultTargetError(str(exc)) from None
    parts = path.split(".")
    try:
        if parts[0] == "content":
            return replace(m, content=_set_in(m.content, parts[1:], value, path))
        if parts[0] == "meta":
            name = parts[1]
            current = getattr(m.meta, name)
            return m.with_meta(**{name: _set_in(current, parts[2:], value, path)})
    except InvalidValue as exc:
        raise FaultTargetError(f"mutate: {exc}") from None
    raise FaultTargetError(f"mutate: cannot set {path!r} on a message")


def _fresh(prefix: str, used: set, n: int) -> Ident:
    while True:
        ident = Ident(FAULT_NAMESPACE, f"{prefix}{n}")
        if ident not in used:
            return ident
        n += 1


def _stored_ctx(out: list[tuple[Message, Ident]], key: str) -> list[frozenset]:
    return [frozenset(m.meta.ctx or ()) for m, _ in out
            if m.mtype is T.MEMORY_STORE and isinstance(m.content, dict) and m.content.get("key") == key]


def apply_faults(s: Scenario, emitted: Sequence[Emitted],
                 faults: Sequence[Fault]) -> tuple[list[tuple[Message, Ident]], list[Injection]]:
    """Apply ``faults`` to a clean emission sequence.

    Targets are resolved against the clean sequence, so faults compose
    without shifting each other's targets. Returns the faulted (message,
    sender) list and one :class:`Injection` per fault.
    """
    targets = [_resolve(f, emitted) for f in faults]
    used = {e.msg.meta.id for e in emitted}
    by_target: dict[int, list[int]] = {}
    for k, t in enumerate(targets):
        by_target.setdefault(t, []).append(k)

    out: list[tuple[Message, Ident]] = []
    loci: dict[int, Optional[int]] = {}
    rules: dict[int, Optional[str]] = {}
    dropped: dict[int, Message] = {}
    for i, e in enumerate(emitted):
        msg, extras = e.msg, []
        for k in by_target.get(i, ()):
            f = faults[k]
            if f.kind is FaultKind.DROP:
                dropped[k] = msg
            elif f.kind is FaultKind.MUTATE:
                msg = set_path(msg, f.path, f.value)
            elif f.kind is FaultKind.DANGLING_OF:
                ghost = _fresh("dangling", used, k)
                used.add(ghost)
                msg = msg.with_meta(of=ghost)
                rules[k] = "OF.DANGLING"
            else:
                extras.append(k)
        if not any(faults[k].kind is FaultKind.DROP for k in by_target.get(i, ())):
            for k in by_target.get(i, ()):
                if faults[k].kind in (FaultKind.MUTATE, FaultKind.DANGLING_OF):
                    loci[k] = len(out)
            out.append((msg, e.sender))
        for k in extras:
            f = faults[k]
            if f.kind is FaultKind.DUPLICATE:
                loci[k], rules[k] = len(out), "ID.DUP"
                out.append((msg, e.sender))
                continue
            key = f.key
            if key is None and isinstance(msg.content, dict) and isinstance(msg.content.get("key"), str):
                key = msg.content["key"]
            if key is None:
                raise FaultTargetError("cross-ctx-recall: target carries no memory key; give key explicitly")
            ctx = f.ctx or (Ident(s.id_namespace, "intruder"),)
            stores = _stored_ctx(out, key)
            if not stores:
                raise FaultTargetError(f"cross-ctx-recall: key {key!r} is not stored before the target")
            if any(scope & set(ctx) for scope in stores):
                raise FaultTargetError(f"cross-ctx-recall: ctx {[str(c) for c in ctx]} can already see {key!r}")
            rid = _fresh("x", used, k)
            used.add(rid)
            base = {n: getattr(msg.meta, n) for n in ("ver", "cid", "model_version", "conf", "priors", "space")}
            recall = Message(T.MEMORY_RECALL, {"key": key}, Metadata(id=rid, ts=msg.meta.ts, ctx=ctx, **base))
            loci[k], rules[k] = len(out), "ISO.LEAK"
            out.append((recall, e.sender))

    msgs = [m for m, _ in out]
    for k, gone in dropped.items():
        loci[k], rules[k] = _drop_consequence(gone, msgs)

    injections = [Injection(f, targets[k], loci.get(k), rules.get(k)) for k, f in enumerate(faults)]
    return out, injections


def _drop_consequence(gone: Message, msgs: list[Message]) -> tuple[Optional[int], Optional[str]]:
    """The finding a dropped message should provoke, if it is determined."""
    gid = gone.meta.id
    if any(m.meta.id == gid for m in msgs):
        return None, None  # a surviving duplicate still carries the id
    if gone.mtype is T.REASONING_COMPLETE:
        for i, m in enumerate(msgs):
            if m.meta.id == gone.meta.of and m.mtype is T.REASONING_START:
                return i, "REASONING.OPEN"
    for i, m in enumerate(msgs):
        if m.meta.of == gid:
            return i, "OF.DANGLING"
        if m.meta.reasoning_trace == gid:
            return i, "REASONING.TRACE"
    return None, None


def _trace(s: Scenario, pairs: Sequence[tuple[Message, Ident]]) -> TraceLog:
    log = TraceLog(TraceHeader(created_at=s.epoch))
    for m, sender in pairs:
        if s.sut is None:
            direction = default_direction(m)
        else:
            direction = Direction.OUTBOUND if sender == s.sut else Direction.INBOUND
        log.append(Envelope(len(log), m.meta.ts, direction, m))
    return log


def execute(s: Scenario) -> Run:
    """Run ``s`` and apply its faults, keeping the injection records."""
    emitted = emit_messages(s)
    pairs, injections = apply_faults(s, emitted, s.faults)
    return Run(s, _trace(s, pairs), tuple(emitted), tuple(injections))


def run_scenario(s: Scenario) -> TraceLog:
    return execute(s).trace


def inject_faults(s: Scenario, faults: Sequence[Fault]) -> Scenario:
    """Return ``s`` with ``faults`` appended.

    Targets are checked against the scenario's clean run; an unresolvable
    target raises :class:`FaultTargetError` here rather than at run time.
    """
    for f in faults:
        if f.target.step is not None and not 0 <= f.target.step < len(s.schedule):
            raise FaultTargetError(f"{f.kind.value}: step {f.target.step} is outside the schedule")
        if f.kind is FaultKind.MUTATE:
            try:
                check_path(f.path or "")
            except MaskError as exc:
                raise FaultTargetError(str(exc)) from None
    out = replace(s, faults=tuple(s.faults) + tuple(faults))
    apply_faults(out, emit_messages(out), out.faults)
    return out

"""Scripted agent behaviours.

A behaviour is a deterministic reaction function: given a delivered
message it returns the messages the agent emits in reply. Randomness comes
only from the run's seeded generator, and fresh ids only from ``mint``.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from ..core.message import Message, MessageType
from ..core.values import CallExpr, Ident, InvalidValue
from .scenario import AgentScript, ScenarioFormatError, _value

T = MessageType


@dataclass(frozen=True)
class Emit:
    """One message an agent wants sent. ``meta`` overrides the agent's
    defaults (``of``, ``conf``, ``cost`` ...)."""

    mtype: MessageType
    content: Any
    to: Optional[Ident] = None
    id: Optional[Ident] = None
    meta: dict = field(default_factory=dict)


@dataclass
class AgentContext:
    agent: AgentScript
    rng: random.Random
    mint: Callable[[], Ident]


class Behavior:
    """Base behaviour: ignores everything."""

    def __init__(self, agent: AgentScript):
        self.agent = agent

    def react(self, msg: Message, sender: Ident, ctx: AgentContext) -> list[Emit]:
        return []


def _ident(v: Any, where: str) -> Ident:
    try:
        return v if isinstance(v, Ident) else Ident.parse(str(v))
    except InvalidValue as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class _Answer:
    match: str
    mtype: MessageType
    content: Any
    conf: Optional[float]
    jitter: float
    cost: Optional[dict]
    latency: Optional[int]
    id: Optional[Ident]


def _request_head(m: Message) -> Optional[str]:
    if m.mtype is T.PLAN:
        return "PLAN"
    if m.mtype is T.QUERY and isinstance(m.content, CallExpr):
        return m.content.head
    return None


class Tool(Behavior):
    """Answers QUERY (matched on call head) and PLAN with a canned RESULT
    or ERROR. ``conf_jitter`` perturbs conf with the run's rng."""

    def __init__(self, agent: AgentScript):
        super().__init__(agent)
        where = f"agent {agent.agent_id}"
        self.answers = []
        for i, raw in enumerate(agent.params.get("answers", ())):
            w = f"{where} answers[{i}]"
            if "match" not in raw or ("result" in raw) == ("error" in raw):
                raise ScenarioFormatError(f"{w}: needs match and exactly one of result/error")
            is_result = "result" in raw
            self.answers.append(_Answer(
                match=str(raw["match"]),
                mtype=T.RESULT if is_result else T.ERROR,
                content=_value(raw["result" if is_result else "error"], w),
                conf=float(raw["conf"]) if "conf" in raw else None,
                jitter=float(raw.get("conf_jitter", 0.0)),
                cost=_value(raw["cost"], w) if "cost" in raw else None,
                latency=int(raw["latency"]) if "latency" in raw else None,
                id=_ident(raw["id"], w) if raw.get("id") else None,
            ))

    def react(self, msg: Message, sender: Ident, ctx: AgentContext) -> list[Emit]:
        head = _request_head(msg)
        if head is None:
            return []
        for a in self.answers:
            if a.match in (head, "*"):
                meta: dict[str, Any] = {"of": msg.meta.id}
                conf = a.conf if a.conf is not None else self.agent.conf
                if a.jitter:
                    conf = min(1.0, max(0.0, conf + ctx.rng.uniform(-a.jitter, a.jitter)))
                meta["conf"] = round(conf, 6)
                if a.cost is not None:
                    meta["cost"] = a.cost
                if a.latency is not None:
                    meta["latency"] = a.latency
                return [Emit(a.mtype, a.content, to=sender, id=a.id, meta=meta)]
        return [Emit(T.ERROR, {"code": "E_UNSUPPORTED", "recovery_hint": f"no handler for {head}"},
                     to=sender, meta={"of": msg.meta.id})]


class Coordinator(Behavior):
    """Delegates each incoming QUERY to ``delegate_to`` and relays the
    worker's answer back to the original requester."""

    def __init__(self, agent: AgentScript):
        super().__init__(agent)
        if "delegate_to" not in agent.params:
            raise ScenarioFormatError(f"agent {agent.agent_id}: coordinator needs delegate_to")
        self.worker = _ident(agent.params["delegate_to"], f"agent {agent.agent_id}")
        self.latency = agent.params.get("latency")
        self.pending: dict[Ident, tuple[Ident, Ident]] = {}

    def react(self, msg: Message, sender: Ident, ctx: AgentContext) -> list[Emit]:
        if msg.mtype is T.QUERY and sender != self.worker:
            d_id, q_id = ctx.mint(), ctx.mint()
            self.pending[q_id] = (sender, msg.meta.id)
            return [
                Emit(T.COORD_DELEGATE, {"task": msg.content, "delegate": self.worker},
                     to=self.worker, id=d_id, meta={"of": msg.meta.id}),
                Emit(T.QUERY, msg.content, to=self.worker, id=q_id, meta={"of": d_id}),
            ]
        if msg.mtype in (T.RESULT, T.ERROR) and msg.meta.of in self.pending:
            requester, original = self.pending.pop(msg.meta.of)
            meta: dict[str, Any] = {"of": original}
            if msg.meta.conf is not None:
                meta["conf"] = msg.meta.conf
            if msg.meta.cost is not None:
                meta["cost"] = dict(msg.meta.cost)
            if self.latency is not None:
                meta["latency"] = int(self.latency) + (msg.meta.latency or 0)
            return [Emit(msg.mtype, msg.content, to=requester, meta=meta)]
        return []


class Reasoner(Behavior):
    """Answers a QUERY with a bracketed reasoning chain and a RESULT that
    cites it via ``reasoning_trace``."""

    def __init__(self, agent: AgentScript):
        super().__init__(agent)
        p = agent.params
        where = f"agent {agent.agent_id}"
        if "answer" not in p:
            raise ScenarioFormatError(f"{where}: reasoner needs answer")
        self.goal = str(p.get("goal", "answer the query"))
        self.steps = [str(s) for s in p.get("steps", ())]
        self.answer = _value(p["answer"], where)
        self.conf = float(p["conf"]) if "conf" in p else None

    def react(self, msg: Message, sender: Ident, ctx: AgentContext) -> list[Emit]:
        if msg.mtype is not T.QUERY:
            return []
        start = ctx.mint()
        out = [Emit(T.REASONING_START, {"goal": self.goal}, id=start, meta={"of": msg.meta.id})]
        for n, thought in enumerate(self.steps, 1):
            out.append(Emit(T.REASONING_STEP, {"n": n, "thought": thought}, meta={"of": start}))
        out.append(Emit(T.REASONING_COMPLETE, {"steps": len(self.steps)}, meta={"of": start}))
        meta: dict[str, Any] = {"of": msg.meta.id, "reasoning_trace": start}
        if self.conf is not None:
            meta["conf"] = self.conf
        out.append(Emit(T.RESULT, self.answer, to=sender, meta=meta))
        return out


BEHAVIORS: dict[str, Callable[[AgentScript], Behavior]] = {
    "passive": Behavior,
    "tool": Tool,
    "coordinator": Coordinator,
    "reasoner": Reasoner,
}


def make_behavior(agent: AgentScript) -> Behavior:
    try:
        factory = BEHAVIORS[agent.behavior]
    except KeyError:
        raise ScenarioFormatError(f"agent {agent.agent_id}: unknown behavior {agent.behavior!r}") from None
    return factory(agent)

"""Per-message validation: metadata checks plus payload shape per type."""

from __future__ import annotations

from typing import Any, Callable, Optional

from ..core.diagnostics import Diagnostic, Overrides, apply_overrides, diag
from ..core.message import Message, MessageType, check_metadata
from ..core.values import CallExpr, Ident

T = MessageType


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _is_text_list(v: Any) -> bool:
    return isinstance(v, (list, tuple)) and all(isinstance(x, str) for x in v)


def _hello(c: Any) -> list[Diagnostic]:
    c = c if isinstance(c, dict) else {}
    out = []
    if not isinstance(c.get("agent"), Ident):
        out.append(diag("PAYLOAD.HELLO.AGENT", "HELLO must declare agent as an identifier", path="content.agent"))
    if not _is_text_list(c.get("capabilities")):
        out.append(diag("PAYLOAD.HELLO.CAPABILITIES", "capabilities must be a list of text", path="content.capabilities"))
    if not isinstance(c.get("version"), str):
        out.append(diag("PAYLOAD.HELLO.VERSION", "HELLO must declare a text version", path="content.version"))
    return out


def _query(c: Any) -> list[Diagnostic]:
    if isinstance(c, CallExpr):
        return []
    return [diag("PAYLOAD.QUERY.CALL", "QUERY content must be a call expression", path="content")]


def plan_cycle(deps: dict[str, list[str]]) -> Optional[list[str]]:
    """Return one dependency cycle (as a list of step ids) or None."""
    state: dict[str, int] = {}  # 1 = on stack, 2 = done
    for root in deps:
        if root in state:
            continue
        path = [root]
        todo = [iter(deps[root])]
        state[root] = 1
        while todo:
            nxt = next((d for d in todo[-1] if d in deps and state.get(d) != 2), None)
            if nxt is None:
                state[path.pop()] = 2
                todo.pop()
            elif state.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            else:
                state[nxt] = 1
                path.append(nxt)
                todo.append(iter(deps[nxt]))
    return None


def _plan(c: Any) -> list[Diagnostic]:
    if not isinstance(c, (list, tuple)) or not all(isinstance(s, dict) for s in c):
        return [diag("PAYLOAD.PLAN.SHAPE", "PLAN content must be a list of step maps", path="content")]
    out = []
    deps: dict[str, list[str]] = {}
    for i, step in enumerate(c):
        sid, dep_list = step.get("step_id"), step.get("depends_on")
        if not isinstance(sid, str) or "action" not in step or not _is_text_list(dep_list):
            out.append(diag("PAYLOAD.PLAN.STEP", "step needs text step_id, action and a depends_on list of step ids",
                            path=f"content.{i}"))
            continue
        if sid in deps:
            out.append(diag("PAYLOAD.PLAN.DUPSTEP", f"step_id {sid!r} declared twice", path=f"content.{i}.step_id"))
            continue
        deps[sid] = list(dep_list)
    declared = {s.get("step_id") for s in c if isinstance(s.get("step_id"), str)}
    for i, step in enumerate(c):
        dep_list = step.get("depends_on")
        if not _is_text_list(dep_list):
            continue
        for j, d in enumerate(dep_list):
            if d not in declared:
                out.append(diag("PAYLOAD.PLAN.DEP", f"step {step.get('step_id')!r} depends on undeclared step {d!r}",
                                path=f"content.{i}.depends_on.{j}"))
    cycle = plan_cycle(deps)
    if cycle:
        out.append(diag("PAYLOAD.PLAN.CYCLE", "dependency cycle " + " -> ".join(cycle), path="content"))
    return out


def _assertion(a: Any, path: str) -> list[Diagnostic]:
    if not isinstance(a, dict) or not a:
        return [diag("PAYLOAD.FACT.SHAPE", "an assertion must be a non-empty map", path=path)]
    if "conf" in a and not (_is_num(a["conf"]) and 0 <= a["conf"] <= 1):
        return [diag("PAYLOAD.FACT.CONF", f"assertion conf {a['conf']!r} is not in [0, 1]", path=f"{path}.conf")]
    return []


def _fact(c: Any) -> list[Diagnostic]:
    return _assertion(c, "content")


def _facts(c: Any) -> list[Diagnostic]:
    if not isinstance(c, (list, tuple)):
        return [diag("PAYLOAD.FACT.SHAPE", "FACTS content must be a list of assertions", path="content")]
    out = []
    for i, a in enumerate(c):
        out += _assertion(a, f"content.{i}")
    return out


def _result(c: Any) -> list[Diagnostic]:
    if not isinstance(c, dict):
        return [diag("PAYLOAD.RESULT.SHAPE", "RESULT content must be a map", path="content")]
    out = []
    if "data" not in c:
        out.append(diag("PAYLOAD.RESULT.DATA", "RESULT content lacks data", path="content.data"))
    if not isinstance(c.get("schema"), str):
        out.append(diag("PAYLOAD.RESULT.SCHEMA", "RESULT content lacks a text schema", path="content.schema"))
    return out


def _error(c: Any) -> list[Diagnostic]:
    c = c if isinstance(c, dict) else {}
    out = []
    if not isinstance(c.get("code"), str):
        out.append(diag("PAYLOAD.ERROR.CODE", "ERROR content lacks a text code", path="content.code"))
    if "recovery_hint" in c and not isinstance(c["recovery_hint"], str):
        out.append(diag("PAYLOAD.ERROR.HINT", "recovery_hint must be text", path="content.recovery_hint"))
    return out


def _store(c: Any) -> list[Diagnostic]:
    c = c if isinstance(c, dict) else {}
    out = _recall(c)
    if "value" not in c:
        out.append(diag("PAYLOAD.MEMORY.VALUE", "MEMORY.STORE lacks value", path="content.value"))
    if not isinstance(c.get("scope"), str):
        out.append(diag("PAYLOAD.MEMORY.SCOPE", "MEMORY.STORE lacks a text scope", path="content.scope"))
    return out


def _recall(c: Any) -> list[Diagnostic]:
    if isinstance(c, dict) and isinstance(c.get("key"), str):
        return []
    return [diag("PAYLOAD.MEMORY.KEY", "MEMORY.* content lacks a text key", path="content.key")]


def _delegate(c: Any) -> list[Diagnostic]:
    c = c if isinstance(c, dict) else {}
    out = []
    if not isinstance(c.get("task"), CallExpr):
        out.append(diag("PAYLOAD.DELEGATE.TASK", "task must be a call expression", path="content.task"))
    if not isinstance(c.get("delegate"), Ident):
        out.append(diag("PAYLOAD.DELEGATE.TARGET", "delegate must be an identifier", path="content.delegate"))
    return out


_SHAPES: dict[MessageType, Callable[[Any], list[Diagnostic]]] = {
    T.HELLO: _hello,
    T.QUERY: _query,
    T.PLAN: _plan,
    T.FACT: _fact,
    T.FACTS: _facts,
    T.RESULT: _result,
    T.ERROR: _error,
    T.MEMORY_STORE: _store,
    T.MEMORY_RECALL: _recall,
    T.COORD_DELEGATE: _delegate,
}


def validate_message(m: Message, index: Optional[int] = None,
                     overrides: Optional[Overrides] = None) -> list[Diagnostic]:
    out = check_metadata(m.meta, m.mtype)
    shape = _SHAPES.get(m.mtype)
    if shape is not None:
        out += shape(m.content)
    if index is not None:
        out = [d.at(index) for d in out]
    return apply_overrides(out, overrides)

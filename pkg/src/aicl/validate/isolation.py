"""Context isolation for MEMORY.STORE / MEMORY.RECALL.

A recall may read a store when their ``ctx`` lists share at least one
scope. Stores are visible trace-wide (not only within one cid), so leaks
across conversations are caught too.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from ..core.diagnostics import Diagnostic, Overrides, apply_overrides, diag
from ..core.message import Message, MessageType


@dataclass(frozen=True)
class IsolationViolation:
    recall_locus: int
    stored_locus: int
    key: str
    recaller_ctx: tuple
    store_ctx: tuple


@dataclass(frozen=True)
class _Stored:
    index: int
    ctx: frozenset
    ctx_list: tuple


def _key(m: Message) -> Optional[str]:
    c = m.content
    return c.get("key") if isinstance(c, dict) and isinstance(c.get("key"), str) else None


def _scan(msgs: Sequence[Message]) -> tuple[list[IsolationViolation], list[Diagnostic]]:
    memory: dict[str, list[_Stored]] = {}
    violations: list[IsolationViolation] = []
    notes: list[Diagnostic] = []
    for i, m in enumerate(msgs):
        if m.mtype not in (MessageType.MEMORY_STORE, MessageType.MEMORY_RECALL):
            continue
        key = _key(m)
        if key is None:
            continue
        ctx = tuple(m.meta.ctx or ())
        scope = frozenset(ctx)
        stores = memory.setdefault(key, [])
        if m.mtype is MessageType.MEMORY_STORE:
            prior = [s for s in stores if s.ctx & scope]
            if prior:
                notes.append(diag("MEM.OVERWRITE", f"key {key!r} re-stored (previous store at #{prior[-1].index})",
                                  i, "content.key"))
            stores.append(_Stored(i, scope, ctx))
            continue
        if not stores:
            notes.append(diag("MEM.MISS", f"key {key!r} was never stored before this recall", i, "content.key"))
        elif not any(s.ctx & scope for s in stores):
            last = stores[-1]
            violations.append(IsolationViolation(i, last.index, key, ctx, last.ctx_list))
    return violations, notes


def check_context_isolation(msgs: Sequence[Message]) -> list[IsolationViolation]:
    return _scan(msgs)[0]


def isolation_diagnostics(msgs: Sequence[Message], overrides: Optional[Overrides] = None) -> list[Diagnostic]:
    """ISO.LEAK per violation plus MEM.MISS / MEM.OVERWRITE notes."""
    violations, notes = _scan(msgs)
    out = list(notes)
    for v in violations:
        theirs = ", ".join(str(c) for c in v.store_ctx)
        mine = ", ".join(str(c) for c in v.recaller_ctx)
        out.append(diag("ISO.LEAK", f"recall of {v.key!r} in ctx [{mine}] reaches only the store at "
                        f"#{v.stored_locus} in ctx [{theirs}]", v.recall_locus, "meta.ctx"))
    out.sort(key=Diagnostic.sort_key)
    return apply_overrides(out, overrides)

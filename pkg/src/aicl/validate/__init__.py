"""Protocol conformance checks beyond single fields."""

from __future__ import annotations

from typing import Optional, Sequence

from ..core.diagnostics import Diagnostic, Overrides, apply_overrides, diag
from ..core.message import Message
from .conversation import (
    CorrelationGraph,
    GraphError,
    Phase,
    SessionState,
    build_correlation_graph,
    validate_conversation,
)
from .integrity import UnsignedMessage, sign_message, signing_payload, verify_integrity
from .isolation import IsolationViolation, check_context_isolation, isolation_diagnostics
from .payload import validate_message


def check_trace(msgs: Sequence[Message], overrides: Optional[Overrides] = None,
                key: Optional[bytes] = None) -> list[Diagnostic]:
    """Every check the toolkit has, over one ordered message sequence.

    Findings are sorted by message index, then rule id. When ``key`` is
    given, each signed message is verified (SIG.INVALID on failure).
    """
    out: list[Diagnostic] = []
    for i, m in enumerate(msgs):
        out += validate_message(m, i)
        if key is not None and m.meta.sig is not None and not verify_integrity(m, key):
            out.append(diag("SIG.INVALID", f"sig of {m.meta.id} does not verify", i, "meta.sig"))
    out += validate_conversation(msgs)
    out += isolation_diagnostics(msgs)
    out.sort(key=Diagnostic.sort_key)
    return apply_overrides(out, overrides)


__all__ = [
    "CorrelationGraph", "GraphError", "IsolationViolation", "Phase", "SessionState", "UnsignedMessage",
    "build_correlation_graph", "check_context_isolation", "check_trace", "isolation_diagnostics",
    "sign_message", "signing_payload", "validate_conversation", "validate_message", "verify_integrity",
]

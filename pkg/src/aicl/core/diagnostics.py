"""Diagnostics and the rule registry.

Every finding produced by the toolkit carries a rule id from ``RULES``.
The registry is also rendered to ``docs/rules.md`` (see ``render_registry``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional

REGISTRY_VERSION = "1.0"


class Severity(enum.Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"

    @property
    def rank(self) -> int:
        return {"error": 3, "warning": 2, "info": 1}[self.value]

    @classmethod
    def parse(cls, text: str) -> Severity:
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ValueError(f"unknown severity {text!r}") from None


@dataclass(frozen=True)
class Rule:
    id: str
    severity: Severity
    description: str


def _r(rule_id: str, sev: str, text: str) -> Rule:
    return Rule(rule_id, Severity(sev), text)


_RULE_LIST = [
    # metadata
    _r("META.VER.REQUIRED", "error", "ver (protocol version) is missing"),
    _r("META.VER.FORMAT", "error", "ver is not MAJOR.MINOR.PATCH numeric semver"),
    _r("META.CID.REQUIRED", "error", "cid (conversation identifier) is missing"),
    _r("META.CTX.REQUIRED", "error", "ctx (context scope) is missing"),
    _r("META.CTX.EMPTY", "error", "ctx is an empty list"),
    _r("META.MODEL_VERSION.REQUIRED", "error", "model_version is missing"),
    _r("META.CONF.REQUIRED", "error", "conf is missing on a RESULT, FACT or FACTS message"),
    _r("META.CONF.MISSING", "warning", "conf is missing on a message type that does not carry it by convention"),
    _r("META.CONF.RANGE", "error", "conf lies outside [0, 1]"),
    _r("META.PRIORS.REQUIRED", "error", "priors is missing"),
    _r("META.PRIORS.RANGE", "error", "a priors probability lies outside [0, 1]"),
    _r("META.SPACE.REQUIRED", "error", "space is missing"),
    _r("META.OF.REQUIRED", "error", "of is missing on a message type that must correlate upstream"),
    _r("META.COST.RANGE", "error", "a cost counter is negative"),
    _r("META.LATENCY.RANGE", "error", "latency is negative"),
    _r("META.CAP.FORMAT", "error", "a cap tag is empty or contains whitespace"),
    # payload shapes
    _r("PAYLOAD.HELLO.AGENT", "error", "HELLO content lacks an identifier-valued agent"),
    _r("PAYLOAD.HELLO.CAPABILITIES", "error", "HELLO capabilities is not a list of text"),
    _r("PAYLOAD.HELLO.VERSION", "error", "HELLO content lacks a text version"),
    _r("PAYLOAD.QUERY.CALL", "error", "QUERY content is not a call expression"),
    _r("PAYLOAD.PLAN.SHAPE", "error", "PLAN content is not a list of step maps"),
    _r("PAYLOAD.PLAN.STEP", "error", "a PLAN step lacks step_id, action or a depends_on list"),
    _r("PAYLOAD.PLAN.DUPSTEP", "error", "a PLAN step_id is declared twice"),
    _r("PAYLOAD.PLAN.DEP", "error", "a PLAN step depends on an undeclared step"),
    _r("PAYLOAD.PLAN.CYCLE", "error", "PLAN dependencies form a cycle"),
    _r("PAYLOAD.FACT.SHAPE", "error", "FACT content is not one assertion map / FACTS content is not a list of them"),
    _r("PAYLOAD.FACT.CONF", "error", "an assertion conf is not a number in [0, 1]"),
    _r("PAYLOAD.RESULT.SHAPE", "error", "RESULT content is not a map"),
    _r("PAYLOAD.RESULT.DATA", "error", "RESULT content lacks data"),
    _r("PAYLOAD.RESULT.SCHEMA", "error", "RESULT content lacks a text schema"),
    _r("PAYLOAD.ERROR.CODE", "error", "ERROR content lacks a text code"),
    _r("PAYLOAD.ERROR.HINT", "error", "ERROR recovery_hint is present but not text"),
    _r("PAYLOAD.MEMORY.KEY", "error", "MEMORY.* content lacks a text key"),
    _r("PAYLOAD.MEMORY.VALUE", "error", "MEMORY.STORE content lacks value"),
    _r("PAYLOAD.MEMORY.SCOPE", "error", "MEMORY.STORE content lacks a text scope"),
    _r("PAYLOAD.DELEGATE.TASK", "error", "COORD.DELEGATE task is not a call expression"),
    _r("PAYLOAD.DELEGATE.TARGET", "error", "COORD.DELEGATE delegate is not an identifier"),
    # conversation
    _r("HELLO.MISSING", "warning", "a conversation does not open with HELLO"),
    _r("ID.DUP", "error", "message id already used earlier in the trace"),
    _r("OF.DANGLING", "error", "of does not resolve to an earlier message of the same conversation"),
    _r("OF.TARGET", "error", "RESULT/ERROR of points at a message that is not a request"),
    _r("OF.DELEGATE", "info", "RESULT/ERROR answers a COORD.DELEGATE directly"),
    _r("REASONING.TARGET", "error", "REASONING.STEP/COMPLETE of does not point at an open REASONING.START"),
    _r("REASONING.OPEN", "warning", "REASONING.START never completed"),
    _r("REASONING.TRACE", "error", "reasoning_trace does not resolve to an earlier REASONING.START"),
    _r("TS.ORDER", "warning", "ts decreases within a conversation"),
    _r("REQ.UNANSWERED", "info", "request has no RESULT or ERROR in the trace"),
    # memory / isolation
    _r("MEM.MISS", "warning", "MEMORY.RECALL of a key never stored earlier"),
    _r("MEM.OVERWRITE", "info", "MEMORY.STORE overwrites a key already stored in an overlapping ctx"),
    _r("ISO.LEAK", "error", "MEMORY.RECALL reaches only stores from disjoint ctx scopes"),
    # integrity
    _r("SIG.INVALID", "error", "sig does not verify under the supplied key"),
]

RULES: dict[str, Rule] = {r.id: r for r in _RULE_LIST}


@dataclass(frozen=True)
class Diagnostic:
    """One finding. ``index`` is the message position in the checked sequence."""

    severity: Severity
    rule: str
    index: Optional[int]
    path: Optional[str]
    detail: str

    def sort_key(self) -> tuple:
        return (-1 if self.index is None else self.index, self.rule, self.path or "", self.detail)

    def at(self, index: int) -> Diagnostic:
        return replace(self, index=index)

    def __str__(self) -> str:
        where = "-" if self.index is None else f"#{self.index}"
        path = f" {self.path}" if self.path else ""
        return f"{self.severity.value} {where} {self.rule}{path}: {self.detail}"


def diag(rule: str, detail: str, index: Optional[int] = None, path: Optional[str] = None) -> Diagnostic:
    return Diagnostic(RULES[rule].severity, rule, index, path, detail)


Overrides = Mapping[str, Optional[Severity]]


def apply_overrides(diags: Iterable[Diagnostic], overrides: Optional[Overrides]) -> list[Diagnostic]:
    """Re-grade findings per rule; a ``None`` severity disables the rule."""
    if not overrides:
        return list(diags)
    out = []
    for d in diags:
        if d.rule in overrides:
            sev = overrides[d.rule]
            if sev is None:
                continue
            d = replace(d, severity=sev)
        out.append(d)
    return out


def render_registry() -> str:
    lines = [
        f"# AICL rule registry (version {REGISTRY_VERSION})",
        "",
        "| rule | default severity | description |",
        "|---|---|---|",
    ]
    for r in _RULE_LIST:
        lines.append(f"| `{r.id}` | {r.severity.value} | {r.description} |")
    return "\n".join(lines) + "\n"

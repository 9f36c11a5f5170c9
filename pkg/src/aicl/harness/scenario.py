"""Scenario model and the YAML scenario file format (see docs/formats.md)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from ..core.message import META_FIELDS, MessageType
from ..core.values import Ident, InvalidValue, Timestamp
from ..text import ParseError, parse_value

SCENARIO_FORMAT = 1


class ScenarioFormatError(ValueError):
    """The scenario document is malformed or inconsistent."""


class FaultKind(enum.Enum):
    DROP = "drop"
    DUPLICATE = "duplicate"
    MUTATE = "mutate"
    CROSS_CTX_RECALL = "cross-ctx-recall"
    DANGLING_OF = "dangling-of"


# Message type a fault lands on when its target names none.
DEFAULT_TARGET_TYPE = {
    FaultKind.DROP: MessageType.QUERY,
    FaultKind.DUPLICATE: MessageType.RESULT,
    FaultKind.MUTATE: MessageType.RESULT,
    FaultKind.CROSS_CTX_RECALL: MessageType.MEMORY_STORE,
    FaultKind.DANGLING_OF: MessageType.RESULT,
}


@dataclass(frozen=True)
class Selector:
    """Picks one emitted message: by absolute ``seq`` (pre-fault emission
    order), or the ``nth`` message of type ``mtype`` emitted during
    schedule ``step`` (either filter may be omitted)."""

    seq: Optional[int] = None
    step: Optional[int] = None
    mtype: Optional[MessageType] = None
    nth: int = 0


@dataclass(frozen=True)
class Fault:
    kind: FaultKind
    target: Selector = Selector()
    path: Optional[str] = None  # mutate
    value: Any = None  # mutate
    key: Optional[str] = None  # cross-ctx-recall (defaults to the target store's key)
    ctx: Optional[tuple] = None  # cross-ctx-recall (defaults to [<ns>!intruder])


@dataclass(frozen=True)
class AgentScript:
    agent_id: Ident
    behavior: str = "passive"
    capabilities: tuple = ()
    model_version: str = "scripted-1"
    conf: float = 1.0
    priors: Optional[dict] = None
    version: str = "1.0.0"
    sign_key: Optional[bytes] = None
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Step:
    agent: Ident
    mtype: MessageType
    content: Any = None
    to: Optional[Ident] = None
    id: Optional[Ident] = None
    label: Optional[str] = None
    of: Optional[str] = None  # label or identifier text
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Scenario:
    name: str
    agents: tuple
    schedule: tuple
    seed: int = 0
    faults: tuple = ()
    epoch: Timestamp = Timestamp.parse("2025-01-01T00:00:00Z")
    ver: str = "1.2.0"
    cid: Ident = Ident("u", "conv")
    ctx: tuple = ()
    space: str = "default"
    priors: dict = field(default_factory=dict)
    sut: Optional[Ident] = None
    id_namespace: str = "u"

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ScenarioFormatError("seed must be a 64-bit unsigned integer")
        if not self.ctx:
            object.__setattr__(self, "ctx", (self.cid,))
        declared = {a.agent_id for a in self.agents}
        if len(declared) != len(self.agents):
            raise ScenarioFormatError("agent ids must be unique")
        for i, st in enumerate(self.schedule):
            for who in (st.agent, st.to):
                if who is not None and who not in declared:
                    raise ScenarioFormatError(f"step {i} references undeclared agent {who}")
        if self.sut is not None and self.sut not in declared:
            raise ScenarioFormatError(f"sut {self.sut} is not a declared agent")

    def agent(self, agent_id: Ident) -> AgentScript:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


# -- loading --------------------------------------------------------------------


def _value(v: Any, where: str) -> Any:
    """Strings are AICL literals; YAML numbers/bools/lists/maps pass through."""
    if isinstance(v, str):
        try:
            return parse_value(v)
        except ParseError as exc:
            raise ScenarioFormatError(f"{where}: {exc}") from None
    if isinstance(v, list):
        return [_value(x, where) for x in v]
    if isinstance(v, dict):
        return {str(k): _value(x, where) for k, x in v.items()}
    return v


def _ident(v: Any, where: str) -> Ident:
    try:
        return Ident.parse(str(v))
    except InvalidValue as exc:
        raise ScenarioFormatError(f"{where}: {exc}") from None


def _mtype(v: Any, where: str) -> MessageType:
    try:
        return MessageType(str(v))
    except ValueError:
        raise ScenarioFormatError(f"{where}: unknown message type {v!r}") from None


def _meta_overrides(raw: Any, where: str) -> dict:
    if raw is None:
        return {}
    if not isinstance(raw, dict):
        raise ScenarioFormatError(f"{where}: meta must be a mapping")
    out = {}
    for k, v in raw.items():
        if k not in META_FIELDS or k in ("id", "ts"):
            raise ScenarioFormatError(f"{where}: meta field {k!r} cannot be overridden")
        if k in ("ver", "model_version", "space") and isinstance(v, str) and not v.startswith('"'):
            out[k] = v
        elif k == "sig":
            out[k] = bytes.fromhex(str(v))
        elif k == "cap":
            out[k] = tuple(str(x) for x in v)
        else:
            val = _value(v, f"{where}.meta.{k}")
            out[k] = tuple(val) if k == "ctx" else val
    return out


def _selector(raw: dict, where: str) -> Selector:
    mtype = raw.get("mtype")
    return Selector(
        seq=raw.get("seq"),
        step=raw.get("step"),
        mtype=_mtype(mtype, where) if mtype is not None else None,
        nth=int(raw.get("nth", 0)),
    )


def parse_fault(raw: dict, where: str = "fault") -> Fault:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ScenarioFormatError(f"{where}: a fault needs a kind")
    try:
        kind = FaultKind(raw["kind"])
    except ValueError:
        raise ScenarioFormatError(f"{where}: unknown fault kind {raw['kind']!r}") from None
    ctx = raw.get("ctx")
    if ctx is not None:
        ctx = tuple(_ident(c, where) for c in (ctx if isinstance(ctx, list) else [ctx]))
    if kind is FaultKind.MUTATE and ("path" not in raw or "value" not in raw):
        raise ScenarioFormatError(f"{where}: mutate needs path and value")
    return Fault(
        kind=kind,
        target=_selector(raw, where),
        path=raw.get("path"),
        value=_value(raw["value"], where) if "value" in raw else None,
        key=raw.get("key"),
        ctx=ctx,
    )


_AGENT_KEYS = {"id", "behavior", "capabilities", "model_version", "conf", "priors", "version", "sign_key"}


def _agent(raw: dict, i: int) -> AgentScript:
    where = f"agents[{i}]"
    if not isinstance(raw, dict) or "id" not in raw:
        raise ScenarioFormatError(f"{where}: an agent needs an id")
    priors = raw.get("priors")
    return AgentScript(
        agent_id=_ident(raw["id"], where),
        behavior=str(raw.get("behavior", "passive")),
        capabilities=tuple(str(c) for c in raw.get("capabilities", ())),
        model_version=str(raw.get("model_version", "scripted-1")),
        conf=float(raw.get("conf", 1.0)),
        priors=_value(priors, where) if priors is not None else None,
        version=str(raw.get("version", "1.0.0")),
        sign_key=bytes.fromhex(raw["sign_key"]) if raw.get("sign_key") else None,
        params={k: v for k, v in raw.items() if k not in _AGENT_KEYS},
    )


def _step(raw: dict, i: int) -> Step:
    where = f"schedule[{i}]"
    if not isinstance(raw, dict) or "agent" not in raw or "send" not in raw:
        raise ScenarioFormatError(f"{where}: a step needs agent and send")
    return Step(
        agent=_ident(raw["agent"], where),
        mtype=_mtype(raw["send"], where),
        content=_value(raw["content"], where) if "content" in raw else None,
        to=_ident(raw["to"], where) if raw.get("to") else None,
        id=_ident(raw["id"], where) if raw.get("id") else None,
        label=raw.get("as"),
        of=str(raw["of"]) if raw.get("of") else None,
        meta=_meta_overrides(raw.get("meta"), where),
    )


def scenario_from_dict(doc: dict) -> Scenario:
    if not isinstance(doc, dict):
        raise ScenarioFormatError("scenario document must be a mapping")
    version = doc.get("aicl_scenario", SCENARIO_FORMAT)
    if version != SCENARIO_FORMAT:
        raise ScenarioFormatError(f"unsupported scenario format {version!r}")
    for req in ("name", "agents", "schedule"):
        if req not in doc:
            raise ScenarioFormatError(f"scenario lacks {req}")
    try:
        cid = _ident(doc.get("cid", "u!conv"), "cid")
        kwargs: dict[str, Any] = dict(
            name=str(doc["name"]),
            agents=tuple(_agent(a, i) for i, a in enumerate(doc["agents"])),
            schedule=tuple(_step(s, i) for i, s in enumerate(doc["schedule"])),
            seed=int(doc.get("seed", 0)),
            faults=tuple(parse_fault(f, f"faults[{i}]") for i, f in enumerate(doc.get("faults") or ())),
            ver=str(doc.get("ver", "1.2.0")),
            cid=cid,
            ctx=tuple(_ident(c, "ctx") for c in doc.get("ctx", ())),
            space=str(doc.get("space", "default")),
            priors=_value(doc.get("priors", "{}"), "priors"),
            sut=_ident(doc["sut"], "sut") if doc.get("sut") else None,
            id_namespace=str(doc.get("id_namespace", "u")),
        )
        if "epoch" in doc:
            kwargs["epoch"] = Timestamp.parse(str(doc["epoch"]))
        return Scenario(**kwargs)
    except InvalidValue as exc:
        raise ScenarioFormatError(str(exc)) from None
    except (TypeError, AttributeError) as exc:
        raise ScenarioFormatError(f"malformed scenario: {exc}") from None


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a path or from YAML text."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and Path(source).exists()):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioFormatError(f"invalid YAML: {exc}") from None
    return scenario_from_dict(doc)

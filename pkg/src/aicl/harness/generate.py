"""Seeded generators: arbitrary well-formed messages and clean scenarios."""

from __future__ import annotations

import random
import string
from datetime import datetime, timezone
from typing import Any

from ..core.message import Message, MessageType, Metadata
from ..core.values import INT_MAX, INT_MIN, CallExpr, Ident, Timestamp
from .scenario import AgentScript, Scenario, Step

T = MessageType

_WORDS = ("alpha", "beta", "gamma", "delta", "omega", "rain", "sun", "key", "value", "x_1", "_tmp")
_TEXT_POOL = string.ascii_letters + string.digits + " _-.,:!?\"\\\n\t{}[]|#" + "éß中文🙂"


def _word(rng: random.Random) -> str:
    return rng.choice(_WORDS) + (str(rng.randrange(100)) if rng.random() < 0.3 else "")


def random_ident(rng: random.Random) -> Ident:
    return Ident(rng.choice(("u", "agent", "tool", "n_s")), rng.choice(("a", "b-2", "conv123", "0", "q_9")) + str(rng.randrange(1000)))


def random_timestamp(rng: random.Random) -> Timestamp:
    secs = rng.randrange(0, 4_102_444_800)  # 1970..2100
    base = Timestamp.from_datetime(datetime.fromtimestamp(secs, tz=timezone.utc))
    if rng.random() < 0.5:
        return base
    digits = "".join(rng.choice(string.digits) for _ in range(rng.randint(1, 9)))
    return Timestamp.parse(str(base)[:-1] + "." + digits + "Z")


def _float(rng: random.Random) -> float:
    pick = rng.random()
    if pick < 0.2:
        return rng.choice((0.0, -0.0, 0.5, 1.5, 65504.0, 1e-300, 5e-324, 1.7976931348623157e308, 0.1))
    if pick < 0.6:
        return round(rng.uniform(-1e4, 1e4), rng.randint(0, 6))
    return rng.uniform(-1e30, 1e30)


def random_value(rng: random.Random, depth: int = 3) -> Any:
    """Any Value kind, nested up to ``depth``."""
    kinds = ["str", "int", "float", "bool", "ident", "ts"] + (["list", "map", "call"] if depth > 0 else [])
    k = rng.choice(kinds)
    if k == "str":
        return "".join(rng.choice(_TEXT_POOL) for _ in range(rng.randint(0, 12)))
    if k == "int":
        return rng.choice((0, -1, 23, 24, 255, 256, 65535, 65536, 2**32, INT_MIN, INT_MAX, rng.randint(INT_MIN, INT_MAX)))
    if k == "float":
        return _float(rng)
    if k == "bool":
        return rng.random() < 0.5
    if k == "ident":
        return random_ident(rng)
    if k == "ts":
        return random_timestamp(rng)
    if k == "list":
        return [random_value(rng, depth - 1) for _ in range(rng.randint(0, 4))]
    if k == "map":
        return {_word(rng): random_value(rng, depth - 1) for _ in range(rng.randint(0, 4))}
    return CallExpr(rng.choice(("tool", "math", "fin")), _word(rng) + rng.choice(("", ".v2", "-x")),
                    {_word(rng): random_value(rng, depth - 1) for _ in range(rng.randint(0, 3))})


def _content(rng: random.Random, mtype: MessageType) -> Any:
    call = CallExpr("tool", _word(rng), {_word(rng): random_value(rng, 1)})
    if mtype is T.HELLO:
        return {"agent": random_ident(rng), "capabilities": [_word(rng)], "version": "1.0.0"}
    if mtype is T.QUERY:
        return call
    if mtype is T.PLAN:
        return [{"step_id": "s1", "action": _word(rng), "depends_on": []},
                {"step_id": "s2", "action": random_value(rng, 1), "depends_on": ["s1"]}]
    if mtype is T.FACT:
        return {"subject": _word(rng), "object": random_value(rng, 2)}
    if mtype is T.FACTS:
        return [{"subject": _word(rng), "conf": rng.random()} for _ in range(rng.randint(0, 3))]
    if mtype is T.RESULT:
        return {"data": random_value(rng, 2), "schema": _word(rng) + "/1"}
    if mtype is T.ERROR:
        return {"code": "E_" + _word(rng).upper(), "recovery_hint": _word(rng)}
    if mtype is T.MEMORY_STORE:
        return {"key": _word(rng), "value": random_value(rng, 2), "scope": "session"}
    if mtype is T.MEMORY_RECALL:
        return {"key": _word(rng)}
    if mtype is T.COORD_DELEGATE:
        return {"task": call, "delegate": random_ident(rng)}
    return random_value(rng, 2)


def random_message(rng: random.Random, mtype: MessageType | None = None) -> Message:
    """A well-formed Message of any (or the given) type, with a random
    subset of the optional metadata fields."""
    mtype = mtype or rng.choice(list(MessageType))
    meta: dict[str, Any] = dict(
        id=random_ident(rng), ts=random_timestamp(rng), ver=f"{rng.randrange(3)}.{rng.randrange(20)}.{rng.randrange(9)}",
        cid=random_ident(rng), ctx=tuple(random_ident(rng) for _ in range(rng.randint(1, 3))),
        model_version=_word(rng), conf=rng.random(), priors={_word(rng): rng.random() for _ in range(rng.randint(0, 3))},
        space=_word(rng),
    )
    if rng.random() < 0.5:
        meta["of"] = random_ident(rng)
    if rng.random() < 0.3:
        meta["reasoning_trace"] = random_ident(rng)
    if rng.random() < 0.3:
        meta["cost"] = {_word(rng): rng.randrange(0, 10**6) for _ in range(rng.randint(1, 2))}
    if rng.random() < 0.3:
        meta["latency"] = rng.randrange(0, 10**5)
    if rng.random() < 0.3:
        meta["sig"] = rng.randbytes(32)
    if rng.random() < 0.3:
        meta["cap"] = tuple(_word(rng) for _ in range(rng.randint(0, 3)))
    return Message(mtype, _content(rng, mtype), Metadata(**meta))


# -- clean scenarios ------------------------------------------------------------

_USER, _TOOL, _COORD, _WORKER, _SOLVER = (Ident("u", n) for n in ("user", "tool", "coord", "worker", "solver"))


def random_scenario(seed: int) -> Scenario:
    """A conformant multi-agent scenario drawn from ``seed``.

    Every request is answered, every reasoning chain closes, every recall
    hits a visible store, so a correct checker reports nothing on it.
    """
    rng = random.Random(seed)
    calls = [f"op{i}" for i in range(rng.randint(1, 4))]
    answers = [{"match": f"tool:{c}", "conf": round(rng.uniform(0.5, 1.0), 3),
                "result": f'{{data:{rng.randrange(1000)}, schema:"tool:{c}/1"}}'} for c in calls]
    answers.append({"match": "tool:broken", "error": '{code:"E_BROKEN", recovery_hint:"retry later"}'})
    answers.append({"match": "PLAN", "result": '{data:true, schema:"plan/ack"}'})
    agents = (
        AgentScript(_USER, capabilities=("query",)),
        AgentScript(_TOOL, "tool", ("tool:*",), "tool-1", params={"answers": answers}),
        AgentScript(_COORD, "coordinator", ("coord",), "coord-1", params={"delegate_to": str(_WORKER)}),
        AgentScript(_WORKER, "tool", ("tool:*",), "tool-2", params={"answers": answers}),
        AgentScript(_SOLVER, "reasoner", ("think",), "think-1",
                    params={"answer": '{data:"ok", schema:"text"}',
                            "steps": [f"step {i}" for i in range(rng.randint(0, 3))]}),
    )
    ctxs = [Ident("u", f"ctx{i}") for i in range(rng.randint(1, 3))]
    schedule = [Step(a.agent_id, T.HELLO) for a in agents]
    stored: list[tuple[str, Ident]] = []
    for _ in range(rng.randint(1, 12)):
        pick = rng.randrange(8)
        call = CallExpr("tool", rng.choice(calls), {"n": rng.randrange(100)})
        if pick == 0:
            schedule.append(Step(_USER, T.QUERY, call, to=_TOOL))
        elif pick == 1:
            schedule.append(Step(_USER, T.QUERY, CallExpr("tool", "broken", {}), to=_TOOL))
        elif pick == 2:
            schedule.append(Step(_USER, T.QUERY, call, to=_COORD))
        elif pick == 3:
            schedule.append(Step(_USER, T.QUERY, call, to=_SOLVER))
        elif pick == 4:
            schedule.append(Step(_USER, T.PLAN, [{"step_id": "a", "action": "go", "depends_on": []}], to=_TOOL))
        elif pick == 5:
            fact = {"fact": _word(rng)}
            schedule.append(Step(_USER, T.FACT, fact) if rng.random() < 0.5 else Step(_USER, T.FACTS, [fact]))
        elif pick == 6:
            key, ctx = f"k{len(stored)}", rng.choice(ctxs)
            stored.append((key, ctx))
            schedule.append(Step(_USER, T.MEMORY_STORE, {"key": key, "value": random_value(rng, 2), "scope": "s"},
                                 meta={"ctx": (ctx,)}))
        elif stored:
            key, ctx = rng.choice(stored)
            schedule.append(Step(_USER, T.MEMORY_RECALL, {"key": key}, meta={"ctx": (ctx,)}))
    return Scenario(name=f"random-{seed}", agents=agents, schedule=tuple(schedule), seed=seed,
                    epoch=random_timestamp(rng), cid=Ident("u", f"conv{seed}"), ctx=tuple(ctxs), space="gen")

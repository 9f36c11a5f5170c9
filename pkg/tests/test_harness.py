import dataclasses

import pytest

from aicl.core.diagnostics import Severity
from aicl.core.message import MessageType
from aicl.core.values import Ident
from aicl.harness import (
    BUILTIN_NAMES,
    AgentScript,
    Fault,
    FaultKind,
    FaultTargetError,
    Scenario,
    ScenarioError,
    ScenarioFormatError,
    Selector,
    Step,
    builtin_source,
    execute,
    inject_faults,
    load_scenario,
    random_scenario,
    run_scenario,
)
from aicl.trace import Direction, to_bytes
from aicl.validate import build_correlation_graph, check_context_isolation, check_trace, verify_integrity

T = MessageType


def types(log):
    return [e.msg.mtype for e in log.snapshot()]


def errors(diags):
    return [d for d in diags if d.severity is Severity.ERROR]


# -- determinism ------------------------------------------------------------------


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_same_seed_same_bytes(builtins, name):
    s = builtins[name]
    assert to_bytes(run_scenario(s)) == to_bytes(run_scenario(s))


@pytest.mark.parametrize("seed", range(25))
def test_random_scenarios_are_deterministic(seed):
    assert to_bytes(run_scenario(random_scenario(seed))) == to_bytes(run_scenario(random_scenario(seed)))


def test_seed_changes_jittered_output():
    doc = builtin_source("weather").replace("conf: 0.93", "conf: 0.9\n        conf_jitter: 0.05")
    s = load_scenario(doc)
    a = run_scenario(dataclasses.replace(s, seed=1))
    b = run_scenario(dataclasses.replace(s, seed=2))
    assert to_bytes(a) != to_bytes(b)


# -- builtins ---------------------------------------------------------------------


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtins_are_clean(builtin_runs, name):
    assert errors(check_trace(builtin_runs[name].trace.messages())) == []
    assert check_trace(builtin_runs[name].trace.messages()) == []


def test_weather_ends_with_the_reference_pair(builtin_runs, weather_pair):
    log = builtin_runs["weather"].trace
    assert types(log) == [T.HELLO, T.HELLO, T.QUERY, T.RESULT]
    assert log.messages()[2:] == list(weather_pair)
    dirs = [e.direction for e in log.snapshot()]
    assert dirs == [Direction.INBOUND, Direction.OUTBOUND, Direction.INBOUND, Direction.OUTBOUND]


def test_delegation_chain(builtin_runs):
    log = builtin_runs["delegation"].trace
    msgs = log.messages()
    assert [m.mtype for m in msgs if m.mtype is not T.HELLO] == [
        T.QUERY, T.COORD_DELEGATE, T.QUERY, T.RESULT, T.RESULT]
    g = build_correlation_graph(msgs)
    assert len([e for e in g.edges if e[2] == "of"]) == 4
    assert g.is_acyclic()
    q0, delegate, q1, r1, r0 = [m for m in msgs if m.mtype is not T.HELLO]
    assert delegate.meta.of == q0.meta.id and q1.meta.of == delegate.meta.id
    assert r1.meta.of == q1.meta.id and r0.meta.of == q0.meta.id
    assert r0.content == r1.content


def test_reasoning_chain(builtin_runs):
    msgs = builtin_runs["reasoning"].trace.messages()
    seq = [m.mtype for m in msgs]
    i = seq.index(T.REASONING_START)
    assert seq[i:i + 5] == [T.REASONING_START] + [T.REASONING_STEP] * 3 + [T.REASONING_COMPLETE]
    result = msgs[i + 5]
    assert result.mtype is T.RESULT and result.meta.reasoning_trace == msgs[i].meta.id
    assert errors(check_trace(msgs)) == []


def test_facts_are_signed(builtin_runs, builtins):
    key = builtins["facts"].agents[0].sign_key
    signed = [m for m in builtin_runs["facts"].trace.messages() if m.meta.sig is not None]
    assert signed and all(verify_integrity(m, key) for m in signed)


def test_clock_and_ids():
    s = random_scenario(3)
    msgs = run_scenario(s).messages()
    assert [m.meta.ts for m in msgs] == sorted(m.meta.ts for m in msgs)
    assert len({m.meta.id for m in msgs}) == len(msgs)
    assert msgs[0].meta.ts == s.epoch


# -- faults -----------------------------------------------------------------------


def test_empty_fault_list_is_identity(builtins):
    for s in builtins.values():
        assert to_bytes(run_scenario(inject_faults(s, []))) == to_bytes(run_scenario(s))


@pytest.mark.parametrize("kind,name,rule", [
    (FaultKind.DANGLING_OF, "weather", "OF.DANGLING"),
    (FaultKind.DUPLICATE, "weather", "ID.DUP"),
    (FaultKind.DROP, "weather", "OF.DANGLING"),
    (FaultKind.CROSS_CTX_RECALL, "memory", "ISO.LEAK"),
])
def test_fault_yields_expected_finding(builtins, kind, name, rule):
    run = execute(inject_faults(builtins[name], [Fault(kind)]))
    [inj] = run.injections
    assert inj.expected_rule == rule
    found = [(d.rule, d.index) for d in check_trace(run.trace.messages()) if d.severity.rank >= Severity.WARNING.rank]
    assert (rule, inj.locus) in found


def test_drop_complete_leaves_reasoning_open(builtins):
    run = execute(inject_faults(builtins["reasoning"], [Fault(FaultKind.DROP, Selector(mtype=T.REASONING_COMPLETE))]))
    [inj] = run.injections
    assert inj.expected_rule == "REASONING.OPEN"
    found = [(d.rule, d.index) for d in check_trace(run.trace.messages())]
    assert ("REASONING.OPEN", inj.locus) in found


def test_dangling_of_gives_exactly_one_error(builtins):
    run = execute(inject_faults(builtins["weather"], [Fault(FaultKind.DANGLING_OF)]))
    errs = errors(check_trace(run.trace.messages()))
    assert [d.rule for d in errs] == ["OF.DANGLING"]
    assert run.trace.messages()[errs[0].index].meta.of.namespace == "fault"


def test_mutate_sets_a_path(builtins):
    f = Fault(FaultKind.MUTATE, path="meta.conf", value=1.5)
    run = execute(inject_faults(builtins["weather"], [f]))
    [inj] = run.injections
    assert run.trace.messages()[inj.locus].meta.conf == 1.5
    assert "META.CONF.RANGE" in [d.rule for d in check_trace(run.trace.messages())]
    g = Fault(FaultKind.MUTATE, path="content.data.cond", value="storm")
    run = execute(inject_faults(builtins["weather"], [g]))
    assert run.trace.messages()[-1].content["data"]["cond"] == "storm"


def test_three_cross_context_recalls(builtins):
    faults = [Fault(FaultKind.CROSS_CTX_RECALL)] * 3
    run = execute(inject_faults(builtins["memory"], faults))
    violations = check_context_isolation(run.trace.messages())
    assert len(violations) == 3
    assert sorted(v.recall_locus for v in violations) == sorted(i.locus for i in run.injections)


def test_faults_compose_against_clean_targets(builtins):
    s = builtins["weather"]
    run = execute(inject_faults(s, [Fault(FaultKind.DUPLICATE, Selector(seq=3)),
                                    Fault(FaultKind.DUPLICATE, Selector(seq=2))]))
    assert [i.target_seq for i in run.injections] == [3, 2]
    assert len(run.trace) == 6


@pytest.mark.parametrize("fault", [
    Fault(FaultKind.CROSS_CTX_RECALL),  # weather stores nothing
    Fault(FaultKind.DROP, Selector(seq=99)),
    Fault(FaultKind.DROP, Selector(step=99)),
    Fault(FaultKind.MUTATE, path="bogus.path", value=1),
    Fault(FaultKind.DUPLICATE, Selector(mtype=T.PLAN)),
])
def test_unresolvable_targets_raise(builtins, fault):
    with pytest.raises(FaultTargetError):
        inject_faults(builtins["weather"], [fault])


def test_cross_recall_into_visible_ctx_is_refused(builtins):
    f = Fault(FaultKind.CROSS_CTX_RECALL, ctx=(Ident("u", "session-a"),))
    with pytest.raises(FaultTargetError):
        inject_faults(builtins["memory"], [f])


# -- scenario format --------------------------------------------------------------


@pytest.mark.parametrize("doc", [
    "- just a list",
    "name: x\nagents: []",
    "aicl_scenario: 9\nname: x\nagents: []\nschedule: []",
    "name: x\nagents: [{id: 'u!a'}]\nschedule: [{agent: 'u!b', send: HELLO}]",
    "name: x\nagents: [{id: 'u!a'}]\nschedule: [{agent: 'u!a', send: NOPE}]",
    "name: x\nagents: [{id: 'u!a'}, {id: 'u!a'}]\nschedule: []",
    "name: x\nagents: [{id: 'bad id'}]\nschedule: []",
    "name: x\nseed: -1\nagents: [{id: 'u!a'}]\nschedule: []",
    "name: x\nagents: [{id: 'u!a'}]\nschedule: [{agent: 'u!a', send: FACT, content: '{a:'}]",
    "name: x\nagents: [{id: 'u!a'}]\nschedule: [{agent: 'u!a', send: FACT, meta: {id: 'u!z'}}]",
    "name: x\nagents: [{id: 'u!a', behavior: wizard}]\nschedule: []",
    "name: x\nagents: [{id: 'u!a'}]\nschedule: []\nfaults: [{kind: explode}]",
    "name: [unclosed",
])
def test_malformed_scenarios(doc):
    with pytest.raises(ScenarioFormatError):
        execute(load_scenario(doc))


def test_invalid_emission_raises_scenario_error():
    a = Ident("u", "a")
    s = Scenario("bad", (AgentScript(a),), (Step(a, T.HELLO), Step(a, T.RESULT, {"data": 1})))
    with pytest.raises(ScenarioError) as err:
        run_scenario(s)
    assert err.value.step == 1
    assert {d.rule for d in err.value.diagnostics} >= {"PAYLOAD.RESULT.SCHEMA"}


def test_labels_resolve_of():
    doc = """
name: labels
agents: [{id: 'u!a'}, {id: 'u!t', behavior: tool, answers: [{match: '*', result: '{data:1, schema:"s"}'}]}]
schedule:
  - {agent: 'u!a', send: HELLO}
  - {agent: 'u!a', send: QUERY, content: 'tool:x{}', to: 'u!t', as: q}
  - {agent: 'u!a', send: FACT, content: '{note:"after"}', of: q}
"""
    msgs = run_scenario(load_scenario(doc)).messages()
    q = msgs[1]
    assert msgs[2].mtype is T.RESULT and msgs[2].meta.of == q.meta.id
    assert msgs[3].meta.of == q.meta.id

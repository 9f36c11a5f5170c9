"""Deterministic multi-agent scenarios with fault injection."""

from __future__ import annotations

from importlib import resources

from .behaviors import BEHAVIORS, AgentContext, Behavior, Emit
from .generate import random_message, random_scenario, random_value
from .runner import (
    Emitted,
    FaultTargetError,
    Injection,
    Run,
    ScenarioError,
    apply_faults,
    emit_messages,
    execute,
    inject_faults,
    run_scenario,
    set_path,
)
from .scenario import (
    AgentScript,
    Fault,
    FaultKind,
    Scenario,
    ScenarioFormatError,
    Selector,
    Step,
    load_scenario,
    parse_fault,
    scenario_from_dict,
)

BUILTIN_NAMES = ("weather", "delegation", "reasoning", "memory", "facts", "errors")


def builtin_source(name: str) -> str:
    """YAML text of a builtin scenario."""
    if name not in BUILTIN_NAMES:
        raise KeyError(name)
    return resources.files(__name__).joinpath("scenarios", f"{name}.yaml").read_text(encoding="utf-8")


def builtin_scenarios() -> dict[str, Scenario]:
    return {name: load_scenario(builtin_source(name)) for name in BUILTIN_NAMES}


__all__ = [
    "AgentContext", "AgentScript", "BEHAVIORS", "BUILTIN_NAMES", "Behavior", "Emit", "Emitted", "Fault",
    "FaultKind", "FaultTargetError", "Injection", "Run", "Scenario", "ScenarioError", "ScenarioFormatError",
    "Selector", "Step", "apply_faults", "builtin_scenarios", "builtin_source", "emit_messages", "execute",
    "inject_faults", "load_scenario", "parse_fault", "random_message", "random_scenario", "random_value",
    "run_scenario", "scenario_from_dict", "set_path",
]

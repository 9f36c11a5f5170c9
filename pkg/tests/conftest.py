from pathlib import Path

import pytest

from aicl.harness import builtin_scenarios, execute
from aicl.text import parse_stream

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def weather_pair():
    return parse_stream((DATA / "weather_pair.aicl").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def builtins():
    return builtin_scenarios()


@pytest.fixture(scope="session")
def builtin_runs(builtins):
    return {name: execute(sc) for name, sc in builtins.items()}


ACCEPTANCE: dict = {}


@pytest.fixture
def criterion(request):
    """Record an acceptance verdict: ``criterion(n, title)`` returns a
    callable taking the detail line; the test's outcome decides PASS/FAIL."""
    state = {}

    def start(n, title):
        state.update(n=n, title=title, detail="")
        ACCEPTANCE[n] = (title, "FAIL", "did not finish")

        def note(detail):
            state["detail"] = detail
        return note

    yield start
    if "n" in state:
        ok = request.node.rep_call.passed if hasattr(request.node, "rep_call") else False
        ACCEPTANCE[state["n"]] = (state["title"], "PASS" if ok else "FAIL", state["detail"])


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, verdict, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n} {verdict}: {title}" + (f" ({detail})" if detail else ""))

"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

_OUTCOMES: dict[str, bool] = {}
_DETAILS: dict[str, list[str]] = {}


def _criterion(item):
    m = item.get_closest_marker("acceptance")
    return m.args[0] if m and m.args else None


@pytest.fixture
def report(request):
    """``report(text)`` attaches a measured value to the current criterion's summary line."""
    name = _criterion(request.node)

    def add(text: str) -> None:
        _DETAILS.setdefault(name, []).append(text)

    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    name = _criterion(item)
    if name is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _OUTCOMES[name] = _OUTCOMES.get(name, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name in sorted(_OUTCOMES, key=lambda s: int(s.split(".")[0])):
        status = "PASS" if _OUTCOMES[name] else "FAIL"
        detail = "; ".join(_DETAILS.get(name, []))
        tr.write_line(f"{status}  {name}" + (f"  [{detail}]" if detail else ""))

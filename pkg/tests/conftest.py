import pytest

_RESULTS: dict[int, tuple[bool, str]] = {}
_TITLES = {
    1: "OLS exactness",
    2: "functional definitions",
    3: "terminal-step closed form",
    4: "oracle agreement",
    5: "full-scale NRMSE",
    6: "ANDP centering",
    7: "AROC centering",
    8: "consistency trend",
    9: "determinism",
    10: "life-model property suite",
}


@pytest.fixture
def criterion():
    """``criterion(number, passed, detail)`` records and asserts an acceptance result."""

    def record(number: int, passed: bool, detail: str) -> None:
        _RESULTS[number] = (bool(passed), detail)
        assert passed, f"criterion {number} ({_TITLES[number]}): {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title in _TITLES.items():
        if number in _RESULTS:
            ok, detail = _RESULTS[number]
            terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        else:
            terminalreporter.write_line(f"criterion {number:2d} NOT RUN  {title}")

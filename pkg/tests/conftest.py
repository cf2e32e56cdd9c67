"""Collects acceptance-criterion outcomes and prints them after the run."""

import pytest

CRITERIA = {
    1: "single-strategy function preservation",
    2: "plan composition preserves function",
    3: "FLOPs overhead zero for shortcuts, positive otherwise",
    4: "gradient coupling on the two-layer toy",
    5: "identity constructions are bit-exact",
    6: "evolution matches the exhaustive optimum",
    7: "determinism of search and CLI",
    8: "every application changes the architecture hash",
}
RESULTS: dict[int, tuple[bool, str]] = {}


def _line(n: int, passed: bool, detail: str) -> str:
    return f"ACCEPTANCE criterion {n}: {'PASS' if passed else 'FAIL'} - {CRITERIA[n]} ({detail})"


@pytest.fixture
def record():
    def _record(n: int, passed: bool, detail: str) -> bool:
        RESULTS[n] = (bool(passed), detail)
        print(_line(n, passed, detail))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in CRITERIA:
        if n in RESULTS:
            terminalreporter.write_line(_line(n, *RESULTS[n]))
        else:
            terminalreporter.write_line(f"ACCEPTANCE criterion {n}: FAIL - {CRITERIA[n]} (not run or errored)")

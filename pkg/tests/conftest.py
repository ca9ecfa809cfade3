from collections import OrderedDict

import pytest

# criterion id -> list of (passed, detail); filled by test_acceptance
ACCEPTANCE: "OrderedDict[str, list]" = OrderedDict()


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))
    print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")


@pytest.fixture
def acceptance():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, parts in ACCEPTANCE.items():
        ok = all(p for p, _ in parts)
        detail = "; ".join(d for _, d in parts)
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}")

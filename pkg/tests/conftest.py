from __future__ import annotations

import pytest

# criterion number -> (passed, detail, seconds); filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str, float]] = {}


@pytest.fixture
def record():
    def _record(number: int, passed: bool, detail: str, seconds: float) -> None:
        ACCEPTANCE[number] = (passed, detail, seconds)
        print(f"acceptance {number}: {'PASS' if passed else 'FAIL'} ({seconds:.2f}s) {detail}")

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail, seconds = ACCEPTANCE[number]
        terminalreporter.write_line(
            f"[{number:2d}] {'PASS' if passed else 'FAIL'}  {seconds:7.2f}s  {detail}"
        )

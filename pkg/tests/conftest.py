from __future__ import annotations

import pytest

from coarsecut.graphcore import FamilySpec, generate

_ACCEPTANCE: list[tuple[str, str, str]] = []


class Recorder:
    def __call__(self, name: str, passed: bool, detail: str = "", warn: bool = False) -> None:
        status = "PASS" if passed else ("WARN" if warn else "FAIL")
        _ACCEPTANCE.append((name, status, detail))
        print(f"[acceptance] {name}: {status} {detail}")


@pytest.fixture(scope="session")
def record():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{status:4s}  {name}  {detail}")


@pytest.fixture(scope="session")
def p9():
    return generate(FamilySpec("path", n=9))


@pytest.fixture(scope="session")
def c8():
    return generate(FamilySpec("cycle", n=8))


@pytest.fixture(scope="session")
def grid4():
    return generate(FamilySpec("grid2d", rows=4, cols=4))


@pytest.fixture(scope="session")
def grid10():
    return generate(FamilySpec("grid2d", rows=10, cols=10))

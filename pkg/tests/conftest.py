import os

import pytest

SPECS = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "specs")

_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def specs_dir():
    return SPECS


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    rows = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(num: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"{'PASS' if ok else 'FAIL'} criterion {num:2d}: {title}"
        if detail:
            line += f" [{detail}]"
        rows.append((num, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = config.stash.get(_ACCEPTANCE, [])
    if rows:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(rows):
            terminalreporter.write_line(line)

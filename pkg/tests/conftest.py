import json

import pytest

from mtc.demos import builtin_path, load_builtin_system


@pytest.fixture(scope="session")
def sys4a():
    return load_builtin_system("sys4a")


@pytest.fixture(scope="session")
def sys4b():
    return load_builtin_system("sys4b")


@pytest.fixture(scope="session")
def sys7():
    return load_builtin_system("sys7")


@pytest.fixture(scope="session")
def nilpotent():
    return load_builtin_system("nilpotent")


@pytest.fixture(scope="session")
def oscillator():
    return load_builtin_system("oscillator")


@pytest.fixture(scope="session")
def zero_n():
    return load_builtin_system("zero_n")


@pytest.fixture(scope="session")
def degenerate():
    return load_builtin_system("degenerate")


@pytest.fixture
def doc():
    """Fresh copy of a bundled system document, by name."""
    return lambda name: json.loads(builtin_path(name).read_text())


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line, print it, and assert the verdict."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)

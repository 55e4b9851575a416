import functools

import pytest

from sturmdim import bandtree, frequency

RESULTS = {}


@functools.lru_cache(maxsize=None)
def cached_tree(spec, V=24, depth=8, eps=0):
    return bandtree.expand_tree(frequency.parse_cf(spec), V, depth, eps)


@pytest.fixture(scope="session")
def tree():
    return cached_tree


@pytest.fixture
def record():
    """Store one line per acceptance criterion, printed in the terminal summary."""

    def _record(number, ok, detail):
        RESULTS[number] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, detail = RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

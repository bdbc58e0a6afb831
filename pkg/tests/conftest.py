import pytest

from socplan.battery import default_battery

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def cell():
    return default_battery("18650")


@pytest.fixture(scope="session")
def pack():
    return default_battery("lipo4s")


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for an acceptance criterion.

    The test calls ``criterion(number, passed, detail)`` once before
    asserting; a test that errors before reporting shows up as FAIL.
    """
    number = request.node.get_closest_marker("criterion").args[0]
    CRITERIA[number] = (False, "did not report")

    def report(passed: bool, detail: str) -> bool:
        CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed

    return report


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

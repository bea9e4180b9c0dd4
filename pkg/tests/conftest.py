import pytest

_RESULTS: dict[int, dict] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None or call.when != "call":
        return
    num = marker.args[0]
    entry = _RESULTS.setdefault(num, {"passed": True, "tests": [], "doc": ""})
    entry["passed"] &= call.excinfo is None
    entry["tests"].append(item.name)
    if not entry["doc"] and item.function.__doc__:
        entry["doc"] = item.function.__doc__.strip().splitlines()[0]


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        entry = _RESULTS[num]
        status = "PASS" if entry["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {num}: {status}  {entry['doc']}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repo",
    max_examples=60,
    deadline=None,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call" and report.outcome != "failed":
        return
    key, title = marker.args
    entry = _CRITERIA.setdefault(key, {"title": title, "ok": True, "seconds": 0.0})
    entry["ok"] = entry["ok"] and report.outcome == "passed"
    entry["seconds"] += report.duration


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        e = _CRITERIA[key]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"C{key} {status}  {e['title']}  ({e['seconds']:.2f} s)")

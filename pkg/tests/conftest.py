import pytest

CRITERIA = {
    1: "metric oracle equivalence",
    2: "hand-computed matching cases",
    3: "noise-free end-to-end suite",
    4: "analytic fault degradation",
    5: "gating economy",
    6: "delta-ablation trend",
    7: "determinism and round-trip",
}

_outcomes: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes.setdefault(n, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = marker.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        results = _outcomes.get(n)
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"AC{n} {status:7s} {title} ({len(results or [])} checks)")

import numpy as np
import pytest

from ineeg.features import featurize_recording
from ineeg.synth import SynthProfile, generate_cohort

# criterion number -> {"title", "outcomes": [(nodeid, passed)], "details": [str]}
_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.fixture
def acceptance_detail(request):
    """Attach a measured value to the acceptance summary line of this test's criterion."""
    marker = request.node.get_closest_marker("criterion")

    def record(text):
        if marker is not None:
            _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "outcomes": [], "details": []})
            _CRITERIA[marker.args[0]]["details"].append(text)
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _CRITERIA.setdefault(marker.args[0], {"title": marker.args[1], "outcomes": [], "details": []})
    if report.when == "call" or (report.when == "setup" and not report.passed):
        # an expected failure still means the criterion is not met
        passed = report.passed and not hasattr(report, "wasxfail")
        entry["outcomes"].append((item.nodeid, passed))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        entry = _CRITERIA[n]
        ok = bool(entry["outcomes"]) and all(p for _, p in entry["outcomes"])
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {entry['title']}"
        if entry["details"]:
            line += "  [" + "; ".join(entry["details"]) + "]"
        tr.write_line(line)


@pytest.fixture(scope="session")
def small_profile():
    return SynthProfile(n_subjects=3, n_trials=40, channels=4, seed=7, effect={"Alpha": 2.0})


@pytest.fixture(scope="session")
def small_cohort(small_profile):
    return generate_cohort(small_profile)


@pytest.fixture(scope="session")
def small_feats(small_cohort):
    return [featurize_recording(r) for r in small_cohort]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

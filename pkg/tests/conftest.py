import pytest
from hypothesis import HealthCheck, settings

from phiprof import synth
from phiprof.model import TimeAnchor

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def default_run():
    return synth.generate(synth.default_scenario(0))


@pytest.fixture
def run_dir(tmp_path, default_run):
    return synth.write_run(default_run, tmp_path / "run0")


def anchor(wall="13:05:02", tfs=0.0):
    h, m, s = (int(x) for x in wall.split(":"))
    return TimeAnchor(h * 3600 + m * 60 + s, tfs)


# acceptance criteria report one line each; printed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


def pytest_runtest_logreport(report):
    # a criterion that crashed before recording still gets its FAIL line
    name = report.nodeid.rsplit("::", 1)[-1]
    if report.when == "call" and report.failed and name.startswith("test_criterion_"):
        n = int(name.split("_")[2])
        if n not in ACCEPTANCE_LINES:
            msg = str(report.longrepr).strip().splitlines()[-1]
            ACCEPTANCE_LINES[n] = f"criterion {n}: FAIL - {msg}"

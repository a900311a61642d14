import pytest

from lfppl.harness import fixture


@pytest.fixture(scope="session")
def fig1():
    return fixture("fig1")


@pytest.fixture(scope="session")
def gmm():
    return fixture("gmm")


@pytest.fixture(scope="session")
def twolevel():
    return fixture("twolevel")


@pytest.fixture(scope="session")
def heavytail2():
    return fixture("heavytail", dims=2)


# One summary line per acceptance criterion, printed after the run.
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = "test_acceptance.py::test_criterion_"
    if marker not in report.nodeid:
        return
    number = int(report.nodeid.split(marker)[1].split("_")[0])
    _CRITERIA[number] = (report.passed, report.nodeid.split("::")[-1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, name = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {name}")

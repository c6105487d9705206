from importlib import resources
from pathlib import Path

import pytest

DATA = Path(__file__).parent / "data"
PKG_DATA = resources.files("sdpp.data")


@pytest.fixture
def mini_map_path() -> Path:
    return Path(str(PKG_DATA.joinpath("mini_map.osm")))


@pytest.fixture
def mini_map_bytes(mini_map_path) -> bytes:
    return mini_map_path.read_bytes()


@pytest.fixture
def manual_text() -> str:
    return PKG_DATA.joinpath("sample_manual.txt").read_text("utf-8")


@pytest.fixture
def golden_path() -> Path:
    return DATA / "mini_map_expected.json"


# -- acceptance gate reporting ------------------------------------------------------
# Tests marked ``@pytest.mark.acceptance(n, title)`` are grouped per criterion and
# summarised as one PASS/FAIL line each at the end of the run.

_criteria: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    report = outcome.get_result()
    number, title = marker.args
    _, outcomes = _criteria.setdefault(number, (title, []))
    if report.when == "call" or report.outcome != "passed":
        outcomes.append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, outcomes = _criteria[number]
        ok = bool(outcomes) and all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number}: {title}")

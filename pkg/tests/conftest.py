import numpy as np
import pytest

from baryaug.measures import Dataset, make_uniform_cloud

_OUTCOMES = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.outcome != "passed":
        detail = dict(report.user_properties).get("detail", "")
        prev = _OUTCOMES.get(crit)
        if prev is None or prev[0] == "PASS":
            _OUTCOMES[crit] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(_OUTCOMES, key=lambda c: int(c.split()[0][2:])):
        status, detail = _OUTCOMES[crit]
        tr.write_line(f"{status}  {crit}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def path_dataset():
    """Three Dirac clouds on a line; 0-1 and 1-2 are nearest neighbors."""
    return Dataset.from_points([[[0.0, 0.0]], [[1.0, 0.0]], [[2.5, 0.0]]])


def random_clouds(rng, n, s, scale=1.0, ordered=False):
    return Dataset.of([make_uniform_cloud(rng.uniform(0, scale, (s, 2)), ordered)
                       for _ in range(n)])

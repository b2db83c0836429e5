import csv
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"
_CRITERIA = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA.append((marker.args[0], marker.args[1], "PASS" if rep.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, title, status, detail in sorted(_CRITERIA, key=lambda c: str(c[0])):
        line = f"{status} criterion {number}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))


@pytest.fixture
def pima_csv(tmp_path):
    """A file shaped like the Pima diabetes data: 768 rows, 8 features, 2 classes."""
    rng = np.random.default_rng(768)
    names = ["preg", "plas", "pres", "skin", "insu", "mass", "pedi", "age", "class"]
    y = np.array(["tested_negative"] * 500 + ["tested_positive"] * 268)
    y = y[rng.permutation(768)]
    X = np.abs(rng.normal(loc=[3, 120, 69, 20, 80, 32, 0.5, 33], scale=[3, 30, 19, 16, 115, 8, 0.3, 12],
                          size=(768, 8)))
    path = tmp_path / "pima.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row, label in zip(X.round(3), y):
            w.writerow(list(row) + [label])
    return path

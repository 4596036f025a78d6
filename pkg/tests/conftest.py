import os
from pathlib import Path

import numpy as np
import pytest

from synthetic import write_dataset


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    return write_dataset(tmp_path_factory.mktemp("har"), n_train=120, n_test=60, seed=3)


@pytest.fixture(scope="session")
def har_root():
    """Real UCI HAR directory from $HAR_ROOT, or None."""
    root = os.environ.get("HAR_ROOT")
    if root and (Path(root) / "train" / "y_train.txt").is_file():
        return Path(root)
    return None


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# numba compiles on first call per dtype; wall-clock deadlines would flake
from hypothesis import settings  # noqa: E402

settings.register_profile("default", deadline=None)
settings.load_profile("default")


_CRITERIA = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        _CRITERIA.append((mark.args[0], status, item.name))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, status, name in sorted(_CRITERIA, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {n:>2}: {status}  {name}")

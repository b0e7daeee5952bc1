import os

import pytest

from dataset import load_csv, write_synthetic_csv


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical trend checks, run with RUN_SLOW=1")


def pytest_collection_modifyitems(config, items):
    if os.environ.get("RUN_SLOW") == "1":
        return
    skip = pytest.mark.skip(reason="set RUN_SLOW=1 to run trend checks")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory):
    """The 200-row, 1:9 imbalanced two-blob dataset"""
    path = tmp_path_factory.mktemp("data") / "synthetic.csv"
    return str(write_synthetic_csv(str(path), n=200, imbalance=9, seed=0))


@pytest.fixture(scope="session")
def synthetic(synthetic_csv):
    return load_csv(synthetic_csv)

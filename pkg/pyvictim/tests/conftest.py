import sys

import pytest


@pytest.fixture(scope="session")
def mock_command():
    return [sys.executable, "-m", "pyvictim", "--mock"]


@pytest.fixture(scope="session")
def locker_bundle(tmp_path_factory):
    """A locker scene bundle written through the primary's CLI."""
    pitl_cli = pytest.importorskip("pitl.cli", reason="primary package not installed")
    out = tmp_path_factory.mktemp("scene") / "locker"
    assert pitl_cli.main(["make-scene", "--preset", "locker", "--size", "32",
                          "--seed", "5", "--out", str(out)]) == 0
    return out

import os
import pathlib
import shutil

import pytest

HERE = pathlib.Path(__file__).resolve().parent
FIXTURES = HERE.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures():
    return FIXTURES


@pytest.fixture(scope="session")
def peer_forge():
    exe = os.environ.get("PEER_FORGE_BIN") or shutil.which("peer-forge")
    if not exe or not os.path.exists(exe):
        pytest.skip("peer-forge binary not found (set PEER_FORGE_BIN)")
    return exe

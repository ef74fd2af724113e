from pathlib import Path

import pytest

from hybridrate import config, constants


@pytest.fixture(autouse=True)
def isolated_home(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point the user config file and the result cache at a temporary directory."""
    monkeypatch.setattr(constants, "CONFIG_FILE", tmp_path / "config" / "config")
    monkeypatch.setattr(config, "CACHE_DIR", tmp_path / "cache")
    return tmp_path

import os

import pytest

from babenko_waves import telemetry


def pytest_collection_modifyitems(config, items):
    if os.environ.get("BABENKO_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="long regression run; set BABENKO_RUN_SLOW=1")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_telemetry(tmp_path, monkeypatch):
    """Every test starts with no open run and a private output root."""
    monkeypatch.delenv("BABENKO_RUN_ID", raising=False)
    monkeypatch.setattr(telemetry, "OUT_DIR", str(tmp_path / "telemetry"))
    telemetry.reset_telemetry()
    yield
    telemetry.reset_telemetry()

import sys

import numpy as np
import pytest

from owcnet.channel import build_channel_tensor
from owcnet.config import load_config


@pytest.fixture(scope="session")
def default_channel():
    return build_channel_tensor()


@pytest.fixture(scope="session")
def default_cfg():
    return load_config(None)


@pytest.fixture(autouse=True)
def _no_env_config(monkeypatch):
    monkeypatch.delenv("OWC_CONFIG", raising=False)


def rel(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.abs(a - b) / np.maximum(np.abs(b), 1e-300)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for mod in list(sys.modules.values()):
        lines.extend(getattr(mod, "ACCEPTANCE_LINES", None) or [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

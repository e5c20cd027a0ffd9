from __future__ import annotations

import numpy as np
import pytest

from stablelt.path_engine import SamplePath
from stablelt.stable_rng import derive_stream


@pytest.fixture
def streams():
    def make(count, seed=0, block=0):
        return [derive_stream(seed, (block << 32) | i) for i in range(count)]

    return make


@pytest.fixture
def identity_path():
    """path(s) = s on the left-endpoint grid k/N, k = 0..N."""
    n = 2**12
    t = np.arange(n + 1) / n
    return SamplePath(t, t.copy(), {"kind": "identity"})


def pytest_terminal_summary(terminalreporter):
    import sys

    lines = {}
    for mod in list(sys.modules.values()):
        lines.update(getattr(mod, "ACCEPTANCE_RESULTS", None) or {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])

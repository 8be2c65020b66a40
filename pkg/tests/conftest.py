from __future__ import annotations

import numpy as np
import pytest

from hcmc.hypercross import cross
from hcmc.trigpoly import TrigPoly


def random_poly(d: int, J: int, seed: int, density: float = 1.0) -> TrigPoly:
    """Complex Gaussian coefficients on a random subset of ``Q_[J]``."""
    rng = np.random.default_rng(seed)
    keys = cross(d, J)
    keep = rng.random(keys.shape[0]) < density
    keys = keys[keep]
    return TrigPoly(d, keys, rng.normal(size=len(keys)) + 1j * rng.normal(size=len(keys)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion and enforce its time limit."""
    import time

    class Recorder:
        def __init__(self):
            self.start = time.perf_counter()

        def check(self, number: int, passed: bool, detail: str, limit_s: float):
            elapsed = time.perf_counter() - self.start
            ok = bool(passed) and elapsed < limit_s
            line = (f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  "
                    f"[{elapsed:.1f}s, limit {limit_s:g}s]")
            ACCEPTANCE_LINES.append(line)
            print(line)
            assert passed, detail
            assert elapsed < limit_s, f"took {elapsed:.1f}s, limit {limit_s:g}s"

    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

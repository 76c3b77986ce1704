import numpy as np
import pytest

from wpeloc.spectral import PowerProfile
from wpeloc.wpe import WpeConfig, WpeFilter


def random_filter(rng, taps=4, bins=9, power=None):
    coeffs = rng.standard_normal((taps, bins)) + 1j * rng.standard_normal((taps, bins))
    if power is None:
        power = rng.uniform(0.1, 2.0, bins)
    return WpeFilter(coeffs, WpeConfig(taps=taps), PowerProfile(power))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Record a pass/fail line for an acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def report(number: int, ok: bool, detail: str):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

import numpy as np
import pytest
from hypothesis import settings

from bdftkit import BdftParams, MultisineSpec, SyntheticParticipant

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance pass/fail line; shown again in the terminal summary."""

    def _report(number: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"ACCEPTANCE {number} [{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        print(line)
        ACCEPTANCE_LINES.append(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def params_y():
    return BdftParams(3.0, 2 * np.pi * 2.5, 0.35)


@pytest.fixture
def params_z():
    return BdftParams(5.0, 2 * np.pi * 1.8, 0.3)


@pytest.fixture
def participant(params_y, params_z):
    return SyntheticParticipant(params_y, params_z, tracking_bandwidth=2.0, remnant_level=0.0, rng_seed=11)


@pytest.fixture
def spec10():
    """Ten commensurate components on a 20 s grid between 0.5 and 9 Hz."""
    cycles = np.array([11, 17, 23, 31, 41, 53, 67, 89, 127, 173])
    amps = np.linspace(1.0, 0.4, cycles.size)
    phases = np.random.default_rng(5).uniform(0, 2 * np.pi, cycles.size)
    return MultisineSpec(amps, 2 * np.pi * cycles / 20.0, phases)

import numpy as np
import pytest

from isacsim.fixtures import ground_plate, plate_scene
from isacsim.propagation import RadioConfig
from isacsim.scene import scene_from_dict


@pytest.fixture
def small_radio():
    return RadioConfig(num_subcarriers=64, num_symbols=16, cyclic_prefix=16)


@pytest.fixture
def plate_world():
    """Large metal ground plate with TX/RX above it."""
    return scene_from_dict(plate_scene([ground_plate(20.0)]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance report

_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        _ACCEPTANCE.append((criterion, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda x: x[0]):
        terminalreporter.write_line(line)

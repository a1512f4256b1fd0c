import numpy as np
import pytest

from bsmkit.core import FrequencyGrid, TFKind, TransferFunctionSet, ring_grid
from bsmkit.design import DesignConfig, design_magls
from bsmkit.filterbank import make_filterbank
from bsmkit.scenes import semicircle_scene


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def random_pair(rng, grid, dirs, mics):
    """Random ATF / HRTF on a shared grid (an HRTF with magnitudes bounded away from 0)."""
    shape = (grid.bins, mics, len(dirs))
    atf = TransferFunctionSet(grid, dirs, random_complex(rng, shape), TFKind.ATF)
    h = (1.0 + rng.random((grid.bins, 2, len(dirs)))) * np.exp(2j * np.pi * rng.random((grid.bins, 2, len(dirs))))
    hrtf = TransferFunctionSet(grid, dirs, h, TFKind.HRTF)
    return atf, hrtf


def toy_problem(seed=0, mics=3, fft_size=30, directions=8):
    """Random 3-mic / 16-bin / 8-direction case with a MagLS start and a 4-band bank."""
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid(30000.0, fft_size)
    dirs = ring_grid(360.0 / directions)
    atf, hrtf = random_pair(rng, grid, dirs, mics)
    c0 = design_magls(atf, hrtf, DesignConfig(20.0, 1500.0, fft_size))
    bank = make_filterbank(grid, 1500.0, 14000.0, 4)
    horiz = np.arange(directions)
    return atf, hrtf, c0, bank, horiz


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_scene():
    """Semicircle array and spherical head at reduced resolution (fast training tests)."""
    return semicircle_scene(sample_rate=48000.0, fft_size=128, ring_step=10.0)


_ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)``; all lines are printed in the terminal summary."""

    def record(criterion, passed, detail):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})"
        _ACCEPTANCE[str(criterion)] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    groups = {}
    for key, line in _ACCEPTANCE.items():
        groups.setdefault(int(key.split(".")[0]), []).append((key, line))
    for major in sorted(groups):
        clauses = sorted(groups[major])
        if len(clauses) == 1:
            terminalreporter.write_line(clauses[0][1])
            continue
        ok = all(": PASS" in line for _, line in clauses)
        terminalreporter.write_line(f"criterion {major}: {'PASS' if ok else 'FAIL'}")
        for _, line in clauses:
            terminalreporter.write_line("    " + line)

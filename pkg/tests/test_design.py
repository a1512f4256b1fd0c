import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bsmkit.core import FrequencyGrid, Method, TFKind, TransferFunctionSet, reconstruct, ring_grid
from bsmkit.design import DesignConfig, SingularSystemError, design_ls, design_magls, ls_coefficients
from bsmkit.metrics import magnitude_error
from conftest import random_pair


def _identity_case(rng, M=4, bins=5):
    grid = FrequencyGrid(8000, 2 * (bins - 1))
    dirs = ring_grid(360 / M)
    V = np.broadcast_to(np.eye(M, dtype=complex), (bins, M, M))
    atf = TransferFunctionSet(grid, dirs, V)
    h = rng.standard_normal((bins, 2, M)) + 1j * rng.standard_normal((bins, 2, M))
    return atf, TransferFunctionSet(grid, dirs, h, TFKind.HRTF)


def test_identity_steering_exact(rng):
    atf, hrtf = _identity_case(rng)
    c = design_ls(atf, hrtf, DesignConfig(regularization=0.0)).data
    assert np.array_equal(c, hrtf.data.conj().transpose(0, 2, 1))


def test_identity_steering_shrinkage(rng):
    atf, hrtf = _identity_case(rng)
    c = design_ls(atf, hrtf, DesignConfig(snr_db=0.0)).data
    assert np.allclose(c, hrtf.data.conj().transpose(0, 2, 1) / 2, atol=1e-15)


def test_ls_against_independent_solver(rng):
    grid = FrequencyGrid(16000, 16)
    atf, hrtf = random_pair(rng, grid, ring_grid(360 / 64), 4)
    c = design_ls(atf, hrtf, DesignConfig(20.0)).data
    lam = 0.01
    for f in range(grid.bins):
        V = atf.data[f]
        # ridge regression on the stacked real system as an independent route
        A = np.vstack([V.conj().T, np.sqrt(lam) * np.eye(4)])
        for e in range(2):
            b = np.concatenate([hrtf.data[f, e].conj(), np.zeros(4)])
            ref = np.linalg.lstsq(A, b, rcond=None)[0]
            assert np.allclose(c[f, :, e], ref, atol=1e-10)


def test_singular_without_regularisation():
    grid = FrequencyGrid(8000, 4)
    dirs = ring_grid(120)
    V = np.ones((3, 2, 3), complex)  # rank one
    atf = TransferFunctionSet(grid, dirs, V)
    hrtf = TransferFunctionSet(grid, dirs, np.ones((3, 2, 3)), TFKind.HRTF)
    with pytest.raises(SingularSystemError):
        design_ls(atf, hrtf, DesignConfig(regularization=0.0))


def test_grid_mismatch(rng):
    a, h = random_pair(rng, FrequencyGrid(8000, 8), ring_grid(90), 3)
    a2, _ = random_pair(rng, FrequencyGrid(8000, 8), ring_grid(45), 3)
    with pytest.raises(ValueError):
        design_ls(a2, h)
    with pytest.raises(ValueError):
        DesignConfig(cutoff_hz=0)


def test_magls_cutoff_above_nyquist_is_ls(rng):
    a, h = random_pair(rng, FrequencyGrid(8000, 16), ring_grid(30), 4)
    ls = design_ls(a, h)
    mag = design_magls(a, h, DesignConfig(cutoff_hz=1e6))
    assert np.array_equal(mag.data, ls.data) and mag.method == Method.LS


def test_magls_identity_exact_magnitudes(rng):
    atf, hrtf = _identity_case(rng, M=4, bins=9)
    f = design_magls(atf, hrtf, DesignConfig(cutoff_hz=1500, regularization=0.0))
    z = reconstruct(f, atf)
    above = atf.grid.bin_frequencies >= 1500
    assert np.allclose(np.abs(z[above]), np.abs(hrtf.data[above]), rtol=1e-14)


def test_magls_phase_recursion(rng):
    a, h = random_pair(rng, FrequencyGrid(8000, 32), ring_grid(30), 4)
    cfg = DesignConfig(20, 1500, 32)
    f = design_magls(a, h, cfg)
    z = reconstruct(f, a)
    freqs = a.grid.bin_frequencies
    first = int(np.flatnonzero(freqs >= 1500)[0])
    for b in (first, first + 3):
        target = np.abs(h.data[b]) * np.exp(1j * np.angle(z[b - 1]))
        ref = ls_coefficients(a.data[b : b + 1], target[None], cfg.reg)[0]
        assert np.allclose(f.data[b], ref, atol=1e-12)


def test_magls_deterministic(rng):
    a, h = random_pair(rng, FrequencyGrid(8000, 32), ring_grid(30), 4)
    assert design_magls(a, h) == design_magls(a, h)


def test_magls_beats_ls_on_semicircle(small_scene):
    s = small_scene
    above = s.grid.bin_frequencies >= 1500
    errs = []
    for design in (design_ls, design_magls):
        m, _ = magnitude_error(s.hrtf.data, reconstruct(design(s.atf, s.hrtf), s.atf))
        errs.append(np.nanmean(m[above]))
    assert errs[1] < errs[0]


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([3, 4, 6]), st.floats(500, 3500))
def test_below_cutoff_identity(seed, M, fc):
    r = np.random.default_rng(seed)
    a, h = random_pair(r, FrequencyGrid(8000, 16), ring_grid(20), M)
    ls = design_ls(a, h)
    mag = design_magls(a, h, DesignConfig(20, fc, 16))
    below = a.grid.bin_frequencies < fc
    assert np.array_equal(mag.data[below], ls.data[below])


def test_conjugation_covariance(rng):
    a, h = random_pair(rng, FrequencyGrid(8000, 8), ring_grid(30), 4)
    ac = TransferFunctionSet(a.grid, a.directions, a.data.conj())
    hc = TransferFunctionSet(h.grid, h.directions, h.data.conj(), TFKind.HRTF)
    assert np.allclose(design_ls(ac, hc).data, design_ls(a, h).data.conj(), atol=1e-12)


def test_regularisation_monotone(rng):
    a, h = random_pair(rng, FrequencyGrid(8000, 8), ring_grid(30), 5)
    norms = [np.linalg.norm(design_ls(a, h, DesignConfig(snr)).data, axis=1) for snr in (60, 30, 20, 10, 0, -10)]
    for lo, hi in zip(norms[1:], norms[:-1]):
        assert np.all(lo <= hi * (1 + 1e-12))

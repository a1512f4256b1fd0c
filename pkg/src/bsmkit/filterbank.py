"""ERB-spaced gammatone band weights on a DFT frequency grid.

Bands are applied as fixed nonnegative weights on power spectra, so band
energies are plain weighted sums (differentiable and exactly quadratic in
the spectrum magnitude).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FrequencyGrid

GAMMATONE_ORDER = 4
_BW_FACTOR = 1.019


def erb_bandwidth(f):
    """Glasberg-Moore equivalent rectangular bandwidth in Hz."""
    return 24.7 * (4.37 * np.asarray(f, dtype=float) / 1000.0 + 1.0)


def erb_number(f):
    return 21.4 * np.log10(4.37 * np.asarray(f, dtype=float) / 1000.0 + 1.0)


def erb_number_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) * 1000.0 / 4.37


def make_erb_centers(f_low: float = 1500.0, f_high: float = 20000.0, count: int = 23) -> np.ndarray:
    """Centre frequencies equally spaced on the ERB-number scale, endpoints included."""
    if not 0 < f_low < f_high:
        raise ValueError("need 0 < f_low < f_high")
    if count < 2:
        raise ValueError("count must be >= 2")
    centers = erb_number_to_hz(np.linspace(erb_number(f_low), erb_number(f_high), count))
    centers[0], centers[-1] = f_low, f_high
    return centers


@dataclass(frozen=True, eq=False)
class Filterbank:
    grid: FrequencyGrid
    centers: np.ndarray
    weights: np.ndarray  # (bands, bins)
    f_low: float
    f_high: float

    @property
    def bands(self) -> int:
        return self.centers.size

    @property
    def support(self) -> np.ndarray:
        """Boolean bin mask used for band integration (``f >= f_low / 2``)."""
        return self.grid.bin_frequencies >= self.f_low / 2.0

    @property
    def integration_weights(self) -> np.ndarray:
        return self.weights * self.support[None, :]

    def band_energies(self, spectrum, axis: int = 0) -> np.ndarray:
        """Weighted energy ``sum_f G(f_i, f) |X(f)|^2`` along ``axis`` (the bin axis).

        The band axis replaces the bin axis in the result.
        """
        power = np.abs(np.asarray(spectrum)) ** 2
        power = np.moveaxis(power, axis, -1)
        out = power @ self.integration_weights.T
        return np.moveaxis(out, -1, axis)

    def to_csv(self) -> str:
        freqs = self.grid.bin_frequencies
        rows = ["center_hz," + ",".join(f"{f:.6f}" for f in freqs)]
        for c, w in zip(self.centers, self.weights):
            rows.append(f"{c:.6f}," + ",".join(f"{x:.9e}" for x in w))
        return "\n".join(rows) + "\n"


def gammatone_weights(centers, grid: FrequencyGrid) -> np.ndarray:
    """Fourth-order gammatone power response, peak-normalised to 1 at each centre."""
    centers = np.asarray(centers, dtype=float)
    if np.any(centers <= 0) or np.any(centers >= grid.nyquist):
        raise ValueError("centre frequencies must lie strictly between 0 and Nyquist")
    f = grid.bin_frequencies[None, :]
    b = _BW_FACTOR * erb_bandwidth(centers)[:, None]
    return (1.0 + ((f - centers[:, None]) / b) ** 2) ** (-GAMMATONE_ORDER)


def make_filterbank(grid: FrequencyGrid, f_low: float = 1500.0, f_high: float = 20000.0,
                    count: int = 23) -> Filterbank:
    centers = make_erb_centers(f_low, f_high, count)
    w = gammatone_weights(centers, grid)
    return Filterbank(grid, centers, w, float(f_low), float(f_high))

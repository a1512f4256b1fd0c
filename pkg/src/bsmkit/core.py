"""Shared containers: frequency and direction grids, transfer-function sets, filter sets.

Angles are kept in degrees. Elevation is the polar angle measured from the
+z axis (90 deg is the horizontal plane) and azimuth is measured
counter-clockwise from the +x (front) axis, so 90 deg points to the left.
Ear channel 0 is always the left ear.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

LEFT, RIGHT = 0, 1
FOUR_PI = 4.0 * np.pi


class GridError(ValueError):
    """Raised when a direction grid cannot support the requested operation."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FrequencyGrid:
    """One-sided DFT frequency axis."""

    sample_rate: float
    fft_size: int

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if int(self.fft_size) != self.fft_size or self.fft_size < 2 or self.fft_size % 2:
            raise ValueError(f"fft_size must be an even integer >= 2, got {self.fft_size}")
        object.__setattr__(self, "sample_rate", float(self.sample_rate))
        object.__setattr__(self, "fft_size", int(self.fft_size))

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def spacing(self) -> float:
        return self.sample_rate / self.fft_size

    @property
    def bin_frequencies(self) -> np.ndarray:
        return np.arange(self.bins) * self.spacing

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    def wavenumbers(self, c0: float = 343.0) -> np.ndarray:
        return 2.0 * np.pi * self.bin_frequencies / c0


class Direction(NamedTuple):
    elevation: float
    azimuth: float

    @classmethod
    def make(cls, elevation: float, azimuth: float) -> "Direction":
        if not 0.0 <= elevation <= 180.0:
            raise ValueError(f"elevation must lie in [0, 180], got {elevation}")
        return cls(float(elevation), float(azimuth) % 360.0)


def unit_vectors(elevation, azimuth) -> np.ndarray:
    """Cartesian unit vectors, shape (..., 3), for angles in degrees."""
    th = np.deg2rad(np.asarray(elevation, dtype=float))
    ph = np.deg2rad(np.asarray(azimuth, dtype=float))
    return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)


def angles_from_vectors(vectors) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`unit_vectors` (vectors need not be normalised)."""
    v = np.asarray(vectors, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    elevation = np.rad2deg(np.arccos(np.clip(v[..., 2] / r, -1.0, 1.0)))
    azimuth = np.rad2deg(np.arctan2(v[..., 1], v[..., 0])) % 360.0
    return elevation, azimuth


def great_circle_angle(a: Direction, b: Direction) -> float:
    """Central angle between two directions, in degrees within [0, 180]."""
    ua = unit_vectors(a[0], a[1])
    ub = unit_vectors(b[0], b[1])
    # atan2 form stays accurate near 0 and 180 degrees
    cross = np.linalg.norm(np.cross(ua, ub))
    return float(np.rad2deg(np.arctan2(cross, np.dot(ua, ub))))


@dataclass(frozen=True, eq=False)
class DirectionGrid:
    """Ordered set of directions with optional quadrature weights (sum 4*pi)."""

    elevation: np.ndarray
    azimuth: np.ndarray
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        el = np.asarray(self.elevation, dtype=float).ravel()
        az = np.asarray(self.azimuth, dtype=float).ravel() % 360.0
        if el.size == 0 or el.shape != az.shape:
            raise ValueError("elevation and azimuth must be nonempty and equally long")
        if np.any((el < 0) | (el > 180)) or not np.all(np.isfinite(az)):
            raise ValueError("elevation must lie in [0, 180] and azimuth must be finite")
        vec = unit_vectors(el, az)
        pairs = cKDTree(vec).query_pairs(np.deg2rad(1e-9))
        if pairs:
            i, j = sorted(pairs)[0]
            raise ValueError(f"duplicate directions at indices {i} and {j}")
        object.__setattr__(self, "elevation", _frozen(el))
        object.__setattr__(self, "azimuth", _frozen(az))
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float).ravel()
            if w.shape != el.shape or np.any(w <= 0):
                raise ValueError("weights must be positive, one per direction")
            if abs(w.sum() - FOUR_PI) > 1e-6 * FOUR_PI:
                raise ValueError(f"weights must sum to 4*pi, got {w.sum()}")
            object.__setattr__(self, "weights", _frozen(w))

    def __len__(self) -> int:
        return self.elevation.size

    def __getitem__(self, i: int) -> Direction:
        return Direction(float(self.elevation[i]), float(self.azimuth[i]))

    @property
    def vectors(self) -> np.ndarray:
        return unit_vectors(self.elevation, self.azimuth)

    def subset(self, indices: Sequence[int]) -> "DirectionGrid":
        idx = np.asarray(indices, dtype=int)
        return DirectionGrid(self.elevation[idx], self.azimuth[idx])

    def nearest(self, elevation, azimuth) -> tuple[np.ndarray, np.ndarray]:
        """Index of the nearest grid direction and the mismatch in degrees."""
        targets = unit_vectors(elevation, azimuth)
        _, idx = cKDTree(self.vectors).query(targets.reshape(-1, 3))
        idx = idx.reshape(np.shape(targets)[:-1])
        near = self.vectors[idx]
        dots = np.sum(near * targets, axis=-1)
        cross = np.linalg.norm(np.cross(near, targets), axis=-1)
        return idx, np.rad2deg(np.arctan2(cross, dots))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DirectionGrid):
            return NotImplemented
        same_w = (self.weights is None and other.weights is None) or (
            self.weights is not None
            and other.weights is not None
            and np.array_equal(self.weights, other.weights)
        )
        return (
            np.array_equal(self.elevation, other.elevation)
            and np.array_equal(self.azimuth, other.azimuth)
            and same_w
        )

    __hash__ = None


def horizontal_subgrid(grid: DirectionGrid, count: int = 361, tolerance: float = 3.0):
    """Select the grid points closest to ``count`` equally spaced horizontal targets.

    Targets sit at elevation 90 and azimuth ``k * 360 / (count - 1)``, so the
    first and last target coincide. Returns ``(indices, max_mismatch_deg)``.
    """
    if len(grid) == 0:
        raise GridError("empty grid")
    if count < 2:
        raise ValueError("count must be >= 2")
    az = np.arange(count) * 360.0 / (count - 1)
    idx, mismatch = grid.nearest(np.full(count, 90.0), az)
    worst = float(mismatch.max())
    if worst > tolerance:
        raise GridError(
            f"horizontal evaluation needs a ring: worst mismatch {worst:.3f} deg "
            f"exceeds {tolerance} deg"
        )
    return idx, worst


def unique_horizontal(grid: DirectionGrid, count: int = 361, tolerance: float = 3.0) -> np.ndarray:
    """Distinct indices of :func:`horizontal_subgrid`, ordered by azimuth."""
    idx, _ = horizontal_subgrid(grid, count, tolerance)
    _, first = np.unique(idx, return_index=True)
    return idx[np.sort(first)]


class TFKind(enum.IntEnum):
    ATF = 0
    HRTF = 1
    FILTER = 2


class Method(enum.IntEnum):
    LS = 0
    MagLS = 1
    iMagLS = 2


@dataclass(frozen=True, eq=False)
class TransferFunctionSet:
    """Complex responses indexed ``[bin, channel, direction]``."""

    grid: FrequencyGrid
    directions: DirectionGrid
    data: np.ndarray
    kind: TFKind = TFKind.ATF

    def __post_init__(self):
        kind = TFKind(self.kind)
        if kind == TFKind.FILTER:
            raise ValueError("use FilterSet for filter coefficients")
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(complex)
        expected = (self.grid.bins, data.shape[1] if data.ndim == 3 else -1, len(self.directions))
        if data.ndim != 3 or data.shape[0] != expected[0] or data.shape[2] != expected[2]:
            raise ValueError(f"data shape {data.shape} does not match (bins, channels, directions) = {expected}")
        if data.shape[1] < 1:
            raise ValueError("need at least one channel")
        if kind == TFKind.HRTF and data.shape[1] != 2:
            raise ValueError("an HRTF set has exactly two channels (left, right)")
        if not np.all(np.isfinite(data)):
            raise ValueError("transfer functions must be finite")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "data", _frozen(data))

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def with_directions(self, indices: Sequence[int]) -> "TransferFunctionSet":
        idx = np.asarray(indices, dtype=int)
        return TransferFunctionSet(self.grid, self.directions.subset(idx), self.data[:, :, idx], self.kind)

    def scaled(self, gain: float) -> "TransferFunctionSet":
        return TransferFunctionSet(self.grid, self.directions, self.data * gain, self.kind)

    def __eq__(self, other) -> bool:
        if not isinstance(other, TransferFunctionSet):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.directions == other.directions
            and self.kind == other.kind
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FilterSet:
    """Per-ear BSM coefficients indexed ``[bin, mic, ear]``.

    Rendering uses the conjugate of the stored values: ``z = c^H x``.
    """

    grid: FrequencyGrid
    data: np.ndarray
    method: Method = Method.LS
    snr_db: float = 20.0

    def __post_init__(self):
        data = np.asarray(self.data)
        if not np.iscomplexobj(data):
            data = data.astype(complex)
        if data.ndim != 3 or data.shape[0] != self.grid.bins or data.shape[2] != 2:
            raise ValueError(f"filter data must be (bins={self.grid.bins}, mics, 2); got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValueError("filter coefficients must be finite")
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "snr_db", float(self.snr_db))
        object.__setattr__(self, "data", _frozen(data))

    @property
    def mic_count(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FilterSet):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.method == other.method
            and self.snr_db == other.snr_db
            and self.data.dtype == other.data.dtype
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def reconstruct(filters: FilterSet, atf: TransferFunctionSet) -> np.ndarray:
    """Plane-wave binaural response ``z = c^H v`` for every bin, ear and direction.

    Returns an array shaped ``[bin, ear, direction]``.
    """
    if filters.grid != atf.grid:
        raise ValueError("filters and ATF use different frequency grids")
    if filters.mic_count != atf.channels:
        raise ValueError(f"filters have {filters.mic_count} mics, ATF has {atf.channels}")
    return np.einsum("fme,fmq->feq", filters.data.conj(), atf.data)


def ring_grid(step_deg: float = 1.0, elevation: float = 90.0) -> DirectionGrid:
    """Equally spaced azimuth ring; ``360 / step_deg`` must be an integer."""
    n = round(360.0 / step_deg)
    if abs(n * step_deg - 360.0) > 1e-9:
        raise ValueError(f"step {step_deg} does not divide 360")
    return DirectionGrid(np.full(n, elevation), np.arange(n) * step_deg)


def spiral_grid(count: int) -> DirectionGrid:
    """Quasi-uniform Fibonacci-spiral grid with equal weights ``4*pi/count``.

    Used as a stand-in for Lebedev grids; it has no exact horizontal ring.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    k = np.arange(count) + 0.5
    z = 1.0 - 2.0 * k / count
    golden = np.pi * (3.0 - np.sqrt(5.0))
    az = np.rad2deg(golden * np.arange(count)) % 360.0
    el = np.rad2deg(np.arccos(z))
    return DirectionGrid(el, az, np.full(count, FOUR_PI / count))


def ring_and_caps_grid(ring_step: float = 2.0, off_plane_elevations=(30.0, 60.0, 120.0, 150.0),
                       off_plane_step: float = 30.0, poles: bool = True) -> DirectionGrid:
    """A dense horizontal ring plus coarse rings above and below it."""
    el = [np.full(round(360 / ring_step), 90.0)]
    az = [np.arange(round(360 / ring_step)) * ring_step]
    for e in off_plane_elevations:
        n = round(360 / off_plane_step)
        el.append(np.full(n, float(e)))
        az.append(np.arange(n) * off_plane_step)
    if poles:
        el.append(np.array([0.0, 180.0]))
        az.append(np.array([0.0, 0.0]))
    return DirectionGrid(np.concatenate(el), np.concatenate(az))


def merge_grids(*grids: DirectionGrid) -> DirectionGrid:
    """Concatenate grids, dropping directions already present."""
    el, az = [], []
    seen = None
    for g in grids:
        vec = g.vectors
        if seen is not None:
            d, _ = cKDTree(seen).query(vec)
            keep = d > np.deg2rad(1e-6)
        else:
            keep = np.ones(len(g), dtype=bool)
        el.append(g.elevation[keep])
        az.append(g.azimuth[keep])
        seen = vec[keep] if seen is None else np.vstack([seen, vec[keep]])
    return DirectionGrid(np.concatenate(el), np.concatenate(az))

"""Shoebox room impulse responses with the image-source method.

Walls are the planes ``x_a = 0`` and ``x_a = L_a`` of each axis ``a``. An
image is labelled per axis by ``(n, u)`` with ``n`` integer and ``u`` in
{0, 1}; its coordinate is ``2 n L + (1 - 2u) s`` and it has undergone
``|n - u|`` reflections on the wall at 0 and ``|n|`` on the wall at ``L``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import oaconvolve

from .core import Direction, TransferFunctionSet, angles_from_vectors

C0 = 343.0
SINC_TAPS = 32
MAX_MISMATCH_DEG = 5.0
_SABINE = 24.0 * math.log(10.0)


def _beta_table(beta) -> np.ndarray:
    """Normalise a reflection coefficient spec to shape (3, 2): axis x (wall at 0, wall at L)."""
    b = np.asarray(beta, dtype=float)
    if b.ndim == 0:
        b = np.full((3, 2), float(b))
    elif b.shape == (3,):
        b = np.repeat(b[:, None], 2, axis=1)
    elif b.shape != (3, 2):
        raise ValueError("beta must be a scalar, one value per wall pair (3,), or per wall (3, 2)")
    if np.any(b < 0) or np.any(b >= 1):
        raise ValueError("reflection coefficients must lie in [0, 1)")
    return b


@dataclass(frozen=True)
class RoomSpec:
    dimensions: tuple
    beta: object
    max_order: int
    source: tuple
    receiver: tuple
    sample_rate: float = 48000.0
    c0: float = C0

    def __post_init__(self):
        dims = np.asarray(self.dimensions, dtype=float)
        if dims.shape != (3,) or np.any(dims <= 0):
            raise ValueError("room dimensions must be three positive lengths")
        for name in ("source", "receiver"):
            p = np.asarray(getattr(self, name), dtype=float)
            if p.shape != (3,) or np.any(p <= 0) or np.any(p >= dims):
                raise ValueError(f"{name} must lie strictly inside the room")
        if int(self.max_order) != self.max_order or self.max_order < 0:
            raise ValueError("max_order must be a nonnegative integer")
        if self.sample_rate <= 0:
            raise ValueError("sample rate must be positive")
        _beta_table(self.beta)

    @property
    def betas(self) -> np.ndarray:
        return _beta_table(self.beta)

    def swapped(self) -> "RoomSpec":
        return RoomSpec(self.dimensions, self.beta, self.max_order, self.receiver, self.source,
                        self.sample_rate, self.c0)

    def as_dict(self) -> dict:
        return {
            "dimensions": [float(x) for x in self.dimensions],
            "beta": np.asarray(self.beta, dtype=float).tolist(),
            "max_order": int(self.max_order),
            "source": [float(x) for x in self.source],
            "receiver": [float(x) for x in self.receiver],
            "sample_rate": float(self.sample_rate),
            "c0": float(self.c0),
        }


@dataclass(frozen=True)
class ImageSource:
    position: np.ndarray
    amplitude: float
    delay: float  # seconds
    direction: Direction  # arrival direction seen from the receiver
    order: int
    counts: tuple  # reflections per wall ((x0, xL), (y0, yL), (z0, zL))


def _axis_images(s: float, L: float, N: int):
    """All (coordinate, hits_at_0, hits_at_L) with at most N reflections."""
    out = []
    for n in range(-N, N + 1):
        for u in (0, 1):
            a, b = abs(n - u), abs(n)
            if a + b <= N:
                out.append((2 * n * L + (1 - 2 * u) * s, a, b))
    return out


def image_sources(spec: RoomSpec) -> list:
    """Image sources up to ``spec.max_order`` reflections, direct path first.

    Sorted by order, then delay, then position for a deterministic sequence.
    """
    dims = np.asarray(spec.dimensions, dtype=float)
    src = np.asarray(spec.source, dtype=float)
    rcv = np.asarray(spec.receiver, dtype=float)
    betas = spec.betas
    N = int(spec.max_order)
    axes = [_axis_images(src[a], dims[a], N) for a in range(3)]
    images = []
    for ix, iy, iz in itertools.product(*axes):
        order = ix[1] + ix[2] + iy[1] + iy[2] + iz[1] + iz[2]
        if order > N:
            continue
        pos = np.array([ix[0], iy[0], iz[0]])
        counts = ((ix[1], ix[2]), (iy[1], iy[2]), (iz[1], iz[2]))
        gain = 1.0
        for a in range(3):
            for w in range(2):
                if counts[a][w]:
                    gain *= betas[a, w] ** counts[a][w]
        vec = pos - rcv
        dist = float(np.linalg.norm(vec))
        el, az = angles_from_vectors(vec / dist)
        images.append(
            ImageSource(pos, gain / (4.0 * math.pi * dist), dist / spec.c0,
                        Direction(float(el), float(az)), order, counts)
        )
    images.sort(key=lambda im: (im.order, im.delay, tuple(im.position)))
    return images


def image_count(max_order: int) -> int:
    """Number of distinct images with at most ``max_order`` reflections (3-D lattice)."""
    per_axis = {}
    for n in range(-max_order, max_order + 1):
        for u in (0, 1):
            k = abs(n - u) + abs(n)
            per_axis[k] = per_axis.get(k, 0) + 1
    total = 0
    for a, b, c in itertools.product(per_axis, repeat=3):
        if a + b + c <= max_order:
            total += per_axis[a] * per_axis[b] * per_axis[c]
    return total


def sabine_t60(dimensions, beta: float, c0: float = C0) -> float:
    """Sabine reverberation time for a uniform coefficient (absorption ``1 - beta^2``)."""
    Lx, Ly, Lz = (float(x) for x in dimensions)
    V = Lx * Ly * Lz
    S = 2.0 * (Lx * Ly + Lx * Lz + Ly * Lz)
    alpha = 1.0 - beta**2
    if alpha <= 0:
        return math.inf
    return _SABINE * V / (c0 * S * alpha)


def beta_from_t60(dimensions, t60: float, c0: float = C0) -> float:
    """Uniform reflection coefficient whose Sabine T60 equals ``t60``."""
    if not t60 > 0:
        raise ValueError("t60 must be positive")
    Lx, Ly, Lz = (float(x) for x in dimensions)
    V = Lx * Ly * Lz
    S = 2.0 * (Lx * Ly + Lx * Lz + Ly * Lz)
    alpha = _SABINE * V / (c0 * S * t60)
    if alpha > 1.0:
        raise ValueError(f"T60 {t60} s needs absorption {alpha:.3f} > 1 in this room")
    return math.sqrt(1.0 - alpha)


def fractional_delay(delay_samples: float, taps: int = SINC_TAPS):
    """Hann-windowed sinc kernel; returns ``(first_index, kernel)``."""
    n0 = math.floor(delay_samples)
    k = np.arange(n0 - taps // 2 + 1, n0 + taps // 2 + 1)
    x = k - delay_samples
    w = 0.5 * (1.0 + np.cos(2.0 * np.pi * x / taps))
    w[np.abs(x) >= taps / 2] = 0.0
    return int(k[0]), np.sinc(x) * w


def impulse_train(arrivals, length: int, sample_rate: float) -> np.ndarray:
    """Sum of fractionally delayed impulses for ``(delay_s, amplitude)`` pairs."""
    out = np.zeros(length)
    for delay, amp in arrivals:
        start, ker = fractional_delay(delay * sample_rate)
        lo, hi = max(start, 0), min(start + ker.size, length)
        if lo < hi:
            out[lo:hi] += amp * ker[lo - start : hi - start]
    return out


def omni_rir(images, sample_rate: float, length: Optional[int] = None) -> np.ndarray:
    if length is None:
        length = int(math.ceil(max(im.delay for im in images) * sample_rate)) + SINC_TAPS
    return impulse_train([(im.delay, im.amplitude) for im in images], length, sample_rate)


def _centered_irs(tf: TransferFunctionSet) -> np.ndarray:
    """Per-direction impulse responses ``(nfft, channels, Q)`` with time zero at ``nfft/2``."""
    n = tf.grid.fft_size
    ir = np.fft.irfft(tf.data, n=n, axis=0)
    return np.roll(ir, n // 2, axis=0)


def render_array_signals(images, tf: TransferFunctionSet, sample_rate: Optional[float] = None,
                         length: Optional[int] = None, max_mismatch: float = MAX_MISMATCH_DEG):
    """Room response of every channel of ``tf`` (ATF or HRTF): ``(samples, channels)``.

    Each image contributes its delayed, scaled impulse convolved with the
    transfer function of the nearest grid direction. Negative-time parts of
    the (centred) transfer-function responses are dropped. Images with zero
    amplitude are skipped before the direction match. Returns
    ``(signals, worst_mismatch_deg)``.
    """
    fs = tf.grid.sample_rate if sample_rate is None else sample_rate
    if fs != tf.grid.sample_rate:
        raise ValueError("sample rate differs from the transfer-function grid")
    n = tf.grid.fft_size
    if length is None:
        length = int(math.ceil(max(im.delay for im in images) * fs)) + n // 2 + SINC_TAPS
    images = [im for im in images if im.amplitude != 0.0]  # silent images need no grid match
    el = np.array([im.direction.elevation for im in images])
    az = np.array([im.direction.azimuth for im in images])
    idx, mismatch = tf.directions.nearest(el, az)
    worst = float(np.max(mismatch)) if len(images) else 0.0
    if worst > max_mismatch:
        raise ValueError(f"arrival direction {worst:.2f} deg from the nearest grid point (limit {max_mismatch})")
    irs = _centered_irs(tf)
    out = np.zeros((length, tf.channels))
    for q in np.unique(idx):
        members = [im for im, j in zip(images, idx) if j == q]
        train = impulse_train([(im.delay, im.amplitude) for im in members], length, fs)
        full = oaconvolve(train[:, None], irs[:, :, q], axes=0)
        out += full[n // 2 : n // 2 + length]
    return out, worst

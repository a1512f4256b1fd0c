"""Time-domain BSM rendering: filter taps and block convolution of array signals."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .core import FilterSet

EDGE_TAPER = 16
HERMITIAN_TOL = 1e-10


def hermitian_ifft(onesided: np.ndarray, n: int, axis: int = 0, check: bool = True) -> np.ndarray:
    """Real inverse transform of a one-sided spectrum via its Hermitian extension.

    DC and Nyquist bins are taken as real (as a real signal requires). With
    ``check`` the imaginary residue of the full complex inverse transform is
    verified to be below ``1e-10`` relative to the peak.
    """
    x = np.moveaxis(np.asarray(onesided, dtype=complex), axis, 0).copy()
    if x.shape[0] != n // 2 + 1:
        raise ValueError(f"expected {n // 2 + 1} bins for n={n}, got {x.shape[0]}")
    x[0] = x[0].real
    if n % 2 == 0:
        x[-1] = x[-1].real
    full = np.concatenate([x, np.conj(x[1 : (n + 1) // 2][::-1])], axis=0)
    t = np.fft.ifft(full, axis=0)
    if check:
        peak = max(np.max(np.abs(t.real)), 1.0)
        if np.max(np.abs(t.imag)) > HERMITIAN_TOL * peak:
            raise ArithmeticError("time signal is not real; spectrum is not Hermitian")
    return np.moveaxis(t.real, 0, axis)


def edge_taper(n: int, width: int = EDGE_TAPER) -> np.ndarray:
    """Window equal to 1 except half-Hann ramps over the first and last ``width`` samples."""
    w = np.ones(n)
    if width:
        ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(width) + 0.5) / width))
        w[:width] = ramp
        w[n - width :] = ramp[::-1]
    return w


def filters_to_impulse_responses(filters: FilterSet, shift: bool = True, taper: int = EDGE_TAPER) -> np.ndarray:
    """Causal FIR taps ``(fft_size, mics, 2)`` realising ``z = c^H x``.

    The conjugated spectrum is inverted, circularly shifted by ``fft_size/2``
    and tapered at both ends.
    """
    n = filters.grid.fft_size
    taps = hermitian_ifft(np.conj(filters.data), n, axis=0)
    if shift:
        taps = np.roll(taps, n // 2, axis=0)
    return taps * edge_taper(n, taper)[:, None, None]


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def overlap_add(x: np.ndarray, taps: np.ndarray, block: Optional[int] = None) -> np.ndarray:
    """MIMO block convolution: ``y[:, e] = sum_m x[:, m] * taps[:, m, e]``.

    ``x`` is ``(samples, M)`` and ``taps`` is ``(L, M, E)``; the result has the
    full length ``samples + L - 1``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    taps = np.asarray(taps, dtype=float)
    n, M = x.shape
    L, Mt, E = taps.shape
    if M != Mt:
        raise ValueError(f"signal has {M} channels, filters expect {Mt}")
    block = block or max(L, 256)
    nfft = _next_pow2(block + L - 1)
    H = np.fft.rfft(taps, n=nfft, axis=0)  # (bins, M, E)
    out = np.zeros((n + L - 1 + block, E))
    for start in range(0, n, block):
        seg = x[start : start + block]
        X = np.fft.rfft(seg, n=nfft, axis=0)  # (bins, M)
        Y = np.einsum("fm,fme->fe", X, H)
        y = np.fft.irfft(Y, n=nfft, axis=0)
        stop = min(start + nfft, out.shape[0])
        out[start:stop] += y[: stop - start]
    return out[: n + L - 1]


def binaural_render(mic_signals, filters, sample_rate: Optional[float] = None, block: Optional[int] = None,
                    trim: bool = False, normalize: Optional[str] = None) -> np.ndarray:
    """Two-channel output of the BSM filters applied to ``(samples, M)`` array signals.

    ``filters`` is a :class:`FilterSet` or precomputed taps ``(L, M, 2)``.
    ``trim`` removes the ``fft_size/2`` causality delay and keeps the input
    length; ``normalize="peak"`` scales the output peak to 1.
    """
    if isinstance(filters, FilterSet):
        if sample_rate is not None and sample_rate != filters.grid.sample_rate:
            raise ValueError("sample rate of signals and filters differ")
        taps = filters_to_impulse_responses(filters)
    else:
        taps = np.asarray(filters, dtype=float)
    y = overlap_add(mic_signals, taps, block)
    if trim:
        d = taps.shape[0] // 2
        y = y[d : d + np.shape(mic_signals)[0]]
    if normalize == "peak":
        peak = np.max(np.abs(y))
        if peak > 0:
            y = y / peak
    elif normalize not in (None, "none"):
        raise ValueError(f"unknown normalisation {normalize!r}")
    return y


def rms(x) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def match_rms(signals, reference=None) -> list:
    """Scale each signal to the RMS of ``reference`` (default: the first signal).

    Stand-in for a broadcast loudness measure.
    """
    target = rms(signals[0] if reference is None else reference)
    out = []
    for s in signals:
        r = rms(s)
        out.append(s * (target / r) if r > 0 else s)
    return out

"""Binaural signal matching filter design: regularised LS and MagLS."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as la

from .core import FilterSet, Method, TFKind, TransferFunctionSet

RESIDUAL_TOL = 1e-8


class SingularSystemError(np.linalg.LinAlgError):
    """The normal equations are singular (no regularisation, rank-deficient VV^H)."""


@dataclass(frozen=True)
class DesignConfig:
    snr_db: float = 20.0
    cutoff_hz: float = 1500.0
    fft_size: int = 1024
    regularization: Optional[float] = None  # overrides the SNR-derived value (0 allowed)

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if not self.cutoff_hz > 0:
            raise ValueError("cutoff must be positive")
        if self.regularization is not None and not self.regularization >= 0:
            raise ValueError("regularization must be nonnegative")

    @property
    def reg(self) -> float:
        """Noise-to-signal ratio sigma_n^2 / sigma_s^2."""
        if self.regularization is not None:
            return float(self.regularization)
        return 10.0 ** (-self.snr_db / 10.0)


def _check_pair(atf: TransferFunctionSet, hrtf: TransferFunctionSet):
    if atf.grid != hrtf.grid:
        raise ValueError("ATF and HRTF frequency grids differ")
    if atf.directions != hrtf.directions:
        raise ValueError("ATF and HRTF direction grids differ")
    if hrtf.kind != TFKind.HRTF:
        raise ValueError("second argument must be an HRTF set")


def _solve_bin(V: np.ndarray, rhs: np.ndarray, reg: float) -> np.ndarray:
    """Solve ``(V V^H + reg I) c = rhs`` for one bin; ``rhs`` may have several columns."""
    A = V @ V.conj().T
    if reg > 0:
        A = A + reg * np.eye(A.shape[0])
        try:
            c = la.cho_solve(la.cho_factor(A, lower=True, check_finite=False), rhs, check_finite=False)
        except la.LinAlgError:
            c = la.solve(A, rhs, assume_a="her", check_finite=False)
    else:
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise SingularSystemError("VV^H is rank deficient and no regularisation is applied")
        lu = la.lu_factor(A, check_finite=False)
        c = la.lu_solve(lu, rhs, check_finite=False)
    # normwise backward error, so that ill-conditioned but solvable bins pass
    res = np.linalg.norm(A @ c - rhs)
    scale = np.linalg.norm(A) * np.linalg.norm(c) + np.linalg.norm(rhs)
    if res > RESIDUAL_TOL * max(scale, np.finfo(float).tiny):
        raise SingularSystemError(f"normal equations residual {res:.3e} too large")
    return c


def ls_coefficients(V: np.ndarray, h: np.ndarray, reg: float) -> np.ndarray:
    """Per-bin ``(V V^H + reg I)^-1 V h^*``.

    ``V`` is ``(bins, M, Q)``, ``h`` is ``(bins, ears, Q)``; returns ``(bins, M, ears)``.
    """
    rhs = V @ h.conj().transpose(0, 2, 1)
    out = np.empty(rhs.shape, dtype=complex)
    for f in range(V.shape[0]):
        out[f] = _solve_bin(V[f], rhs[f], reg)
    return out


def design_ls(atf: TransferFunctionSet, hrtf: TransferFunctionSet, cfg: DesignConfig = DesignConfig()) -> FilterSet:
    _check_pair(atf, hrtf)
    c = ls_coefficients(atf.data, hrtf.data, cfg.reg)
    return FilterSet(atf.grid, c, Method.LS, cfg.snr_db)


def design_magls(atf: TransferFunctionSet, hrtf: TransferFunctionSet, cfg: DesignConfig = DesignConfig()) -> FilterSet:
    """MagLS: LS below the cutoff, magnitude-only matching with recursive phase above.

    For each bin at or above the cutoff (ascending), the target is
    ``|h| exp(i Phi)`` where ``Phi`` is the per-direction phase of the
    response ``c^H V`` reconstructed at the previous bin.
    """
    _check_pair(atf, hrtf)
    V, h = atf.data, hrtf.data
    c = ls_coefficients(V, h, cfg.reg)
    freqs = atf.grid.bin_frequencies
    above = np.flatnonzero(freqs >= cfg.cutoff_hz)
    mag = np.abs(h)
    for f in above:
        if f == 0:
            continue
        prev = np.einsum("me,mq->eq", c[f - 1].conj(), V[f - 1])
        target = mag[f] * np.exp(1j * np.angle(prev))
        c[f] = _solve_bin(V[f], V[f] @ target.conj().T, cfg.reg)
    # with no bin at or above the cutoff the result is the LS design itself
    method = Method.MagLS if np.any(above > 0) else Method.LS
    return FilterSet(atf.grid, c, method, cfg.snr_db)


DESIGNERS = {Method.LS: design_ls, Method.MagLS: design_magls}

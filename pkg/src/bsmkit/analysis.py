"""Narrow-band ILD bounds, zero-ILD filter construction and head-rotation sweeps."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    FilterSet,
    GridError,
    Method,
    TFKind,
    TransferFunctionSet,
    reconstruct,
    unique_horizontal,
)
from .design import DesignConfig, design_ls, design_magls
from .filterbank import Filterbank, make_filterbank
from .metrics import MetricReport, evaluate

GRAM_TOL = 1e-12
ROTATION_TOL_DEG = 0.5


class DegenerateIldError(ZeroDivisionError):
    """A level in the narrow-band ILD ratio is zero."""

    def __init__(self, message, where=None):
        super().__init__(message)
        self.where = where


def narrowband_ild_error(h_pair, c_pair, v) -> np.ndarray:
    """``|20 log10(|h_l|/|h_r| * |c_r^H v| / |c_l^H v|)|`` in dB.

    Shapes broadcast over leading axes: ``h_pair (..., 2)``, ``c_pair (..., M, 2)``,
    ``v (..., M)``. Zero levels raise :class:`DegenerateIldError` listing the
    offending positions.
    """
    h = np.asarray(h_pair)
    c = np.asarray(c_pair)
    v = np.asarray(v)
    z = np.einsum("...me,...m->...e", c.conj(), v)
    levels = np.stack([np.abs(h[..., 0]), np.abs(h[..., 1]), np.abs(z[..., 0]), np.abs(z[..., 1])])
    bad = np.any(levels == 0, axis=0)
    if np.any(bad):
        raise DegenerateIldError("zero level in ILD ratio", np.argwhere(np.atleast_1d(bad)))
    ratio = (levels[0] / levels[1]) * (levels[3] / levels[2])
    return np.abs(20.0 * np.log10(ratio))


@dataclass(frozen=True)
class ZeroIldDesign:
    target: int
    alpha: float
    W: np.ndarray  # (M, Q)
    ild_error_db: Optional[float] = None

    def filters_for(self, h_columns) -> np.ndarray:
        """Per-ear coefficients ``c = W h^*`` for HRTF columns shaped ``(Q, 2)``."""
        return self.W @ np.asarray(h_columns).conj()


def orthogonal_complement(v) -> np.ndarray:
    """Orthonormal basis (M x M-1) of the complement of ``v``, from a full SVD."""
    v = np.asarray(v, dtype=complex).reshape(-1, 1)
    u, _, _ = np.linalg.svd(v, full_matrices=True)
    return u[:, 1:]


def construct_zero_ild_w(v, q: int, Q: int, alpha: float = 1.0, h_columns=None) -> ZeroIldDesign:
    """Matrix ``W`` with ``W^H v = alpha e_q``.

    Columns other than ``q`` are filled with the complement basis of ``v`` in
    order, then zeros. If ``h_columns`` (Q x 2 HRTF at this bin) is given, the
    narrow-band ILD error of ``c = W h^*`` at the target is evaluated.
    """
    v = np.asarray(v, dtype=complex).ravel()
    norm2 = float(np.vdot(v, v).real)
    if norm2 == 0:
        raise ValueError("steering vector is zero")
    if not 0 <= q < Q:
        raise ValueError(f"target index {q} outside [0, {Q})")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    M = v.size
    W = np.zeros((M, Q), dtype=complex)
    basis = orthogonal_complement(v)
    others = [j for j in range(Q) if j != q]
    for k, j in enumerate(others[: basis.shape[1]]):
        W[:, j] = basis[:, k]
    W[:, q] = alpha / norm2 * v
    expected = np.zeros(Q, dtype=complex)
    expected[q] = alpha
    if np.max(np.abs(W.conj().T @ v - expected)) > GRAM_TOL * max(1.0, alpha):
        raise ArithmeticError("W^H v does not match alpha e_q")
    err = None
    if h_columns is not None:
        h = np.asarray(h_columns)
        err = float(narrowband_ild_error(h[q], W @ h.conj(), v))
    return ZeroIldDesign(q, float(alpha), W, err)


@dataclass(frozen=True)
class FeasibilityReport:
    subset_size: int
    mics: int
    rank: np.ndarray  # per bin
    null_dim: np.ndarray
    bins: np.ndarray

    @property
    def constructible(self) -> bool:
        """Zero ILD on every subset direction is guaranteed only when S < M."""
        return self.subset_size < self.mics

    def lines(self):
        yield f"subset S={self.subset_size}, mics M={self.mics}: " + (
            "S < M, zero-ILD constructible" if self.constructible else "S >= M, zero ILD not guaranteed"
        )
        for b, r, n in zip(self.bins, self.rank, self.null_dim):
            yield f"bin {b}: rank {r}, null-space dimension {n}"


def multi_direction_feasibility(atf: TransferFunctionSet, subset: Sequence[int], bins=None) -> FeasibilityReport:
    """Rank of the steering submatrix ``V[:, S]`` and dimension of its left null space."""
    subset = np.atleast_1d(np.asarray(subset, dtype=int))
    if subset.size < 1:
        raise ValueError("subset must contain at least one direction")
    bins = np.arange(atf.grid.bins) if bins is None else np.atleast_1d(np.asarray(bins, dtype=int))
    M = atf.channels
    ranks = np.array([np.linalg.matrix_rank(atf.data[b][:, subset]) for b in bins])
    return FeasibilityReport(int(subset.size), M, ranks, M - ranks, bins)


# ---------------------------------------------------------------- rotation


def rotation_indices(directions, angle_deg: float, tol: float = ROTATION_TOL_DEG):
    """Index map realising an azimuth rotation of a direction-indexed set.

    ``rotated[..., i] = original[..., idx[i]]`` where ``idx[i]`` is the grid
    point nearest to ``(el_i, az_i - angle)``. Raises :class:`GridError` when
    the mismatch exceeds ``tol`` degrees.
    """
    idx, mismatch = directions.nearest(directions.elevation, (directions.azimuth - angle_deg) % 360.0)
    worst = float(mismatch.max())
    if worst > tol:
        raise GridError(f"rotation by {angle_deg} deg not realisable on this grid (mismatch {worst:.3f} deg)")
    return idx, worst


def rotate_hrtf(hrtf: TransferFunctionSet, angle_deg: float, tol: float = ROTATION_TOL_DEG) -> TransferFunctionSet:
    """Counter-rotate the HRTF for a head turned by ``angle_deg`` (azimuth, counter-clockwise)."""
    idx, _ = rotation_indices(hrtf.directions, angle_deg, tol)
    return TransferFunctionSet(hrtf.grid, hrtf.directions, hrtf.data[:, :, idx], TFKind.HRTF)


@dataclass
class SweepRow:
    angle: float
    method: Method
    report: MetricReport
    filters: Optional[FilterSet] = None

    @property
    def ild_mean(self) -> float:
        return self.report.summary["ild_mean"]

    @property
    def mag_mean(self) -> float:
        return self.report.summary["mag_mean"]


def design_method(method, atf, hrtf, design_cfg: DesignConfig, imagls_cfg=None, bank=None, horiz=None):
    """Filters for one method; iMagLS starts from MagLS."""
    method = Method(method)
    if method == Method.LS:
        return design_ls(atf, hrtf, design_cfg)
    mag = design_magls(atf, hrtf, design_cfg)
    if method == Method.MagLS:
        return mag
    from .imagls import ImaglsConfig, train_imagls

    cfg = imagls_cfg or ImaglsConfig(cutoff_hz=design_cfg.cutoff_hz)
    filters, _ = train_imagls(atf, hrtf, mag, cfg, bank, horiz)
    return filters


def _sweep_one(args):
    angle, methods, atf, hrtf, design_cfg, imagls_cfg, bank, horiz, keep = args
    ref = rotate_hrtf(hrtf, angle)
    rows = []
    for m in methods:
        f = design_method(m, atf, ref, design_cfg, imagls_cfg, bank, horiz)
        rep = evaluate(Method(m).name, ref.data, reconstruct(f, atf), atf.grid.bin_frequencies,
                       bank, horiz, design_cfg.cutoff_hz)
        rows.append(SweepRow(float(angle), Method(m), rep, f if keep else None))
    return rows


def rotation_sweep(atf: TransferFunctionSet, hrtf: TransferFunctionSet, angles, methods=(Method.MagLS, Method.iMagLS),
                   design_cfg: DesignConfig = DesignConfig(), imagls_cfg=None, bank: Optional[Filterbank] = None,
                   horiz=None, jobs: int = 1, keep_filters: bool = False) -> list:
    """Re-design and evaluate every method for each head-rotation angle.

    ILD error is measured on the horizontal subset of the grid and the
    magnitude error above the design cutoff.
    """
    if bank is None:
        bank = make_filterbank(atf.grid)
    if horiz is None:
        horiz = unique_horizontal(atf.directions)
    for a in angles:
        rotation_indices(hrtf.directions, a)  # fail fast before any design work
    tasks = [(a, tuple(methods), atf, hrtf, design_cfg, imagls_cfg, bank, horiz, keep_filters) for a in angles]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            parts = list(ex.map(_sweep_one, tasks))
    else:
        parts = [_sweep_one(t) for t in tasks]
    return [row for p in parts for row in p]


def sweep_csv(rows, comment: Optional[str] = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle_deg", "method", "ild_error_mean_db", "mag_error_mean_db"])
    for r in rows:
        w.writerow([f"{r.angle:g}", r.method.name, f"{r.ild_mean:.6f}", f"{r.mag_mean:.6f}"])
    return buf.getvalue()

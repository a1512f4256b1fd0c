"""Objective error measures for binaural reproduction.

Conventions
-----------
* ``p`` is the reference and ``z`` the reproduction; plane-wave responses are
  shaped ``[bin, ear, direction]``.
* dB values that would be -inf are floored at ``DB_FLOOR``.
* The scalar ILD error is the mean over directions of the band-mean absolute
  ILD difference (``aggregation = "mean_dir(mean_band|dILD|)"``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .filterbank import Filterbank

DB_FLOOR = -300.0
EPS_DEN = 1e-12
ILD_AGGREGATION = "mean_dir(mean_band|dILD|)"


class MetricError(ValueError):
    pass


def _db_ratio(num: np.ndarray, den: np.ndarray):
    valid = den >= EPS_DEN**2
    if not np.any(valid):
        raise MetricError("reference magnitude below threshold everywhere")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 10.0 * np.log10(num / den)
    out = np.where(valid, np.maximum(out, DB_FLOOR), np.nan)
    return out, ~valid


def nmse(p, z):
    """``10 log10 |p - z|^2 / |p|^2`` per entry.

    Entries with ``|p| < 1e-12`` are NaN and flagged in the returned mask.
    """
    p, z = np.asarray(p), np.asarray(z)
    return _db_ratio(np.abs(p - z) ** 2, np.abs(p) ** 2)


def magnitude_error(p, z):
    """``10 log10 (|p| - |z|)^2 / |p|^2`` per entry; blind to phase."""
    p, z = np.asarray(p), np.asarray(z)
    return _db_ratio((np.abs(p) - np.abs(z)) ** 2, np.abs(p) ** 2)


def ild_curves(resp, bank: Filterbank, horiz=None) -> np.ndarray:
    """ILD in dB, shaped ``[direction, band]``, from a ``[bin, ear, direction]`` response."""
    resp = np.asarray(resp)
    if horiz is not None:
        resp = resp[:, :, np.asarray(horiz)]
    e = bank.band_energies(resp, axis=0)  # [band, ear, dir]
    if np.any(e <= 0) or not np.all(np.isfinite(e)):
        raise MetricError("zero or non-finite band energy")
    return (10.0 * np.log10(e[:, 0] / e[:, 1])).T


def ild_error(p, z, bank: Filterbank, horiz=None):
    """Per-direction band-mean absolute ILD error plus mean and std over directions."""
    d = np.abs(ild_curves(p, bank, horiz) - ild_curves(z, bank, horiz))
    per_dir = d.mean(axis=1)
    return {
        "per_direction": per_dir,
        "per_direction_band": d,
        "per_band": d.mean(axis=0),
        "mean": float(per_dir.mean()),
        "std": float(per_dir.std()),
        "aggregation": ILD_AGGREGATION,
    }


def bsd_from_energies(e_p, e_z) -> tuple[np.ndarray, np.ndarray]:
    """BSD per band (``10 log10 e_z / e_p``, band axis first) and LSD (RMS over bands)."""
    e_p, e_z = np.asarray(e_p, dtype=float), np.asarray(e_z, dtype=float)
    if np.any(e_p <= 0) or np.any(e_z <= 0):
        raise MetricError("zero band energy")
    bsd = 10.0 * np.log10(e_z / e_p)
    lsd = np.sqrt(np.mean(bsd**2, axis=0))
    return bsd, lsd


def bsd_lsd(p_spec, z_spec, bank: Filterbank):
    """BSD/LSD from one-sided BRIR spectra shaped ``[bin, ...]`` (e.g. ``[bin, ear]``)."""
    return bsd_from_energies(bank.band_energies(p_spec, 0), bank.band_energies(z_spec, 0))


def brir_spectrum(ir, fft_size: Optional[int] = None) -> np.ndarray:
    """One-sided spectrum of time-domain responses shaped ``[sample, channel]``."""
    ir = np.asarray(ir, dtype=float)
    return np.fft.rfft(ir, n=fft_size, axis=0)


def _summary(values, mask=None):
    v = np.asarray(values, dtype=float)
    if mask is not None:
        v = v[np.broadcast_to(mask, v.shape)]
    v = v[np.isfinite(v)]
    return float(v.mean()), float(v.std())


@dataclass
class MetricReport:
    """Container for one method's errors against a reference.

    Matrices keep the ``[bin, ear, direction]`` layout; ILD arrays are
    ``[direction, band]``.
    """

    method: str
    frequencies: np.ndarray
    nmse_db: np.ndarray
    mag_db: np.ndarray
    ild: Optional[dict] = None
    bsd: Optional[np.ndarray] = None
    lsd: Optional[np.ndarray] = None
    f_min: float = 1500.0
    summary: dict = field(default_factory=dict)

    def summarize(self) -> dict:
        band = self.frequencies >= self.f_min
        mask = band[:, None, None]
        s = {}
        s["nmse_mean"], s["nmse_std"] = _summary(self.nmse_db, mask)
        s["mag_mean"], s["mag_std"] = _summary(self.mag_db, mask)
        if self.ild is not None:
            s["ild_mean"], s["ild_std"] = self.ild["mean"], self.ild["std"]
            s["ild_aggregation"] = self.ild["aggregation"]
        if self.lsd is not None:
            s["lsd_mean"], s["lsd_std"] = float(np.mean(self.lsd)), float(np.std(self.lsd))
        s["f_min_hz"] = self.f_min
        self.summary = s
        return s

    def table_row(self) -> dict:
        """``mean_(std)`` strings in the layout of a results table."""
        s = self.summary or self.summarize()
        row = {"method": self.method}
        for key in ("ild", "mag", "nmse", "lsd"):
            if f"{key}_mean" in s:
                row[key] = f"{s[key + '_mean']:.2f}_({s[key + '_std']:.2f})"
        return row

    def long_rows(self, directions=None):
        """Rows ``(method, metric, frequency_or_band, direction, value)``."""
        rows = []
        freqs = self.frequencies
        for name, mat in (("nmse", self.nmse_db), ("mag", self.mag_db)):
            curve = np.nanmean(mat, axis=(1, 2))
            for f, v in zip(freqs, curve):
                rows.append((self.method, f"{name}_vs_freq", f"{f:.3f}", "mean", float(v)))
        if self.ild is not None:
            per_dir = self.ild["per_direction"]
            for i, v in enumerate(per_dir):
                label = str(i) if directions is None else f"{directions[i]:.3f}"
                rows.append((self.method, "ild_error", "bandmean", label, float(v)))
            for b, v in enumerate(self.ild["per_band"]):
                rows.append((self.method, "ild_error", f"band{b}", "mean", float(v)))
        if self.bsd is not None:
            for b, v in enumerate(np.atleast_2d(self.bsd.reshape(self.bsd.shape[0], -1)).mean(axis=1)):
                rows.append((self.method, "bsd", f"band{b}", "mean", float(v)))
        return rows


def evaluate(method: str, p, z, frequencies, bank: Optional[Filterbank] = None, horiz=None,
             f_min: float = 1500.0) -> MetricReport:
    """Full anechoic report for plane-wave responses ``[bin, ear, direction]``."""
    n, _ = nmse(p, z)
    m, _ = magnitude_error(p, z)
    rep = MetricReport(method, np.asarray(frequencies), n, m, f_min=f_min)
    if bank is not None:
        rep.ild = ild_error(p, z, bank, horiz)
    rep.summarize()
    return rep


def reports_to_json(reports) -> str:
    return json.dumps(
        {r.method: {**r.summary, "table": r.table_row()} for r in reports}, indent=2, sort_keys=True
    )

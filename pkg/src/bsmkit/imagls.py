"""ILD-aware magnitude least-squares refinement with a small complex MLP.

The network maps initial coefficients ``c`` (bins x mics x ears) to new
coefficients and is trained per case (no generalisation across arrays or
HRTFs). Loss terms:

* ``D_MLS``: mean squared magnitude error above the cutoff, summed over ears.
* ``D_dMLS``: same for the first difference of magnitude over frequency
  (divided by the bin spacing).
* ``D_ILD``: band-mean of the squared ILD error summed over horizontal
  directions, using gammatone band energies.

Inputs are divided by a fixed scale ``s`` before the first layer and the
output is multiplied back; this keeps the tanh layers near their linear
region so that the near-identity initialisation reproduces ``c``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import autodiff as ad
from .core import FilterSet, Method, TransferFunctionSet, unique_horizontal
from .filterbank import Filterbank, make_filterbank

EPS_MAG = 1e-12


class TrainingError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ImaglsConfig:
    lambda1: float = 0.4
    lambda2: float = 10.0
    lr: float = 0.0008
    iterations: int = 200
    cutoff_hz: float = 1500.0
    seed: int = 0
    init_noise: float = 1e-3
    input_gain: float = 10.0
    activation: str = "tanh"  # "identity" is a test hook
    mls_weight: float = 1.0  # 0 disables the magnitude terms (test hook)
    bands: int = 23
    f_high: float = 20000.0
    horiz_count: int = 361
    horiz_tolerance: float = 3.0
    reduction: str = "sum"  # MLS/dMLS reduction over bins and directions: "sum" or "mean"

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda weights must be nonnegative")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.reduction not in ("sum", "mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.input_gain <= 0:
            raise ValueError("input_gain must be positive")


_NAMES = ("W1", "W2", "W3", "W4", "b1", "b2", "b3", "b4")


@dataclass
class MlpParams:
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    W4: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray

    @staticmethod
    def shapes(mics: int, bins: int) -> dict:
        m2 = 2 * mics
        return {"W1": (m2, m2), "W2": (bins, bins), "W3": (m2, m2), "W4": (bins, bins),
                "b1": (m2,), "b2": (m2, bins), "b3": (m2,), "b4": (m2, bins)}

    @classmethod
    def identity(cls, mics: int, bins: int) -> "MlpParams":
        out = {}
        for k, shp in cls.shapes(mics, bins).items():
            out[k] = np.eye(shp[0], dtype=complex) if k[0] == "W" else np.zeros(shp, dtype=complex)
        return cls(**out)

    @classmethod
    def init(cls, mics: int, bins: int, rng: np.random.Generator, noise: float = 1e-3) -> "MlpParams":
        """Identity weights plus circular complex Gaussian noise (std ``noise``), zero biases."""
        p = cls.identity(mics, bins)
        for k in ("W1", "W2", "W3", "W4"):
            w = getattr(p, k)
            w += noise / np.sqrt(2.0) * (rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape))
        return p

    def check(self, mics: int, bins: int) -> None:
        for k, shp in self.shapes(mics, bins).items():
            a = getattr(self, k)
            if a.shape != shp:
                raise ValueError(f"{k} has shape {a.shape}, expected {shp}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{k} is not finite")

    def to_real(self) -> list:
        out = []
        for k in _NAMES:
            a = getattr(self, k)
            out += [a.real.copy(), a.imag.copy()]
        return out

    @classmethod
    def from_real(cls, arrays) -> "MlpParams":
        return cls(**{k: arrays[2 * i] + 1j * arrays[2 * i + 1] for i, k in enumerate(_NAMES)})

    @property
    def size(self) -> int:
        return sum(getattr(self, k).size for k in _NAMES)


def _act(x: ad.Complex, kind: str) -> ad.Complex:
    return x.tanh() if kind == "tanh" else x


def _forward(P: dict, X: ad.Complex, activation: str) -> ad.Complex:
    y1 = _act(X @ P["W1"] + P["b1"], activation)
    y2 = _act(y1.T @ P["W2"] + P["b2"], activation)
    y3 = (y2.T @ P["W3"] + P["b3"]).T @ P["W4"] + P["b4"]
    return y3.T


def input_scale(c: np.ndarray, gain: float) -> float:
    peak = float(np.max(np.abs(c)))
    return gain * peak if peak > 0 else 1.0


def mlp_forward(params: MlpParams, c_init: FilterSet, activation: str = "tanh",
                scale: float = 1.0) -> FilterSet:
    """Apply the network to every bin of ``c_init`` (no freezing).

    ``scale`` divides the input and multiplies the output.
    """
    bins, mics, _ = c_init.data.shape
    params.check(mics, bins)
    X = ad.Complex.const(c_init.data.reshape(bins, 2 * mics) / scale)
    P = {k: ad.Complex.const(getattr(params, k)) for k in _NAMES}
    out = _forward(P, X, activation).value * scale
    return FilterSet(c_init.grid, out.reshape(bins, mics, 2), c_init.method, c_init.snr_db)


# ---------------------------------------------------------------- losses


def _t(x):
    return x if isinstance(x, ad.Tensor) else ad.Tensor(np.asarray(x, dtype=float))


def _bin_mask(mask, bins):
    return np.ones(bins, bool) if mask is None else np.asarray(mask, bool)


def _reduce_weights(m: np.ndarray, q: int, reduction: str) -> np.ndarray:
    w = m.astype(float) if reduction == "sum" else m / (m.sum() * q)
    return w[:, None, None]


def loss_mls(z_mag, p_mag, mask=None, reduction: str = "mean") -> ad.Tensor:
    """Squared magnitude error ``(|p| - |z|)^2`` over masked bins and all directions.

    Magnitudes are shaped ``[bin, ear, direction]``. Each ear is reduced by
    mean (or sum) and the ears are added.
    """
    z_mag = _t(z_mag)
    bins, _, q = z_mag.shape
    m = _bin_mask(mask, bins)
    if not m.any():
        return ad.Tensor(0.0)
    w = _reduce_weights(m, q, reduction)
    return ad.weighted_sum(ad.square(ad.sub(p_mag, z_mag)), w)


def loss_dmls(z_mag, p_mag, df: float, mask=None, reduction: str = "mean") -> ad.Tensor:
    """MLS on forward magnitude differences ``(|x|[f+1] - |x|[f]) / df``.

    A difference is included when its lower bin is in ``mask``.
    """
    z_mag = _t(z_mag)
    bins, _, q = z_mag.shape
    m = _bin_mask(mask, bins)[:-1]
    if not m.any():
        return ad.Tensor(0.0)
    dz = ad.mul(ad.diff(z_mag, 0), 1.0 / df)
    dp = np.diff(np.asarray(p_mag, dtype=float), axis=0) * (1.0 / df)
    w = _reduce_weights(m, q, reduction)
    return ad.weighted_sum(ad.square(ad.sub(dp, dz)), w)


def _band_ild(spec, weights: np.ndarray, horiz) -> ad.Tensor:
    if not isinstance(spec, ad.Complex):
        spec = ad.Complex.const(np.asarray(spec, dtype=complex))
    s = spec.take(horiz, axis=2)
    bins, ears, q = s.shape
    power = ad.reshape(s.abs2(), (bins, ears * q))
    e = ad.reshape(ad.matmul(weights, power), (weights.shape[0], ears, q))
    if np.any(e.value <= 0):
        raise ValueError("band energy is zero (degenerate silence)")
    left = ad.log10(ad.take(e, [0], axis=1))
    right = ad.log10(ad.take(e, [1], axis=1))
    return ad.mul(ad.sub(left, right), 10.0)  # [band, 1, dir]


def loss_ild(z, p, bank, horiz=None) -> ad.Tensor:
    """Band-mean of the squared ILD difference summed over ``horiz`` directions.

    ``bank`` is a :class:`Filterbank` or a ``(bands, bins)`` weight matrix.
    """
    weights = bank.integration_weights if isinstance(bank, Filterbank) else np.asarray(bank, float)
    horiz = np.arange(np.shape(p)[2]) if horiz is None else np.asarray(horiz, dtype=int)
    ild_p = _band_ild(p, weights, horiz).value
    ild_z = _band_ild(z, weights, horiz)
    return ad.weighted_sum(ad.square(ad.sub(ild_p, ild_z)), 1.0 / weights.shape[0])


@dataclass
class LossParts:
    mls: float
    dmls: float
    ild: float
    total: float

    def row(self):
        return (self.mls, self.dmls, self.ild, self.total)


def total_loss(z, p, cfg: ImaglsConfig, bank, horiz, df: float, mask=None):
    """``w (D_MLS + lambda1 D_dMLS) + lambda2 D_ILD``; returns (Tensor, LossParts).

    ``w`` is ``cfg.mls_weight`` (1 in normal use).
    """
    if not isinstance(z, ad.Complex):
        z = ad.Complex.const(np.asarray(z, dtype=complex))
    p = np.asarray(p)
    # same smoothed-magnitude arithmetic as for z, so z == p gives exactly zero
    p_mag = np.sqrt((p.real * p.real + p.imag * p.imag) + EPS_MAG * EPS_MAG)
    z_mag = z.abs(EPS_MAG)
    d_mls = loss_mls(z_mag, p_mag, mask, cfg.reduction)
    d_dmls = loss_dmls(z_mag, p_mag, df, mask, cfg.reduction)
    d_ild = loss_ild(z, p, bank, horiz)
    total = ad.add(
        ad.mul(ad.add(d_mls, ad.mul(d_dmls, cfg.lambda1)), cfg.mls_weight),
        ad.mul(d_ild, cfg.lambda2),
    )
    parts = LossParts(float(d_mls.value), float(d_dmls.value), float(d_ild.value), float(total.value))
    return total, parts


# ---------------------------------------------------------------- training


class ImaglsProblem:
    """Fixed data of one training case and the parameter -> loss map."""

    def __init__(self, atf: TransferFunctionSet, hrtf: TransferFunctionSet, c_init: FilterSet,
                 cfg: ImaglsConfig, bank: Optional[Filterbank] = None, horiz=None):
        if atf.grid != hrtf.grid or atf.grid != c_init.grid:
            raise ValueError("frequency grids differ")
        if atf.directions != hrtf.directions:
            raise ValueError("direction grids differ")
        if c_init.mic_count != atf.channels:
            raise ValueError("filter mic count does not match the ATF")
        self.cfg = cfg
        self.grid = atf.grid
        self.V = atf.data
        self.p = hrtf.data
        self.c_init = np.asarray(c_init.data, dtype=complex)
        self.snr_db = c_init.snr_db
        self.bins, self.mics, _ = self.c_init.shape
        if bank is None:
            bank = make_filterbank(atf.grid, cfg.cutoff_hz, cfg.f_high, cfg.bands)
        self.bank = bank
        if horiz is None:
            horiz = unique_horizontal(atf.directions, cfg.horiz_count, cfg.horiz_tolerance)
        self.horiz = np.asarray(horiz, dtype=int)
        self.mask = atf.grid.bin_frequencies >= cfg.cutoff_hz
        self.scale = input_scale(self.c_init, cfg.input_gain)

    def effective(self, out: ad.Complex) -> ad.Complex:
        """Network output above the cutoff, ``c_init`` below."""
        m = self.mask.astype(float)[:, None, None]
        return out * m + ad.Complex.const(self.c_init * (1.0 - m))

    def response(self, c: ad.Complex) -> ad.Complex:
        """``z[f, ear, dir] = c[f, :, ear]^H V[f, :, dir]``."""
        return c.conj().transpose((0, 2, 1)) @ ad.Complex.const(self.V)

    def loss_of(self, c) -> tuple:
        return total_loss(self.response(c), self.p, self.cfg, self.bank, self.horiz,
                          self.grid.spacing, self.mask)

    def evaluate(self, arrays, grad: bool = True):
        """Loss parts, real-pair gradients (or None) and effective coefficients."""
        X = ad.Complex.const(self.c_init.reshape(self.bins, 2 * self.mics) / self.scale)
        with ad.Tape() as tape:
            P = {k: ad.Complex(ad.Tensor(arrays[2 * i], grad), ad.Tensor(arrays[2 * i + 1], grad))
                 for i, k in enumerate(_NAMES)}
            out = _forward(P, X, self.cfg.activation) * self.scale
            c = self.effective(out.reshape((self.bins, self.mics, 2)))
            total, parts = self.loss_of(c)
        c_val = np.where(self.mask[:, None, None], c.value, self.c_init)
        if not grad:
            return parts, None, c_val
        tape.backward(total)
        grads = []
        for k in _NAMES:
            for t in (P[k].re, P[k].im):
                grads.append(np.zeros_like(t.value) if t.grad is None else t.grad)
        return parts, grads, c_val

    def loss_of_filters(self, filters: FilterSet) -> LossParts:
        _, parts = self.loss_of(ad.Complex.const(np.asarray(filters.data, dtype=complex)))
        return parts


@dataclass
class TrainState:
    """Result of one training session.

    ``history[t]`` holds the loss parts after ``t`` Adam updates, so it has
    ``iterations + 1`` rows (row 0 is the initial network).
    """

    params: MlpParams
    adam: dict
    history: list = field(default_factory=list)
    best_iteration: int = -1
    scale: float = 1.0

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    def history_array(self) -> np.ndarray:
        return np.array([h.row() for h in self.history])

    def history_csv(self, comment: Optional[str] = None) -> str:
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "D_MLS", "D_dMLS", "D_ILD", "total"])
        for i, h in enumerate(self.history):
            w.writerow([i] + [repr(float(v)) for v in h.row()])
        return buf.getvalue()


def train_imagls(atf: TransferFunctionSet, hrtf: TransferFunctionSet, c_init: FilterSet,
                 cfg: ImaglsConfig = ImaglsConfig(), bank: Optional[Filterbank] = None,
                 horiz=None, callback=None):
    """Train the refinement network and return ``(FilterSet(iMagLS), TrainState)``.

    The returned coefficients come from the history row with the lowest total loss.
    """
    prob = ImaglsProblem(atf, hrtf, c_init, cfg, bank, horiz)
    rng = np.random.default_rng(cfg.seed)
    arrays = MlpParams.init(prob.mics, prob.bins, rng, cfg.init_noise).to_real()
    adam = ad.adam_init(arrays)
    state = TrainState(MlpParams.from_real(arrays), adam, scale=prob.scale)
    best_c, best_total = None, np.inf
    for t in range(cfg.iterations + 1):
        final = t == cfg.iterations
        try:
            parts, grads, c_val = prob.evaluate(arrays, grad=not final)
        except (FloatingPointError, ValueError) as exc:
            raise TrainingError(f"iteration {t}: {exc}") from exc
        if not np.isfinite(parts.total):
            raise TrainingError(f"iteration {t}: non-finite loss")
        state.history.append(parts)
        if parts.total < best_total:
            best_total, best_c, state.best_iteration = parts.total, c_val, t
            state.params = MlpParams.from_real(arrays)
        if callback is not None:
            callback(t, parts)
        if not final:
            arrays, adam = ad.adam_step(arrays, grads, adam, cfg.lr)
    state.adam = adam
    return FilterSet(c_init.grid, best_c, Method.iMagLS, c_init.snr_db), state


def config_dict(cfg: ImaglsConfig) -> dict:
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}

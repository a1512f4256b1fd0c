"""Analytic array transfer functions: free field, rigid sphere, spherical head."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Direction,
    DirectionGrid,
    FrequencyGrid,
    TFKind,
    TransferFunctionSet,
    unit_vectors,
)
from .special import derivative_all, legendre_all, spherical_h1_all

C0 = 343.0
CONVERGENCE_TOL = 1e-9


class ConvergenceError(ArithmeticError):
    """The scattering series did not converge at the chosen truncation order."""


def min_order(ka_max: float) -> int:
    return int(np.ceil(ka_max)) + 8


def _last_term_ratio(ka: float, order: int) -> float:
    h = spherical_h1_all(order + 1, ka)
    terms = np.abs((2 * np.arange(order + 1) + 1) / (ka**2 * derivative_all(h, ka)[: order + 1]))
    return float(terms[-1] / terms.max())


def auto_order(ka_max: float, tol: float = CONVERGENCE_TOL) -> int:
    """Smallest order >= ceil(ka_max) + 8 whose last series term is below ``tol``."""
    n = min_order(ka_max)
    if ka_max <= 0:
        return n
    while _last_term_ratio(ka_max, n) > tol:
        n += 2
    return n


@dataclass(frozen=True)
class RigidSphereArraySpec:
    radius: float
    mic_directions: DirectionGrid
    truncation_order: Optional[int] = None
    c0: float = C0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.truncation_order is not None and self.truncation_order < 1:
            raise ValueError("truncation order must be positive")

    def order_for(self, grid: FrequencyGrid) -> int:
        ka_max = 2 * np.pi * grid.nyquist / self.c0 * self.radius
        if self.truncation_order is None:
            return auto_order(ka_max)
        if self.truncation_order < min_order(ka_max):
            raise ValueError(
                f"truncation order {self.truncation_order} below ceil(ka_max) + 8 = {min_order(ka_max)}"
            )
        return self.truncation_order


@dataclass(frozen=True)
class SphericalHeadHrtfSpec:
    radius: float = 0.0875
    left_ear: Direction = Direction(90.0, 100.0)
    right_ear: Direction = Direction(90.0, 260.0)
    truncation_order: Optional[int] = None
    c0: float = C0

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("head radius must be positive")
        if tuple(self.left_ear) == tuple(self.right_ear):
            raise ValueError("ears must be distinct")


def free_field_steering(mic_positions, grid: FrequencyGrid, dirs: DirectionGrid, c0: float = C0):
    """Plane-wave steering ``exp(+i k d_m . u(Omega))`` for microphones at ``mic_positions``.

    ``u`` points from the array origin towards the source, so a microphone
    displaced towards the source receives the wave earlier (positive phase).
    """
    d = np.atleast_2d(np.asarray(mic_positions, dtype=float))
    if d.shape[1] != 3 or not np.all(np.isfinite(d)):
        raise ValueError("mic positions must be finite (M, 3) Cartesian coordinates")
    path = d @ dirs.vectors.T  # (M, Q)
    k = grid.wavenumbers(c0)
    data = np.exp(1j * k[:, None, None] * path[None, :, :])
    return TransferFunctionSet(grid, dirs, data, TFKind.ATF)


def sphere_coefficients(ka: np.ndarray, order: int, check: bool = True) -> np.ndarray:
    """Modal coefficients ``i^(n-1) / ((ka)^2 h2_n'(ka))`` shaped (len(ka), order + 1).

    ``h2_n`` is the spherical Hankel function of the second kind, the outgoing
    wave for the ``exp(+i k d.u)`` steering convention used throughout. ``ka == 0``
    rows hold the incident-field limit (1 for n = 0, zero otherwise).
    """
    ka = np.asarray(ka, dtype=float)
    out = np.zeros((ka.size, order + 1), dtype=complex)
    pos = ka > 0
    out[~pos, 0] = 1.0
    if np.any(pos):
        x = ka[pos]
        hp = derivative_all(spherical_h1_all(order + 1, x), x)[: order + 1].conj()  # (n, f)
        n = np.arange(order + 1)[:, None]
        b = (1j ** (n - 1)) / (x[None, :] ** 2 * hp)
        if check:
            mag = np.abs(b) * (2 * n + 1)
            ratio = mag[-1] / mag.max(axis=0)
            if np.any(ratio > CONVERGENCE_TOL):
                bad = np.argmax(ratio)
                raise ConvergenceError(
                    f"series not converged at ka={x[bad]:.4g}: last-term ratio {ratio[bad]:.2e} "
                    f"with order {order}"
                )
        out[pos] = b.T
    return out


def rigid_sphere_pressure(ka, cos_angle, order: int, check: bool = True) -> np.ndarray:
    """Surface pressure on a rigid sphere for a unit plane wave.

    ``cos_angle`` is the cosine of the angle between the surface point and the
    source direction. Returns shape ``(len(ka), *cos_angle.shape)``.
    """
    coeffs = sphere_coefficients(ka, order, check)
    t = np.asarray(cos_angle, dtype=float)
    legendre = legendre_all(order, t).reshape(order + 1, -1)
    scale = (2 * np.arange(order + 1) + 1)[:, None]
    p = coeffs @ (scale * legendre)
    return p.reshape((coeffs.shape[0],) + t.shape)


def rigid_sphere_steering(spec: RigidSphereArraySpec, grid: FrequencyGrid, dirs: DirectionGrid):
    order = spec.order_for(grid)
    ka = grid.wavenumbers(spec.c0) * spec.radius
    cosang = np.clip(spec.mic_directions.vectors @ dirs.vectors.T, -1.0, 1.0)
    data = rigid_sphere_pressure(ka, cosang, order)
    return TransferFunctionSet(grid, dirs, data, TFKind.ATF)


def spherical_head_hrtf(spec: SphericalHeadHrtfSpec, grid: FrequencyGrid, dirs: DirectionGrid):
    ears = DirectionGrid(
        [spec.left_ear[0], spec.right_ear[0]], [spec.left_ear[1], spec.right_ear[1]]
    )
    sphere = RigidSphereArraySpec(spec.radius, ears, spec.truncation_order, spec.c0)
    atf = rigid_sphere_steering(sphere, grid, dirs)
    return TransferFunctionSet(grid, dirs, atf.data, TFKind.HRTF)


def circular_layout(count: int, span_deg: float = 360.0) -> DirectionGrid:
    """Horizontal microphone directions at equal spacing starting at azimuth 0.

    A full circle (``span_deg=360``) uses ``360/count`` spacing; a partial arc
    places the last microphone at ``span_deg``.
    """
    if count < 1:
        raise ValueError("count must be positive")
    if span_deg >= 360.0:
        az = np.arange(count) * 360.0 / count
    else:
        az = np.linspace(0.0, span_deg, count)
    return DirectionGrid(np.full(count, 90.0), az)


def semicircular_layout(count: int = 6) -> DirectionGrid:
    return circular_layout(count, 180.0)


def positions_on_sphere(directions: DirectionGrid, radius: float) -> np.ndarray:
    return radius * unit_vectors(directions.elevation, directions.azimuth)

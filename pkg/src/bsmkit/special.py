"""Spherical Bessel/Neumann/Hankel functions and Legendre polynomials.

All routines return every order ``0..n_max`` at once, shaped ``(n_max + 1, *x.shape)``,
because the scattering series consumes whole order ranges.
"""

from __future__ import annotations

import numpy as np

_RESCALE = 1e100


def _check_positive(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("argument must be positive")
    return x


def spherical_jn_all(n_max: int, x) -> np.ndarray:
    """j_0..j_{n_max} by Miller's downward recurrence.

    The unnormalised sequence is scaled with the sum rule
    ``sum (2n+1) j_n(x)**2 = 1`` and the sign is taken from the closed forms of
    j_0 and j_1. ``x = 0`` gives the limit values (1 for n = 0, else 0).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("argument must be nonnegative")
    shape = x.shape
    n_req = n_max
    n_max = max(n_max, 1)
    xf = x.ravel()
    out = np.zeros((n_max + 1, xf.size))
    zero = xf == 0
    out[0, zero] = 1.0
    xs = xf[~zero]
    if xs.size:
        out[:, ~zero] = _miller(n_max, xs)
    return out[: n_req + 1].reshape((n_req + 1,) + shape)


def _miller(n_max: int, xs: np.ndarray) -> np.ndarray:
    top = int(max(n_max, np.ceil(xs.max()))) + 20 + int(np.sqrt(40.0 * max(n_max, xs.max(), 1.0)))
    f_next = np.zeros_like(xs)
    f_cur = np.ones_like(xs)
    vals = np.zeros((n_max + 1, xs.size))
    norm = np.zeros_like(xs)
    for n in range(top, -1, -1):
        if n <= n_max:
            vals[n] = f_cur
        norm += (2 * n + 1) * f_cur**2
        if n == 0:
            break
        f_prev = (2 * n + 1) / xs * f_cur - f_next
        f_next, f_cur = f_cur, f_prev
        big = np.abs(f_cur) > _RESCALE
        if np.any(big):
            s = np.where(big, 1.0 / _RESCALE, 1.0)
            f_cur = f_cur * s
            f_next = f_next * s
            vals *= s
            norm *= s * s
    j0 = np.sin(xs) / xs
    j1 = np.sin(xs) / xs**2 - np.cos(xs) / xs
    # sign from whichever closed form is better conditioned
    use0 = np.abs(j0) >= np.abs(j1)
    sign = np.where(use0, np.sign(j0) * np.sign(vals[0]), np.sign(j1) * np.sign(vals[1]))
    return vals * (sign / np.sqrt(norm))


def spherical_yn_all(n_max: int, x) -> np.ndarray:
    """y_0..y_{n_max} by upward recurrence (stable for the Neumann functions)."""
    x = _check_positive(x)
    out = np.empty((n_max + 1,) + x.shape)
    out[0] = -np.cos(x) / x
    if n_max >= 1:
        out[1] = -np.cos(x) / x**2 - np.sin(x) / x
    for n in range(1, n_max):
        out[n + 1] = (2 * n + 1) / x * out[n] - out[n - 1]
    return out


def spherical_h1_all(n_max: int, x) -> np.ndarray:
    """Spherical Hankel functions of the first kind, h_n = j_n + i y_n."""
    x = _check_positive(x)
    return spherical_jn_all(n_max, x) + 1j * spherical_yn_all(n_max, x)


def derivative_all(values: np.ndarray, x, extra=None) -> np.ndarray:
    """Derivatives from ``f_n' = f_{n-1} - (n+1)/x f_n`` (and ``f_0' = -f_1``).

    ``values`` holds orders 0..n_max; ``extra`` is order n_max + 1 which is
    needed only for ``n_max = 0``.
    """
    x = _check_positive(x)
    n_max = values.shape[0] - 1
    out = np.empty_like(values)
    if n_max == 0:
        if extra is None:
            raise ValueError("order 1 values are needed to differentiate order 0")
        out[0] = -extra
        return out
    out[0] = -values[1]
    n = np.arange(1, n_max + 1).reshape((-1,) + (1,) * x.ndim)
    out[1:] = values[:-1] - (n + 1) / x * values[1:]
    return out


def spherical_jn(n: int, x):
    return spherical_jn_all(n, x)[n]


def spherical_yn(n: int, x):
    return spherical_yn_all(n, x)[n]


def spherical_h1(n: int, x):
    return spherical_h1_all(n, x)[n]


def spherical_jn_prime(n: int, x):
    return derivative_all(spherical_jn_all(n + 1, x), x)[n]


def spherical_yn_prime(n: int, x):
    return derivative_all(spherical_yn_all(n + 1, x), x)[n]


def spherical_h1_prime(n: int, x):
    return derivative_all(spherical_h1_all(n + 1, x), x)[n]


def legendre_all(n_max: int, t) -> np.ndarray:
    """P_0..P_{n_max} via Bonnet's recurrence."""
    t = np.asarray(t, dtype=float)
    out = np.empty((n_max + 1,) + t.shape)
    out[0] = 1.0
    if n_max >= 1:
        out[1] = t
    for n in range(1, n_max):
        out[n + 1] = ((2 * n + 1) * t * out[n] - n * out[n - 1]) / (n + 1)
    return out

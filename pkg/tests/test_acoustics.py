import math

import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from bsmkit.acoustics import (
    ConvergenceError,
    RigidSphereArraySpec,
    SphericalHeadHrtfSpec,
    auto_order,
    circular_layout,
    free_field_steering,
    min_order,
    rigid_sphere_pressure,
    rigid_sphere_steering,
    semicircular_layout,
    spherical_head_hrtf,
)
from bsmkit.core import Direction, DirectionGrid, FrequencyGrid, ring_grid, spiral_grid
from bsmkit.special import (
    legendre_all,
    spherical_h1,
    spherical_h1_all,
    spherical_jn,
    spherical_jn_all,
    spherical_jn_prime,
    spherical_yn,
    spherical_yn_all,
    spherical_yn_prime,
)

# ---------------------------------------------------------------- special functions


def test_closed_forms():
    assert spherical_jn(0, 1.0) == pytest.approx(0.8414709848078965, abs=1e-15)
    assert spherical_yn(0, 2.0) == pytest.approx(0.2080734182735712, abs=1e-15)


def test_j5_power_series():
    x = 0.5
    series = sum(
        (-1) ** k * x ** (2 * k + 5) / (2**k * math.factorial(k) * math.prod(range(11 + 2 * k, 0, -2)))
        for k in range(40)
    )
    assert spherical_jn(5, x) == pytest.approx(series, rel=1e-12, abs=1e-18)


@pytest.mark.parametrize("x", [0.1, 1.0, 10.0, 50.0, 137.0])
def test_against_scipy(x):
    n = np.arange(0, 60)
    j = spherical_jn_all(59, x)
    y = spherical_yn_all(59, x)
    ref_j = sps.spherical_jn(n, x)
    ref_y = sps.spherical_yn(n, x)
    assert np.allclose(j, ref_j, rtol=1e-10, atol=1e-300)
    finite = np.isfinite(ref_y)
    assert np.allclose(y[finite], ref_y[finite], rtol=1e-10)
    assert np.allclose(spherical_jn_prime(3, x), sps.spherical_jn(3, x, derivative=True), rtol=1e-10, atol=1e-15)
    assert np.allclose(spherical_yn_prime(3, x), sps.spherical_yn(3, x, derivative=True), rtol=1e-10)
    assert np.allclose(spherical_h1(4, x), ref_j[4] + 1j * ref_y[4], rtol=1e-10)


@pytest.mark.parametrize("x", [0.1, 1.0, 10.0, 50.0])
def test_recurrence_residual(x):
    for vals in (spherical_jn_all(40, x), spherical_yn_all(40, x), spherical_h1_all(40, x)):
        for n in range(1, 40):
            lhs = vals[n - 1] + vals[n + 1]
            rhs = (2 * n + 1) / x * vals[n]
            assert abs(lhs - rhs) < 1e-10 * max(abs(vals[n]), 1.0)


def test_hankel_domain():
    with pytest.raises(ValueError):
        spherical_yn(0, 0.0)
    with pytest.raises(ValueError):
        spherical_h1(2, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1))
def test_legendre(t):
    P = legendre_all(20, t)
    assert np.allclose(legendre_all(20, 1.0), 1.0)
    for n in range(1, 20):
        assert abs((n + 1) * P[n + 1] - (2 * n + 1) * t * P[n] + n * P[n - 1]) < 1e-12
    assert np.allclose(P, [sps.eval_legendre(n, t) for n in range(21)], atol=1e-12)


# ---------------------------------------------------------------- free field


def test_free_field_origin_and_dc():
    g = FrequencyGrid(48000, 64)
    dirs = spiral_grid(30)
    v = free_field_steering([[0, 0, 0], [0.05, 0.01, -0.02]], g, dirs)
    assert np.all(v.data[:, 0] == 1)
    assert np.all(v.data[0] == 1)


def test_free_field_hand_phase():
    g = FrequencyGrid(686, 2)  # bin 1 is 343 Hz
    v = free_field_steering([[1, 0, 0]], g, DirectionGrid([90], [0]), c0=343.0)
    assert v.data[1, 0, 0] == pytest.approx(np.exp(2j * np.pi), abs=1e-12)
    g2 = FrequencyGrid(48000, 16)
    v2 = free_field_steering([[0.3, 0, 0]], g2, DirectionGrid([90], [0]))
    k = g2.wavenumbers()
    assert np.allclose(v2.data[:, 0, 0], np.exp(1j * k * 0.3))


def test_free_field_conjugate_symmetry(rng):
    g = FrequencyGrid(48000, 32)
    dirs = spiral_grid(20)
    d = rng.standard_normal((3, 3)) * 0.05
    assert np.allclose(free_field_steering(d, g, dirs).data, free_field_steering(-d, g, dirs).data.conj())


# ---------------------------------------------------------------- rigid sphere


def test_truncation_rule():
    g = FrequencyGrid(48000, 1024)
    ka_max = 2 * np.pi * 24000 / 343 * 0.1
    spec = RigidSphereArraySpec(0.1, semicircular_layout(6))
    assert spec.order_for(g) >= min_order(ka_max) == math.ceil(ka_max) + 8
    with pytest.raises(ValueError):
        RigidSphereArraySpec(0.1, semicircular_layout(6), truncation_order=10).order_for(g)
    with pytest.raises(ValueError):
        RigidSphereArraySpec(0.0, semicircular_layout(6))


def test_convergence_check_fires():
    with pytest.raises(ConvergenceError):
        rigid_sphere_pressure(np.array([40.0]), np.array([1.0]), 45)


def test_vanishing_sphere():
    g = FrequencyGrid(48000, 1024)
    atf = rigid_sphere_steering(RigidSphereArraySpec(0.001, circular_layout(4)), g, spiral_grid(50))
    assert np.allclose(np.abs(atf.data[1]), 1.0, atol=1e-3)
    assert np.all(atf.data[0] == 1)


def test_bright_spot_and_high_order_oracle():
    order = auto_order(2.0)
    front, back = rigid_sphere_pressure(np.array([2.0]), np.array([1.0, -1.0]), order)[0]
    assert abs(front) > abs(back)
    ref = rigid_sphere_pressure(np.array([2.0]), np.array([1.0, -1.0]), order + 32, check=False)[0]
    assert np.allclose([front, back], ref, atol=1e-8)


def test_sphere_low_ka_matches_plane_wave_to_first_order():
    ka = np.array([1e-3])
    p = rigid_sphere_pressure(ka, np.array([0.3]), 10)[0, 0]
    # rigid sphere: p ~ 1 + 1.5 i ka cos(theta) for small ka
    assert p == pytest.approx(1 + 1.5j * 1e-3 * 0.3, abs=1e-5)


def test_rotational_symmetry():
    g = FrequencyGrid(48000, 64)
    dirs = spiral_grid(40)
    mics = circular_layout(5)
    rot = 37.0
    a = rigid_sphere_steering(RigidSphereArraySpec(0.1, mics), g, dirs)
    b = rigid_sphere_steering(
        RigidSphereArraySpec(0.1, DirectionGrid(mics.elevation, mics.azimuth + rot)),
        g,
        DirectionGrid(dirs.elevation, dirs.azimuth + rot),
    )
    assert np.allclose(a.data, b.data, atol=1e-12)


def test_generated_sets_are_finite():
    g = FrequencyGrid(48000, 256)
    atf = rigid_sphere_steering(RigidSphereArraySpec(0.1, semicircular_layout(6)), g, spiral_grid(100))
    assert np.all(np.isfinite(atf.data))


# ---------------------------------------------------------------- spherical head


def test_head_ipsilateral_louder():
    g = FrequencyGrid(48000, 256)
    h = spherical_head_hrtf(SphericalHeadHrtfSpec(), g, DirectionGrid([90], [100]))
    above = g.bin_frequencies > 1000
    assert np.all(np.abs(h.data[above, 0, 0]) >= np.abs(h.data[above, 1, 0]))


def test_head_median_plane_symmetry():
    g = FrequencyGrid(48000, 256)
    h = spherical_head_hrtf(SphericalHeadHrtfSpec(), g, DirectionGrid([90, 45], [0, 180]))
    assert np.allclose(np.abs(h.data[:, 0]), np.abs(h.data[:, 1]), atol=1e-9)


def test_swapping_ears_swaps_channels():
    g = FrequencyGrid(48000, 64)
    dirs = ring_grid(15)
    a = spherical_head_hrtf(SphericalHeadHrtfSpec(), g, dirs)
    b = spherical_head_hrtf(SphericalHeadHrtfSpec(left_ear=Direction(90, 260), right_ear=Direction(90, 100)), g, dirs)
    assert np.array_equal(a.data[:, 0], b.data[:, 1]) and np.array_equal(a.data[:, 1], b.data[:, 0])
    with pytest.raises(ValueError):
        SphericalHeadHrtfSpec(left_ear=Direction(90, 100), right_ear=Direction(90, 100))


def test_layouts():
    assert np.allclose(semicircular_layout(6).azimuth, [0, 36, 72, 108, 144, 180])
    assert np.allclose(circular_layout(12).azimuth, np.arange(12) * 30)

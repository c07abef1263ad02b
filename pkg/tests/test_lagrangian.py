import math

import numpy as np
import pytest

from lagorbits.geometry import euclidean
from lagorbits.lagrangian import (
    ConvexityError,
    Lagrangian,
    QuadraticCap,
    e0_estimate,
    electromagnetic,
    estimate_growth_constants,
    quad_cap,
)


def test_pure_kinetic_values(kinetic_plane):
    x, v = np.zeros(2), np.array([1.0, 0.0])
    assert kinetic_plane.eval_L(x, v) == pytest.approx(0.5)
    assert np.allclose(kinetic_plane.eval_Lv(x, v), [1, 0])
    assert np.allclose(kinetic_plane.eval_Lx(x, v), [0, 0])
    assert np.allclose(kinetic_plane.eval_Lvv(x, v), np.eye(2))


def test_magnetic_one_form(magplane):
    assert magplane.eval_L([0.0, 1.0], [1.0, 0.0]) == pytest.approx(0.0)


def test_potential_at_rest(potential_torus):
    assert potential_torus.eval_L([0.0, 0.0], [0.0, 0.0]) == pytest.approx(-1.0)
    assert potential_torus.energy([0.0, 0.0], [0.0, 0.0]) == pytest.approx(1.0)


def test_energy(magplane, potential_torus):
    rng = np.random.default_rng(0)
    v = rng.normal(size=(20, 2))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    assert np.allclose(magplane.energy(rng.normal(size=(20, 2)), v), 0.5)
    x = rng.random((20, 2))
    assert np.allclose(potential_torus.energy(x, 0 * x), np.cos(2 * np.pi * x[:, 0]))


def test_derivatives_match_finite_differences(kinetic_cylinder, magplane, potential_torus):
    rng = np.random.default_rng(1)
    h = 1e-6
    for L in (kinetic_cylinder, magplane, potential_torus):
        x, v = rng.normal(size=2) * 0.5, rng.normal(size=2)
        e = np.eye(2)
        fd_v = [(L.eval_L(x, v + h * e[i]) - L.eval_L(x, v - h * e[i])) / (2 * h) for i in range(2)]
        fd_x = [(L.eval_L(x + h * e[i], v) - L.eval_L(x - h * e[i], v)) / (2 * h) for i in range(2)]
        assert np.allclose(L.eval_Lv(x, v), fd_v, atol=1e-7)
        assert np.allclose(L.eval_Lx(x, v), fd_x, atol=1e-7)


def test_e0(kinetic_plane, potential_torus):
    assert e0_estimate(kinetic_plane, [[-1, 1], [-1, 1]]) == 0.0
    assert e0_estimate(potential_torus, [[0, 1], [0, 1]]) == pytest.approx(1.0, abs=1e-6)
    L = electromagnetic(euclidean(), V="-(x^2 + y^2)")
    assert e0_estimate(L, [[-1, 1], [-1, 1]]) == pytest.approx(2.0, abs=1e-9)


def test_growth_constants_pure_kinetic(kinetic_plane):
    gc = estimate_growth_constants(kinetic_plane, [[-1, 1], [-1, 1]], vmax=3.2)
    assert (gc.A1, gc.A2, gc.A3, gc.A4, gc.A5) == pytest.approx((1.0, 0.5, 0.0, 0.5, 1.0))
    assert gc.a(1.0) == pytest.approx(0.5)


def test_growth_constants_bound_magnetic(magplane):
    region = [[-2, 2], [-2, 2]]
    gc = estimate_growth_constants(magplane, region, vmax=4.0)
    rng = np.random.default_rng(2)
    x = rng.uniform(-2, 2, (2000, 2))
    v = rng.normal(size=(2000, 2)) * 3
    s = np.linalg.norm(v, axis=1)
    Lx = magplane.eval_L(x, v)
    assert np.all(Lx >= gc.A2 * s**2 - gc.A3 - 1e-12)
    assert np.all(Lx <= gc.A4 * (1 + s**2) + 1e-12)
    # sup |theta| on the box is sqrt(2): the A5 bound is at least 1 + sqrt 2 on the unit sphere of speeds
    assert gc.theta_sup == pytest.approx(math.sqrt(2), rel=1e-9)


def test_quad_cap_radius_and_agreement(magplane, kinetic_plane):
    capped = quad_cap(magplane, 0.5)
    assert capped.cap.radius == pytest.approx(2 * math.sqrt(3))
    assert quad_cap(kinetic_plane, 0.0).cap.radius == pytest.approx(2 * math.sqrt(2))
    rng = np.random.default_rng(3)
    x = rng.uniform(-2, 2, (500, 2))
    v = rng.normal(size=(500, 2))
    v *= (rng.random(500) * capped.cap.radius / np.linalg.norm(v, axis=1))[:, None]
    assert np.array_equal(capped.eval_L(x, v), magplane.eval_L(x, v))
    assert quad_cap(capped, 0.5) is capped


def test_quad_cap_is_quadratic_at_infinity(magplane):
    capped = quad_cap(magplane, 0.5)
    x = np.array([1.0, -0.5])
    v = np.array([0.6, 0.8])
    for lam in (50.0, 500.0):
        assert capped.eval_L(x, lam * v) == pytest.approx(0.5 * lam**2)


def test_quad_cap_convexity_search(magplane):
    region = [[-2, 2], [-2, 2]]
    with pytest.raises(ConvexityError):
        estimate_growth_constants(quad_cap(magplane, 0.5), region, vmax=10.0, n_points=64)
    capped = quad_cap(magplane, 0.5, region, check_convexity=True)
    assert capped.cap.radius > 2 * math.sqrt(3)
    gc = estimate_growth_constants(capped, region, vmax=1.5 * capped.cap.radius * 1.25, n_points=64)
    assert gc.A1 > 0


def test_cap_validation():
    with pytest.raises(ValueError):
        QuadraticCap(0.0, 1.0)


def test_non_finite_input_rejected(kinetic_plane):
    with pytest.raises(ValueError):
        kinetic_plane.eval_L([np.nan, 0.0], [0.0, 0.0])

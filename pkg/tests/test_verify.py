import math

import numpy as np
import pytest

from conftest import cyclotron, great_circle, random_loop
from lagorbits.loopspace import Loop
from lagorbits.verify import certify, convergence_order, el_residual, energy_deviation, shoot, velocities


def test_velocities_are_fourth_order(plane):
    errs = []
    for N in (32, 64):
        lp = cyclotron(plane, N)
        s = np.arange(N) / N
        exact = np.stack([-np.sin(2 * np.pi * s), -np.cos(2 * np.pi * s)], -1)
        errs.append(np.abs(velocities(lp) - exact).max())
    assert errs[0] / errs[1] == pytest.approx(16, rel=0.1)


def test_el_residual_oracles(kinetic_torus, torus, magplane, plane):
    geo = Loop.from_function(torus, lambda s: np.stack([s, 0 * s], -1), 1.0, 32, (1, 0))
    assert el_residual(kinetic_torus, geo) < 1e-8
    assert el_residual(magplane, cyclotron(plane, 256)) < 1e-6
    rnd = random_loop(plane, np.random.default_rng(0), N=64)
    assert el_residual(magplane, rnd) > 0.01


def test_energy_deviation(magplane, plane, potential_torus, torus):
    assert energy_deviation(magplane, cyclotron(plane, 512), 0.5) < 1e-8
    x0 = np.array([0.2, 0.4])
    c = Loop.constant(torus, x0, 1.0, 16)
    assert energy_deviation(potential_torus, c, 0.3) == pytest.approx(abs(0.3 - math.cos(2 * math.pi * 0.2)))


def test_shoot_cyclotron(magplane):
    rep = shoot(magplane, [1.0, 0.0], [0.0, -1.0], 2 * math.pi)
    assert rep.closure < 1e-9
    assert rep.energy_drift < 1e-10
    assert not rep.diverged


def test_shoot_torus_geodesic(kinetic_torus):
    rep = shoot(kinetic_torus, [0.1, 0.2], [1.0, 0.0], 1.0, offset=[1.0, 0.0])
    assert rep.closure < 1e-12


def test_shoot_sphere_great_circle(kinetic_sphere):
    rep = shoot(kinetic_sphere, [1.0, 0, 0], [0, 1.0, 0], 2 * math.pi)
    assert rep.closure < 1e-9


def test_shoot_records_trajectory(magplane):
    rep = shoot(magplane, [1.0, 0.0], [0.0, -1.0], 2 * math.pi, steps=1024, record=8)
    assert rep.trajectory.shape == (8, 2)
    assert np.allclose(np.linalg.norm(rep.trajectory, axis=1), 1.0, atol=1e-9)
    with pytest.raises(ValueError):
        shoot(magplane, [1.0, 0.0], [0.0, -1.0], 1.0, steps=100, record=7)


def test_convergence_order(magplane):
    assert 3.5 <= convergence_order(magplane, [1.0, 0.0], [0.0, -1.0], 2 * math.pi) <= 4.5


def test_certificate_pass_and_fail(magplane, plane, kinetic_sphere, sphere):
    # midpoint quadrature error is 1.6e-4 at N = 256 and 3.9e-5 at N = 512
    cert = certify(magplane, 0.5, cyclotron(plane, 512), "mountain_pass")
    assert cert.passed and cert.status == "PASS"
    assert cert.action == pytest.approx(math.pi, abs=1e-4)
    gc = certify(kinetic_sphere, 0.5, great_circle(sphere, 256), "sweepout")
    assert gc.passed and gc.action == pytest.approx(2 * math.pi, abs=1e-3)
    bad = certify(magplane, 0.5, random_loop(plane, np.random.default_rng(1), N=64), "mountain_pass")
    assert not bad.passed and "el_residual" in bad.failures
    d = cert.to_dict()
    assert d["status"] == "PASS" and d["tolerances"]["closure_err"] == 1e-3


def test_certificate_requires_positive_action(magplane, plane):
    big = cyclotron(plane, 64, radius=3.0)
    cert = certify(magplane, 0.5, big, "mountain_pass", tolerances={"el_residual": 1e9, "energy_dev": 1e9, "closure_err": 1e9})
    assert cert.failures == ["action"]
    with pytest.raises(ValueError):
        certify(magplane, 0.5, big, "other")

import numpy as np
import pytest

from conftest import random_loop
from lagorbits.loopspace import Loop, action
from lagorbits.shrink import (
    ConfinementError,
    ExpressionProfile,
    RadialProfile,
    ShrinkError,
    ShrinkMap,
    build_radial_shrink,
    pushback,
    sample_collar,
    verify_shrink_inequality,
)


@pytest.fixture(scope="module")
def shrink(cylinder):
    return build_radial_shrink(cylinder, 1.0, 2.0, 4.0, 0.5)


def test_profile_construction():
    f = RadialProfile(1.0, 2.0, 0.5)
    assert f(0.5) == 0.5
    r = np.linspace(0, 10, 5001)
    d = f.derivative(r)
    assert np.all(d > 0) and np.all(d <= 1)
    # f(r1) = r1 - (1 - s)(r1 - r0)/2, then slope s
    assert f(4.0) == pytest.approx(1.75 + 0.5 * 2.0)
    h = 1e-6
    rr = np.linspace(0.1, 5, 50)
    assert np.allclose((f(rr + h) - f(rr - h)) / (2 * h), f.derivative(rr), atol=1e-8)


def test_collar_width(shrink):
    assert shrink.epsilon == pytest.approx(4.0 - 2.75)
    assert shrink.epsilon > 0
    assert shrink.K0_radius == pytest.approx(2.75)


def test_identity_zone(shrink):
    x = np.array([[0.5, 1.0], [-1.0, 3.0]])
    assert np.array_equal(shrink.phi(x), x)
    assert np.array_equal(shrink.dphi(x), np.broadcast_to(np.eye(2), (2, 2, 2)))


def test_dphi_matches_finite_differences(shrink):
    rng = np.random.default_rng(0)
    x = np.column_stack([rng.uniform(-4, 4, 20), rng.uniform(0, 6, 20)])
    h = 1e-6
    J = shrink.dphi(x)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (shrink.phi(x + e) - shrink.phi(x - e)) / (2 * h)
        assert np.allclose(J[:, :, j], fd, atol=1e-7)


def test_inequality_holds_on_warped_cylinder(shrink, kinetic_cylinder):
    rep = verify_shrink_inequality(shrink, kinetic_cylinder, n=10_000, rng=1)
    assert rep.passed and rep.n_violations == 0 and rep.n_samples == 10_000


def test_inequality_fails_for_magnetic_plane(plane, magplane):
    s = build_radial_shrink(plane, 1.0, 2.0, 4.0, 0.5, radial_axes=(0, 1))
    rep = verify_shrink_inequality(s, magplane, n=10_000, rng=1)
    assert not rep.passed and rep.n_violations > 0 and rep.worst_x is not None


def test_identity_zone_samples_are_equalities(shrink, kinetic_cylinder):
    x = np.column_stack([np.linspace(-1, 1, 50), np.linspace(0, 6, 50)])
    v = np.random.default_rng(0).normal(size=(50, 2))
    rep = verify_shrink_inequality(shrink, kinetic_cylinder, samples=(x, v))
    assert rep.max_violation == 0.0


def test_samples_outside_K_rejected(shrink, kinetic_cylinder):
    with pytest.raises(ConfinementError):
        verify_shrink_inequality(shrink, kinetic_cylinder, samples=(np.array([[5.0, 0.0]]), np.array([[1.0, 0.0]])))


def test_pushback(shrink, kinetic_cylinder, cylinder):
    rng = np.random.default_rng(3)
    inside = Loop.from_function(cylinder, lambda s: np.stack([0.5 * np.sin(2 * np.pi * s), 2 * np.pi * s], -1), 1.0, 32, (1,))
    assert np.array_equal(pushback(shrink, inside).samples, inside.samples)
    for _ in range(100):
        lp = random_loop(cylinder, rng, N=32, amp=1.0, winding=(int(rng.integers(-1, 2)),))
        lp = lp.replace(samples=lp.samples + np.array([rng.uniform(-2.5, 2.5), 0.0]))
        if not np.all(shrink.in_K(lp.samples)):
            continue
        back = pushback(shrink, lp)
        assert back.T == lp.T and back.winding == lp.winding
        assert np.all(shrink.in_K0(back.samples))
        assert action(kinetic_cylinder, 0.5, back) <= action(kinetic_cylinder, 0.5, lp) + 1e-12


def test_collar_sampler(shrink, cylinder):
    x, v = sample_collar(shrink, cylinder, 1000, 2.0, rng=0)
    assert np.all(shrink.in_K(x))
    assert np.all(np.sqrt(np.einsum("ni,nij,nj->n", v, cylinder.metric(x), v)) <= 2.0 + 1e-12)


def test_expression_profile(cylinder, kinetic_cylinder):
    prof = ExpressionProfile("r - 0.25*r^2/(1 + r)", check_to=4.0)
    s = ShrinkMap(prof, 4.0, (0,))
    assert s.epsilon > 0
    assert verify_shrink_inequality(s, kinetic_cylinder, n=2000, rng=0).passed
    with pytest.raises(ShrinkError):
        ExpressionProfile("2*r")


def test_bad_radii(cylinder, torus):
    with pytest.raises(ShrinkError):
        build_radial_shrink(cylinder, 2.0, 1.0, 4.0)
    with pytest.raises(ShrinkError):
        build_radial_shrink(torus, 1.0, 2.0, 3.0)

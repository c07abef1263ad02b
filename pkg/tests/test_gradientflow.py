import math

import numpy as np
import pytest
from scipy import integrate

from conftest import cyclotron, random_loop
from lagorbits.gradientflow import (
    FlowConfig,
    FlowError,
    PSRecord,
    evolve,
    field,
    optimal_period,
    polish,
    ps_classify,
    rho,
)
from lagorbits.loopspace import Loop, LoopMetric, action, gradient, homotopy_class, length


def geodesic(torus, N=32):
    return Loop.from_function(torus, lambda s: np.stack([s, 0 * s + 0.3], -1), 1.0, N, (1, 0))


def test_config_validation():
    with pytest.raises(FlowError):
        FlowConfig(kind="other")
    with pytest.raises(FlowError):
        FlowConfig(kind="truncated", cutoff_low=1.0, cutoff_high=0.5)
    with pytest.raises(FlowError):
        FlowConfig.truncated_at(0.0)
    cfg = FlowConfig.truncated_at(4.0, tau=2.0)
    assert (cfg.cutoff_low, cfg.cutoff_high) == (1.0, 2.0)


def test_rho_profile():
    cfg = FlowConfig.truncated_at(4.0, tau=2.0)
    assert rho(cfg, 0.5) == 0.0
    assert rho(cfg, 1.5) == pytest.approx(1.0)
    assert rho(cfg, 3.0) == 2.0
    assert rho(FlowConfig(), -5.0) == 1.0


def test_field_vanishes_at_critical_point(kinetic_torus, torus):
    V = field(FlowConfig(), kinetic_torus, 0.5, geodesic(torus))
    assert np.abs(V.xi).max() < 1e-10 and abs(V.alpha) < 1e-10


def test_rescaled_field_is_bounded(magplane, kinetic_cylinder):
    rng = np.random.default_rng(0)
    for L in (magplane, kinetic_cylinder):
        for _ in range(50):
            lp = random_loop(L.manifold, rng, N=24, amp=2.0)
            V = field(FlowConfig(), L, 0.5, lp)
            assert LoopMetric(lp).norm(V) < 1.0


def test_truncated_field_vanishes_below_cutoff(magplane, plane):
    lp = cyclotron(plane, 64)
    cfg = FlowConfig.truncated_at(100.0)
    assert action(magplane, 0.5, lp) < cfg.cutoff_low
    V = field(cfg, magplane, 0.5, lp)
    assert not np.any(V.xi) and V.alpha == 0.0


def test_start_at_critical_point(kinetic_torus, torus):
    lp = geodesic(torus)
    out, rec = evolve(FlowConfig(), kinetic_torus, 0.5, lp, 1.0)
    assert rec.verdict == "converged"
    assert np.abs(out.samples - lp.samples).max() < 1e-10


def test_torus_flow_converges_to_geodesic(kinetic_torus, torus):
    lp = random_loop(torus, np.random.default_rng(3), N=32, winding=(1, 0))
    cfg = FlowConfig(gradient_tol=1e-8)
    out, rec = evolve(cfg, kinetic_torus, 0.5, lp, 200.0)
    assert rec.verdict == "converged"
    assert rec.grad_norms[-1] < 1e-7
    assert rec.is_monotone()
    assert homotopy_class(out) == (1, 0)
    assert out.T == pytest.approx(1.0, abs=1e-6)
    assert length(out) == pytest.approx(1.0, abs=1e-6)


def test_decrease_identity(kinetic_torus, torus):
    lp = random_loop(torus, np.random.default_rng(0), N=32, winding=(1, 0))
    _, rec = evolve(FlowConfig(step=0.01, max_step=0.01), kinetic_torus, 0.5, lp, 1.0)
    drop = rec.actions[0] - rec.actions[-1]
    quad = integrate.simpson(np.array(rec.rates), x=np.array(rec.times))
    assert drop == pytest.approx(quad, rel=1e-6)


def test_truncated_flow_freezes_low_loops(magplane, plane):
    lp = cyclotron(plane, 32, radius=3.0)
    out, rec = evolve(FlowConfig.truncated_at(1.0), magplane, 0.5, lp, 1.0)
    assert np.array_equal(out.samples, lp.samples)
    assert rec.verdict == "budget"


def test_escape_verdict(kinetic_plane, plane):
    lp = Loop.from_function(plane, lambda s: np.stack([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)], -1), 1.0, 32)
    out, rec = evolve(FlowConfig(box=[[-0.5, 0.5], [-0.5, 0.5]]), kinetic_plane, 0.5, lp, 1.0)
    assert rec.verdict == "escaped"


def test_ps_classification():
    rec = PSRecord()
    rec.add(0, 1.0, 1e-9, 1.2)
    assert ps_classify(rec, 0.1, 10, 1e-8).verdict == "converged"
    collapse = PSRecord()
    for t, T in enumerate(np.geomspace(1.0, 1e-6, 10)):
        collapse.add(t, T * 1e-3, 1e-3, T)
    v = ps_classify(collapse, 1e-3, 1e3, 1e-8)
    assert v.verdict == "period_collapse" and v.consistent
    bad = PSRecord()
    for t, T in enumerate(np.geomspace(1.0, 1e-6, 10)):
        bad.add(t, 0.7, 1e-3, T)
    v = ps_classify(bad, 1e-3, 1e3, 1e-8)
    assert v.verdict == "period_collapse" and not v.consistent
    big = PSRecord()
    big.add(0, 1.0, 0.1, 1e4)
    assert ps_classify(big, 1e-3, 1e3, 1e-8).verdict == "period_blowup"


def test_record_csv():
    rec = PSRecord()
    rec.add(0, 1.0, 0.5, 2.0, 0.1)
    rec.add(0.5, 0.9, 0.4, 2.1, 0.2)
    lines = rec.to_csv().splitlines()
    assert lines[0] == "iteration,time,action,grad_norm,T,excursion"
    assert len(lines) == 3


def test_polish_cyclotron(magplane, plane):
    rough = Loop(plane, cyclotron(plane, 128).samples * 1.05, 6.0)
    out, info = polish(magplane, 0.5, rough)
    assert info.converged
    _, _, _, gn = gradient(magplane, 0.5, out)
    assert gn < 1e-9
    assert out.T == pytest.approx(2 * math.pi, abs=2e-3)
    assert action(magplane, 0.5, out) == pytest.approx(math.pi, abs=2e-3)


def test_polish_sphere(kinetic_sphere, sphere):
    lp = Loop.from_function(
        sphere, lambda s: np.stack([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s), 0.1 * np.sin(4 * np.pi * s)], -1), 5.0, 64
    )
    out, info = polish(kinetic_sphere, 0.5, lp)
    assert info.converged
    assert length(out) == pytest.approx(2 * math.pi, abs=5e-3)
    assert np.max(sphere.surface_error(out.samples)) < 1e-12


def test_optimal_period(kinetic_torus, torus):
    lp = geodesic(torus).replace(T=3.0)
    assert optimal_period(kinetic_torus, 0.5, lp).T == pytest.approx(1.0, abs=1e-8)

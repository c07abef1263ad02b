import math
from types import SimpleNamespace

import numpy as np
import pytest

from lagorbits import minimax
from lagorbits.loopspace import Loop, PathOfLoops, action, length
from lagorbits.minimax import (
    BoxBallCover,
    MinimaxError,
    MonotonicityAlarm,
    MountainPassProblem,
    barrier,
    class_minimize,
    latitude_sweep,
    remesh,
    struwe_scan,
)


def test_cover_lebesgue_number():
    c = BoxBallCover([[-5, 5], [-5, 5]], 1.0, 3.0)
    assert c.lebesgue_number() == pytest.approx(3.0 - math.sqrt(2) / 2)
    assert c.centers().shape == (121, 2)
    with pytest.raises(ValueError):
        BoxBallCover([[0, 1], [0, 1]], 1.0, 0.5)


def test_barrier_formula_magnetic(magplane):
    b = barrier(magplane, 0.5, [[-5, 5], [-5, 5]], BoxBallCover([[-5, 5], [-5, 5]], 1.0, 3.0), n_loops=50)
    assert (b.A1, b.e0, b.mu) == pytest.approx((1.0, 0.0, 0.5))
    assert b.r == pytest.approx(math.sqrt(b.A1 * (0.5 - b.e0)) / (math.sqrt(2) * b.mu))
    assert b.r == pytest.approx(1.0)
    assert b.a == pytest.approx(0.5)
    assert b.r <= min(b.lebesgue_delta, math.sqrt(b.A1 * 0.5) / (math.sqrt(2) * b.mu)) + 1e-15


def test_barrier_vanishing_one_form(kinetic_plane):
    box = [[-2, 2], [-2, 2]]
    cover = BoxBallCover(box, 1.0, 1.0)
    b = barrier(kinetic_plane, 0.5, box, cover, n_loops=20)
    assert b.mu == 1e-12
    assert b.r == pytest.approx(cover.lebesgue_number())
    assert b.a == pytest.approx(math.sqrt(2 * 0.5) * b.r, rel=1e-9)


def test_barrier_needs_k_above_e0(potential_torus):
    with pytest.raises(MinimaxError):
        barrier(potential_torus, 0.5, [[0.0, 0.4], [0.0, 0.4]], BoxBallCover([[0.0, 0.4], [0.0, 0.4]], 0.1, 0.1))


def test_problem_refuses_pure_kinetic(kinetic_plane):
    with pytest.raises(MinimaxError):
        MountainPassProblem.search(kinetic_plane, 0.5, [[-3, 3], [-3, 3]])


def test_problem_endpoint_contract(magplane, plane):
    w = minimax.find_negative_action_loop(magplane, 0.5, [[-5, 5], [-5, 5]])
    p = MountainPassProblem.from_witness(magplane, 0.5, [0.0, 0.0], w, n_nodes=8)
    first = p.family[0]
    assert action(magplane, 0.5, first) == pytest.approx(first.T * 0.5)
    assert action(magplane, 0.5, p.family[7]) < 0
    loops = list(p.family.loops)
    loops[0] = loops[1]
    with pytest.raises(MinimaxError):
        MountainPassProblem(magplane, 0.5, PathOfLoops(loops))
    with pytest.raises(MinimaxError):
        MountainPassProblem(magplane, 0.5, PathOfLoops(list(p.family.loops[:2])))


def test_remesh_equalises_spacing(plane):
    a = Loop.constant(plane, [0.0, 0.0], 1.0, 16)
    b = Loop.constant(plane, [1.0, 0.0], 1.0, 16)
    lumpy = [a] + [Loop.constant(plane, [t, 0.0], 1.0, 16) for t in (0.05, 0.1, 0.15)] + [b]
    out = remesh(lumpy)
    xs = [lp.samples[0, 0] for lp in out]
    assert np.allclose(xs, np.linspace(0, 1, 5))
    assert out[0] is lumpy[0] and out[-1] is lumpy[-1]


def test_argmax_tie_break():
    assert minimax._argmax([1.0, 3.0, 3.0 - 1e-12, 2.0], 1e-9) == 1
    assert minimax._argmax([1.0, 3.0 - 1e-12, 3.0, 2.0], 1e-9) == 1


def test_scan_monotonicity_alarm(monkeypatch, plane):
    lp = Loop.constant(plane, [0, 0], 1.0, 8)
    levels = {0.1: 1.0, 0.2: 2.0, 0.3: 1.5, 0.4: 3.0}

    def fake(problem, jobs=1):
        return SimpleNamespace(level=levels[round(problem.k, 6)], loop=lp, certificate=None, path=None)

    monkeypatch.setattr(minimax, "mountain_pass", fake)
    with pytest.raises(MonotonicityAlarm) as exc:
        struwe_scan(None, 0.1, 0.4, 4, lambda k: SimpleNamespace(k=k), tau=1.0)
    assert not exc.value.result.monotone


def test_scan_validation():
    with pytest.raises(ValueError):
        struwe_scan(None, 0.1, 0.4, 2, lambda k: None)


def test_latitude_sweep_equator_dominates(kinetic_sphere, sphere):
    sw = latitude_sweep(sphere, 0.5, n_nodes=17, N=64)
    acts = [action(kinetic_sphere, 0.5, lp) for lp in sw]
    assert int(np.argmax(acts)) == 8
    assert np.ptp(sw[0].samples, axis=0).max() == 0 and np.ptp(sw[-1].samples, axis=0).max() == 0
    assert length(sw[8]) == pytest.approx(2 * math.pi, abs=0.01)


def test_class_minimize_argument_checks(kinetic_torus, kinetic_sphere):
    with pytest.raises(MinimaxError):
        class_minimize(kinetic_torus, 0.5, (0, 0))
    with pytest.raises(MinimaxError):
        class_minimize(kinetic_sphere, 0.5, (1,))


def test_class_minimize_torus_identity(kinetic_torus):
    res = class_minimize(kinetic_torus, 0.5, (1, 0), n_starts=2, cu_estimate=0.0)
    assert res.certificate.passed
    assert res.checks["cu_identity"]
    assert res.level == pytest.approx(1.0, abs=1e-9)

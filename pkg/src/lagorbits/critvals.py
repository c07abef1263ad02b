"""Estimates of the critical values ``e0``, ``c_u`` and the isoperimetric constant ``mu``.

``c_u`` is bracketed by bisection on ``k``.  At each trial energy a search for
a contractible loop of negative action either returns a witness (so
``c_u > k``) or gives up, which is read as ``c_u <= k`` *at this budget*.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .geometry import Manifold
from .gradientflow import optimal_period
from .lagrangian import CovectorField, Lagrangian
from .loopspace import Loop, LoopError, action, differential, length


class MuCheckError(RuntimeError):
    def __init__(self, message, loop=None):
        super().__init__(message)
        self.loop = loop


# -- negative-action witnesses ----------------------------------------------------

def _argmax_energy_at_rest(L: Lagrangian, region):
    region = np.asarray(region, dtype=float)
    d = region.shape[0]
    pts = region[:, 0] + (region[:, 1] - region[:, 0]) * qmc.Sobol(d, scramble=False).random_base2(9)
    zero = np.zeros(d)
    vals = L.energy(pts, np.zeros_like(pts))
    x = pts[int(np.argmax(vals))]
    res = optimize.minimize(
        lambda y: (-float(L.energy(y, zero)), L.eval_Lx(y, zero)),
        x,
        jac=True,
        method="L-BFGS-B",
        bounds=[tuple(b) for b in region],
    )
    return res.x, -float(res.fun)


def _circle(m: Manifold, center, radius, orientation, T, N, axes=(0, 1)):
    s = np.arange(N) / N
    x = np.tile(np.asarray(center, dtype=float), (N, 1))
    x[:, axes[0]] += radius * np.cos(orientation * 2 * np.pi * s)
    x[:, axes[1]] += radius * np.sin(orientation * 2 * np.pi * s)
    return Loop(m, x, T)


def _smooth_random_loop(m: Manifold, region, rng, N, modes=3):
    region = np.asarray(region, dtype=float)
    lo, hi = region[:, 0], region[:, 1]
    c = lo + (hi - lo) * rng.random(lo.size)
    room = np.minimum(c - lo, hi - c)
    s = np.arange(N) / N
    x = np.tile(c, (N, 1))
    for j in range(1, modes + 1):
        a = rng.normal(size=(2, lo.size)) / j
        x += np.outer(np.cos(2 * np.pi * j * s), a[0]) + np.outer(np.sin(2 * np.pi * j * s), a[1])
    dev = np.max(np.abs(x - c), axis=0)
    x = c + (x - c) * np.where(dev > 0, 0.9 * room / np.where(dev > 0, dev, 1.0), 0.0)
    return Loop(m, x, float(np.exp(rng.uniform(-1, 2))))


def find_negative_action_loop(
    L: Lagrangian,
    k: float,
    search_region,
    budget: int = 8,
    N: int = 32,
    rng=0,
    n_radii: int = 24,
) -> Loop | None:
    """A contractible loop with ``S_k < 0``, or ``None`` if the budget runs out.

    Tried in order: a constant loop at the maximum of ``E(x, 0)`` (enough when
    ``k < e0``); circles of both orientations on a radius grid with optimal
    period; ``budget`` bounded descents in ``(x, log T)`` from random smooth
    loops.
    """
    m = L.manifold
    rng = np.random.default_rng(rng)
    region = np.asarray(search_region, dtype=float)
    if m.representation == "Embedded":
        pts = m.project(rng.normal(size=(512, m.ambient_dim)))
        vals = L.energy(pts, np.zeros_like(pts))
        i = int(np.argmax(vals))
        if vals[i] > k:
            lp = Loop.constant(m, pts[i], 1.0, N)
            if action(L, k, lp) < 0:
                return lp
        return None

    x_star, e_star = _argmax_energy_at_rest(L, region)
    if e_star > k:
        lp = Loop.constant(m, x_star, 1.0, N)
        if action(L, k, lp) < 0:
            return lp

    if m.dim >= 2:
        center = 0.5 * (region[:, 0] + region[:, 1])
        half = 0.5 * float(np.min(region[:2, 1] - region[:2, 0]))
        radii = half * np.geomspace(0.02, 0.999, n_radii)
        for rad in radii[::-1]:
            for orient in (-1, 1):
                try:
                    lp = optimal_period(L, k, _circle(m, center, rad, orient, 1.0, N))
                except LoopError:
                    continue
                if action(L, k, lp) < 0:
                    return lp

    d = m.dim
    bounds = [tuple(b) for b in region] * N + [(math.log(1e-3), math.log(1e3))]
    for _ in range(budget):
        try:
            start = _smooth_random_loop(m, region, rng, N)
        except LoopError:
            continue

        def fun(z):
            try:
                lp = Loop(m, z[:-1].reshape(N, d), math.exp(z[-1]))
            except LoopError:
                return 1e6, np.zeros_like(z)
            dS = differential(L, k, lp)
            return action(L, k, lp), np.concatenate([dS.dx.reshape(-1), [dS.dT * lp.T]])

        z0 = np.concatenate([start.samples.reshape(-1), [math.log(start.T)]])
        res = optimize.minimize(fun, z0, jac=True, method="L-BFGS-B", bounds=bounds, options={"maxiter": 300})
        try:
            lp = Loop(m, res.x[:-1].reshape(N, d), math.exp(res.x[-1]))
        except LoopError:
            continue
        if action(L, k, lp) < 0:
            return lp
    return None


# -- c_u bisection ------------------------------------------------------------

@dataclass
class CriticalValueEstimate:
    value: float
    lo: float
    hi: float
    witnesses: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    budget_used: int = 0
    unbounded_suspected: bool = False
    log: list = field(default_factory=list)

    @property
    def bracket(self):
        return (self.lo, self.hi)

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "bracket": [self.lo, self.hi],
            "unbounded_suspected": self.unbounded_suspected,
            "budget_used": self.budget_used,
            "witnesses": [{"k": k, "loop": lp.to_dict()} for k, lp in self.witnesses],
            "failures": list(self.failures),
            "log": list(self.log),
        }


def estimate_cu(
    L: Lagrangian,
    search_region,
    k_bracket=(-1.0, 10.0),
    tol: float = 1e-2,
    budget: int = 8,
    N: int = 32,
    rng=0,
) -> CriticalValueEstimate:
    """Bisection on ``k`` with :func:`find_negative_action_loop` as oracle."""
    k_lo, k_hi = map(float, k_bracket)
    if not (np.isfinite(k_lo) and np.isfinite(k_hi) and k_lo < k_hi):
        raise ValueError("k_bracket must be a finite increasing pair")
    est = CriticalValueEstimate(math.nan, k_lo, k_hi)

    def probe(k):
        est.budget_used += 1
        lp = find_negative_action_loop(L, k, search_region, budget=budget, N=N, rng=rng)
        if lp is not None:
            S = action(L, k, lp)
            if not S < 0:
                raise RuntimeError(f"witness at k={k} recomputes to S={S}")
            est.witnesses.append((k, lp))
            est.log.append({"k": k, "witness": True, "action": S})
            return True
        est.failures.append(k)
        est.log.append({"k": k, "witness": False})
        return False

    if probe(k_hi):
        est.lo = est.hi = est.value = k_hi
        est.unbounded_suspected = True
        return est
    if not probe(k_lo):
        est.lo = est.hi = est.value = k_lo
        est.log.append({"note": "no witness at the lower end; c_u lies at or below it"})
        return est
    lo, hi = k_lo, k_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    est.lo, est.hi, est.value = lo, hi, 0.5 * (lo + hi)
    return est


# -- isoperimetric constant -----------------------------------------------------

def _ball_points(center, radius, n, rng):
    d = center.size
    u = rng.normal(size=(n, d))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    r = radius * rng.random(n) ** (1.0 / d)
    return center + u * r[:, None]


def _line_integral(theta: CovectorField, loop: Loop) -> float:
    return float(np.sum(theta(loop.midpoints()) * loop.steps()))


def estimate_mu(m: Manifold, theta: CovectorField, ball, n_points: int = 2000, n_loops: int = 1000, rng=0, floor: float = 1e-12) -> float:
    """``mu = 1/2 sup |d theta|_op * distortion^2`` on a chart ball ``(center, radius)``.

    The distortion factor is ``1 / min eig g`` over the ball, so that
    Euclidean chart lengths are bounded by metric ones.  The constant is then
    tested on ``n_loops`` random closed curves in the ball; a violation raises
    :class:`MuCheckError` carrying the offending loop.
    """
    if m.representation != "PeriodicChart":
        raise ValueError("mu is estimated on chart balls")
    center = np.asarray(ball[0], dtype=float)
    radius = float(ball[1])
    if not radius > 0:
        raise ValueError("ball radius must be positive")
    for ax in m.periodic_axes:
        if radius >= 0.5 * m.periods[ax]:
            raise ValueError("ball wraps around a periodic coordinate; it is not a chart ball")
    rng = np.random.default_rng(rng)
    pts = np.vstack([center, _ball_points(center, radius, n_points, rng)])
    dth = theta.exterior_derivative(pts)
    op = float(np.max(np.linalg.norm(dth, ord=2, axis=(-2, -1))))
    lam = float(np.min(np.linalg.eigvalsh(m.metric(pts))[..., 0]))
    if lam <= 0:
        raise ValueError("metric not positive definite on the ball")
    mu = max(0.5 * op / lam, floor)

    N = 64
    s = np.arange(N) / N
    for _ in range(n_loops):
        c = _ball_points(center, 0.5 * radius, 1, rng)[0]
        x = np.tile(c, (N, 1))
        for j in range(1, 4):
            a = rng.normal(size=(2, m.dim)) / j
            x += np.outer(np.cos(2 * np.pi * j * s), a[0]) + np.outer(np.sin(2 * np.pi * j * s), a[1])
        dev = float(np.max(np.linalg.norm(x - center, axis=-1)))
        if dev > radius:
            x = center + (x - center) * (radius / dev) * 0.999
        lp = Loop(m, x, 1.0)
        lhs = abs(_line_integral(theta, lp))
        ell = length(lp)
        if lhs > mu * ell**2 + 1e-12:
            raise MuCheckError(f"|int theta| = {lhs:.6g} exceeds mu l^2 = {mu * ell**2:.6g}", lp)
    return mu

"""Radial shrink maps ``phi: K -> K0`` and the loop pushback.

The profile ``f`` is the identity on ``[0, r0]``, its slope decreases along a
quintic step to ``s_inf`` on ``[r0, r1]`` and stays there.  ``phi`` rescales
the radial block of coordinates by ``f(r)/r`` and leaves every other
coordinate alone, so windings of periodic coordinates are untouched.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .expr import compile_expression
from .lagrangian import Lagrangian
from .loopspace import Loop


class ShrinkError(ValueError):
    pass


class ConfinementError(ShrinkError):
    pass


@dataclass(frozen=True)
class RadialProfile:
    r0: float
    r1: float
    s_inf: float = 0.5

    def __post_init__(self):
        if not (0 < self.r0 < self.r1):
            raise ShrinkError("need 0 < r0 < r1")
        if not (0 < self.s_inf < 1):
            raise ShrinkError("s_inf must lie in (0, 1)")

    def _u(self, r):
        return np.clip((r - self.r0) / (self.r1 - self.r0), 0.0, 1.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        u = self._u(r)
        w = self.r1 - self.r0
        c = 1.0 - self.s_inf
        mid = r - c * w * u**4 * (2.5 - 3.0 * u + u * u)
        f_r1 = self.r1 - 0.5 * c * w
        return np.where(r <= self.r0, r, np.where(r <= self.r1, mid, f_r1 + self.s_inf * (r - self.r1)))

    def derivative(self, r):
        u = self._u(np.asarray(r, dtype=float))
        return 1.0 - (1.0 - self.s_inf) * u**3 * (10.0 + u * (-15.0 + 6.0 * u))

    def second_derivative(self, r):
        u = self._u(np.asarray(r, dtype=float))
        return -(1.0 - self.s_inf) * 30.0 * u * u * (1.0 - u) ** 2 / (self.r1 - self.r0)

    @property
    def identity_radius(self) -> float:
        return self.r0

    def describe(self) -> dict:
        return {"type": "radial", "r0": self.r0, "r1": self.r1, "s_inf": self.s_inf}


class ExpressionProfile:
    """Profile given as an expression in ``r``; checked on a grid, never trusted."""

    def __init__(self, text: str, params=None, check_to: float = 10.0):
        self.text = text
        self._f = compile_expression(text, ("r",), params)
        self._df = self._f.diff("r")
        self._ddf = self._df.diff("r")
        r = np.linspace(0.0, check_to, 2001)
        d = self.derivative(r)
        if np.any(d <= 0) or np.any(d > 1 + 1e-12):
            raise ShrinkError(f"profile {text!r} must satisfy 0 < f' <= 1")
        if abs(float(self(0.0))) > 1e-12:
            raise ShrinkError(f"profile {text!r} must fix the origin")
        self.identity_radius = float(r[np.argmax(np.abs(d - 1.0) > 1e-14)]) if np.any(np.abs(d - 1.0) > 1e-14) else check_to

    def __call__(self, r):
        return self._f(np.asarray(r, dtype=float)[..., None])

    def derivative(self, r):
        return self._df(np.asarray(r, dtype=float)[..., None])

    def second_derivative(self, r):
        return self._ddf(np.asarray(r, dtype=float)[..., None])

    def describe(self) -> dict:
        return {"type": "expression", "f": self.text}


@dataclass
class ShrinkMap:
    """``phi`` on ``K = {r <= r2}`` with image in ``K0 = {r <= f(r2)}``."""

    profile: object
    r2: float
    radial_axes: tuple = (0,)
    homotopic_flag: bool = True
    epsilon: float = field(init=False)
    K0_radius: float = field(init=False)

    def __post_init__(self):
        self.radial_axes = tuple(int(a) for a in self.radial_axes)
        self.K0_radius = float(self.profile(self.r2))
        self.epsilon = float(self.r2 - self.K0_radius)
        if not self.epsilon > 0:
            raise ShrinkError(f"collar width r2 - f(r2) = {self.epsilon} is not positive")

    @property
    def K_radius(self) -> float:
        return float(self.r2)

    def radius(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.linalg.norm(x[..., list(self.radial_axes)], axis=-1)

    def in_K(self, x, tol: float = 1e-12) -> np.ndarray:
        return self.radius(x) <= self.r2 + tol

    def in_K0(self, x, tol: float = 1e-12) -> np.ndarray:
        return self.radius(x) <= self.K0_radius + tol

    def _scale(self, r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        s = np.where(r > 0, self.profile(safe) / safe, 1.0)
        return np.where(r <= self.profile.identity_radius, 1.0, s)

    def phi(self, x) -> np.ndarray:
        x = np.array(x, dtype=float)
        ax = list(self.radial_axes)
        r = self.radius(x)
        x[..., ax] = x[..., ax] * self._scale(r)[..., None]
        return x

    def dphi(self, x) -> np.ndarray:
        """Jacobian ``(f/r) I + (f' - f/r) rhat rhat^T`` on the radial block."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        ax = list(self.radial_axes)
        r = self.radius(x)
        J = np.broadcast_to(np.eye(n), x.shape[:-1] + (n, n)).copy()
        q = self._scale(r)
        safe = np.where(r > 0, r, 1.0)
        rhat = x[..., ax] / safe[..., None]
        fp = np.where(r <= self.profile.identity_radius, 1.0, self.profile.derivative(r))
        k = len(ax)
        blk = q[..., None, None] * np.eye(k) + (fp - q)[..., None, None] * rhat[..., :, None] * rhat[..., None, :]
        for i, a in enumerate(ax):
            for j, b in enumerate(ax):
                J[..., a, b] = blk[..., i, j]
        return J

    def describe(self) -> dict:
        return {**self.profile.describe(), "r2": self.r2, "radial_axes": list(self.radial_axes), "epsilon": self.epsilon}


def build_radial_shrink(m, r0: float, r1: float, r2: float, s_inf: float = 0.5, radial_axes: Sequence[int] | None = None) -> ShrinkMap:
    if not (0 < r0 < r1 < r2):
        raise ShrinkError("radii must satisfy 0 < r0 < r1 < r2")
    if m.representation != "PeriodicChart":
        raise ShrinkError("radial shrink maps need a chart with a Euclidean factor")
    if radial_axes is None:
        radial_axes = tuple(i for i in range(m.dim) if i not in set(m.periodic_axes.tolist()))
    if not radial_axes:
        raise ShrinkError("the manifold has no non-periodic coordinate to shrink")
    if set(radial_axes) & set(m.periodic_axes.tolist()):
        raise ShrinkError("radial axes must be non-periodic")
    return ShrinkMap(RadialProfile(r0, r1, s_inf), r2, tuple(radial_axes))


def sample_collar(s: ShrinkMap, m, n: int, vmax: float, rng=None, box=None):
    """``n`` pairs ``(x, v)`` with ``x`` in ``K`` and ``|v|_x <= vmax``.

    Radii are drawn uniformly in ``[0, r2]`` so the identity zone, the blend
    and the collar are all represented.  Non-radial coordinates are uniform
    over their period (periodic) or over ``box`` (others, default ``[-1, 1]``).
    """
    rng = np.random.default_rng(rng)
    d = m.dim
    ax = list(s.radial_axes)
    x = np.empty((n, d))
    for i in range(d):
        if i in ax:
            continue
        if i in set(m.periodic_axes.tolist()):
            x[:, i] = rng.random(n) * m.periods[i]
        else:
            lo, hi = (-1.0, 1.0) if box is None else box[i]
            x[:, i] = rng.uniform(lo, hi, n)
    dirs = rng.normal(size=(n, len(ax)))
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    x[:, ax] = dirs * rng.uniform(0.0, s.r2, n)[:, None]
    u = rng.normal(size=(n, d))
    g = m.metric(x)
    nrm = np.sqrt(np.einsum("ni,nij,nj->n", u, g, u))
    v = u / nrm[:, None] * (vmax * rng.random(n))[:, None]
    return x, v


@dataclass
class ShrinkReport:
    max_violation: float
    worst_x: list | None
    worst_v: list | None
    n_samples: int
    n_violations: int

    @property
    def passed(self) -> bool:
        return self.max_violation <= 0.0


def verify_shrink_inequality(s: ShrinkMap, L: Lagrangian, samples=None, n: int = 10_000, vmax: float = 3.0, rng=0, tol: float = 1e-13) -> ShrinkReport:
    """Sampled check of ``L(phi(x), dphi_x v) <= L(x, v)``.

    Differences below ``tol`` in magnitude count as equality (round-off in
    the identity zone).
    """
    if samples is None:
        x, v = sample_collar(s, L.manifold, n, vmax, rng)
    else:
        x, v = (np.asarray(a, dtype=float) for a in samples)
    inside = s.in_K(x)
    if not np.all(inside):
        i = int(np.argmin(inside))
        raise ConfinementError(f"sample {x[i].tolist()} lies outside K (radius {s.r2})")
    y = s.phi(x)
    w = np.einsum("nij,nj->ni", s.dphi(x), v)
    diff = L.eval_L(y, w) - L.eval_L(x, v)
    diff = np.where(np.abs(diff) <= tol * (1.0 + np.abs(L.eval_L(x, v))), 0.0, diff)
    i = int(np.argmax(diff))
    worst = float(diff[i])
    bad = worst > 0
    return ShrinkReport(worst, x[i].tolist() if bad else None, v[i].tolist() if bad else None, len(x), int(np.sum(diff > 0)))


def pushback(s: ShrinkMap, loop: Loop) -> Loop:
    """Apply ``phi`` samplewise; period and winding are unchanged."""
    inside = s.in_K(loop.samples)
    if not np.all(inside):
        i = int(np.argmin(inside))
        raise ConfinementError(f"loop sample {i} at {loop.samples[i].tolist()} lies outside K")
    return Loop(loop.manifold, s.phi(loop.samples), loop.T, loop.winding)

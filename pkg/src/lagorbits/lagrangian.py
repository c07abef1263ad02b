"""Electromagnetic Lagrangians ``L(x, v) = 1/2 |v|_x^2 + theta_x(v) + V(x)``.

All evaluations are vectorised over leading axes of ``x`` and ``v``.  For an
embedded manifold ``x`` and ``v`` are ambient vectors and ``theta``, ``V``
are functions of the ambient coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import optimize
from scipy.stats import qmc

from .expr import CompiledArray, compile_expression
from .geometry import Manifold


class LagrangianError(ValueError):
    pass


class ConvexityError(LagrangianError):
    pass


def _coord_dim(m: Manifold) -> int:
    return m.ambient_dim if m.representation == "Embedded" else m.dim


class ScalarField:
    """Function ``f(x)`` with its gradient ``df[..., l]``."""

    def __init__(self, fn: Callable, grad: Callable, is_zero: bool = False, source=None):
        self.fn = fn
        self.grad = grad
        self.is_zero = is_zero
        self.source = source

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def gradient(self, x):
        return self.grad(np.asarray(x, dtype=float))

    @classmethod
    def zero(cls, dim: int) -> "ScalarField":
        return cls(lambda x: np.zeros(x.shape[:-1]), lambda x: np.zeros(x.shape), is_zero=True, source="0")

    @classmethod
    def from_expression(cls, text, coords: Sequence[str], params: Mapping[str, float] | None = None):
        f = compile_expression(text, coords, params)
        df = CompiledArray([f.diff(c).expr for c in coords], coords)
        return cls(
            f,
            df,
            is_zero=(f.is_constant and float(f.expr) == 0.0),
            source=text,
        )


class CovectorField:
    """One-form ``theta[..., j]`` with Jacobian ``J[..., l, j] = d_l theta_j``."""

    def __init__(self, fn: Callable, jac: Callable, is_zero: bool = False, source=None):
        self.fn = fn
        self.jac = jac
        self.is_zero = is_zero
        self.source = source

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    def jacobian(self, x):
        return self.jac(np.asarray(x, dtype=float))

    def exterior_derivative(self, x):
        """``(d theta)[..., l, j] = d_l theta_j - d_j theta_l``."""
        J = self.jacobian(x)
        return J - np.swapaxes(J, -1, -2)

    @classmethod
    def zero(cls, dim: int) -> "CovectorField":
        return cls(
            lambda x: np.zeros(x.shape),
            lambda x: np.zeros(x.shape + (x.shape[-1],)),
            is_zero=True,
            source=["0"] * dim,
        )

    @classmethod
    def from_expressions(cls, texts, coords: Sequence[str], params: Mapping[str, float] | None = None):
        if len(texts) != len(coords):
            raise LagrangianError(f"theta needs {len(coords)} components, got {len(texts)}")
        comps = [compile_expression(t, coords, params) for t in texts]
        jac = [[comps[j].diff(coords[l]).expr for j in range(len(coords))] for l in range(len(coords))]
        zero = all(c.is_constant and float(c.expr) == 0.0 for c in comps)
        return cls(
            CompiledArray([c.expr for c in comps], coords),
            CompiledArray(jac, coords),
            is_zero=zero,
            source=list(texts),
        )


def _smoothstep(u):
    """Quintic ``S(u)`` with ``S(0)=0, S(1)=1`` and vanishing first/second derivatives at both ends."""
    u = np.clip(u, 0.0, 1.0)
    s = u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
    ds = 30.0 * u * u * (1.0 - u) ** 2
    dds = 60.0 * u * (1.0 - u) * (1.0 - 2.0 * u)
    return s, ds, dds


@dataclass(frozen=True)
class QuadraticCap:
    """Blend of the ``theta`` and ``V`` terms to zero for ``|v|_x`` in ``[R, R + blend]``."""

    radius: float
    blend: float

    def __post_init__(self):
        if not (self.radius > 0 and self.blend > 0):
            raise LagrangianError("cap radius and blend width must be positive")

    def weights(self, s):
        s_, ds, dds = _smoothstep((np.asarray(s) - self.radius) / self.blend)
        return 1.0 - s_, -ds / self.blend, -dds / self.blend**2


class Lagrangian:
    """Electromagnetic Lagrangian on a manifold, optionally quadratic at infinity."""

    def __init__(
        self,
        manifold: Manifold,
        theta: CovectorField | None = None,
        potential: ScalarField | None = None,
        cap: QuadraticCap | None = None,
    ):
        self.manifold = manifold
        n = _coord_dim(manifold)
        self.theta = theta if theta is not None else CovectorField.zero(n)
        self.potential = potential if potential is not None else ScalarField.zero(n)
        self.cap = cap
        self._embedded = manifold.representation == "Embedded"

    def with_cap(self, cap: QuadraticCap | None) -> "Lagrangian":
        return Lagrangian(self.manifold, self.theta, self.potential, cap)

    @property
    def is_kinetic(self) -> bool:
        return self.theta.is_zero and self.potential.is_zero

    # -- pieces -------------------------------------------------------------
    def _metric(self, x):
        return self.manifold.metric(x)

    def _dmetric(self, x):
        if self._embedded or self.manifold.flat:
            return None
        return self.manifold.metric_grad(x)

    @staticmethod
    def _check(x, v):
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
            raise LagrangianError("non-finite (x, v) passed to the Lagrangian")
        return x, v

    def _cap_terms(self, s):
        if self.cap is None:
            one = np.ones_like(s)
            return one, np.zeros_like(s), np.zeros_like(s)
        return self.cap.weights(s)

    # -- evaluations ----------------------------------------------------------
    def eval_L(self, x, v):
        x, v = self._check(x, v)
        g = self._metric(x)
        s2 = np.einsum("...i,...ij,...j->...", v, g, v)
        m1 = np.sum(self.theta(x) * v, axis=-1) + self.potential(x)
        if self.cap is None:
            return 0.5 * s2 + m1
        chi, _, _ = self._cap_terms(np.sqrt(s2))
        return 0.5 * s2 + chi * m1

    def eval_Lv(self, x, v):
        x, v = self._check(x, v)
        g = self._metric(x)
        gv = np.einsum("...ij,...j->...i", g, v)
        th = self.theta(x)
        if self.cap is None:
            return gv + th
        s = np.sqrt(np.sum(gv * v, axis=-1))
        chi, dchi, _ = self._cap_terms(s)
        m1 = np.sum(th * v, axis=-1) + self.potential(x)
        safe = np.where(s > 0, s, 1.0)
        return gv + chi[..., None] * th + (dchi * m1 / safe)[..., None] * gv

    def eval_Lx(self, x, v):
        x, v = self._check(x, v)
        dg = self._dmetric(x)
        out = np.einsum("...lj,...j->...l", self.theta.jacobian(x), v) + self.potential.gradient(x)
        kin = 0.5 * np.einsum("...i,...lij,...j->...l", v, dg, v) if dg is not None else 0.0
        if self.cap is None:
            return kin + out
        g = self._metric(x)
        s = np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))
        chi, dchi, _ = self._cap_terms(s)
        m1 = np.sum(self.theta(x) * v, axis=-1) + self.potential(x)
        safe = np.where(s > 0, s, 1.0)
        ds_dx = kin / safe[..., None] if dg is not None else 0.0
        return kin + chi[..., None] * out + (dchi * m1)[..., None] * ds_dx

    def eval_Lvv(self, x, v):
        x, v = self._check(x, v)
        g = np.array(self._metric(x))
        if self.cap is None:
            return g
        gv = np.einsum("...ij,...j->...i", g, v)
        s = np.sqrt(np.sum(gv * v, axis=-1))
        chi, dchi, ddchi = self._cap_terms(s)
        th = self.theta(x)
        m1 = np.sum(th * v, axis=-1) + self.potential(x)
        safe = np.where(s > 0, s, 1.0)[..., None, None]
        outer = gv[..., :, None] * gv[..., None, :]
        cross = th[..., :, None] * gv[..., None, :]
        cross = cross + np.swapaxes(cross, -1, -2)
        term = (
            dchi[..., None, None] * cross / safe
            + m1[..., None, None]
            * (ddchi[..., None, None] * outer / safe**2 + dchi[..., None, None] * (g / safe - outer / safe**3))
        )
        return g + term

    def energy(self, x, v):
        """``E_L = L_v[v] - L``."""
        x, v = self._check(x, v)
        return np.sum(self.eval_Lv(x, v) * v, axis=-1) - self.eval_L(x, v)

    def metric_norm(self, x, v):
        return np.sqrt(np.einsum("...i,...ij,...j->...", v, self._metric(x), v))

    def covector_norm(self, x, p):
        ginv = np.linalg.inv(self._metric(x))
        return np.sqrt(np.einsum("...i,...ij,...j->...", p, ginv, p))


def electromagnetic(
    manifold: Manifold,
    theta: Sequence[str] | None = None,
    V: str | float | None = None,
    params: Mapping[str, float] | None = None,
) -> Lagrangian:
    """Build a Lagrangian from grammar expressions in the manifold's coordinates."""
    coords = manifold.coords
    th = CovectorField.from_expressions(theta, coords, params) if theta is not None else None
    pot = ScalarField.from_expression(V, coords, params) if V is not None else None
    return Lagrangian(manifold, th, pot)


# -- critical value e0 and growth constants ------------------------------------

def e0_estimate(L: Lagrangian, region, samples: int = 1024, refine: int = 4) -> float:
    """``sup_x E_L(x, 0)`` over a chart box, by a Sobol sample refined by bounded ascent."""
    region = np.asarray(region, dtype=float)
    if region.ndim != 2 or region.shape[1] != 2 or np.any(region[:, 1] < region[:, 0]):
        raise LagrangianError("region must be a non-empty box [[lo, hi], ...]")
    d = region.shape[0]
    if L.potential.is_zero and L.cap is None:
        return 0.0
    m = max(1, int(np.ceil(np.log2(max(samples, 1)))))
    pts = qmc.Sobol(d, scramble=False).random_base2(m)[:samples]
    pts = region[:, 0] + (region[:, 1] - region[:, 0]) * pts
    zero = np.zeros(d)
    vals = L.energy(pts, np.zeros_like(pts))
    best = float(np.max(vals))
    bounds = [tuple(b) for b in region]

    def neg(x):
        return -float(L.energy(x, zero)), L.eval_Lx(x, zero)

    for idx in np.argsort(vals)[::-1][:refine]:
        res = optimize.minimize(neg, pts[idx], jac=True, method="L-BFGS-B", bounds=bounds, options={"gtol": 1e-12, "ftol": 1e-15})
        best = max(best, -float(res.fun))
    return best


@dataclass
class GrowthConstants:
    A1: float
    A2: float
    A3: float
    A4: float
    A5: float
    r_grid: np.ndarray = field(repr=False)
    a_profile: np.ndarray = field(repr=False)
    b_profile: np.ndarray = field(repr=False)
    theta_sup: float = 0.0

    def a(self, r: float) -> float:
        return float(np.interp(r, self.r_grid, self.a_profile))

    def b(self, r: float) -> float:
        return float(np.interp(r, self.r_grid, self.b_profile))


def estimate_growth_constants(
    L: Lagrangian, region, vmax: float, n_points: int = 256, n_dirs: int = 16, n_radii: int = 33
) -> GrowthConstants:
    """Constants of the quadratic growth bounds, certified on a sample grid.

    Norms are metric norms ``|v|_x``.  Tail values (the limits as
    ``|v| -> oo`` of a quadratic-at-infinity Lagrangian) are folded in so that
    the pure kinetic case gives the exact constants.
    """
    region = np.asarray(region, dtype=float)
    if vmax <= 0:
        raise LagrangianError("vmax must be positive")
    m = L.manifold
    d = region.shape[0]
    k = max(1, int(np.ceil(np.log2(n_points))))
    xs = region[:, 0] + (region[:, 1] - region[:, 0]) * qmc.Sobol(d, scramble=False).random_base2(k)[:n_points]
    if m.representation == "Embedded":
        with np.errstate(invalid="ignore", divide="ignore"):
            xs = m.project(xs)
        xs = xs[np.all(np.isfinite(xs), axis=-1)]
    g = m.metric(xs)
    # unit directions in the metric: v = g^{-1/2} u with |u| = 1
    ang = np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False)
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(n_dirs, g.shape[-1]))
    if g.shape[-1] == 2:
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
    w, Q = np.linalg.eigh(g)
    ginv_half = np.einsum("...ij,...j,...kj->...ik", Q, 1.0 / np.sqrt(w), Q)
    unit = np.einsum("pij,dj->pdi", ginv_half, dirs)  # (P, D, n)
    if m.representation == "Embedded":
        Pt = m.tangent_projector(xs)
        unit = np.einsum("pij,pdj->pdi", Pt, unit)
        nrm = np.linalg.norm(unit, axis=-1, keepdims=True)
        unit = unit / np.where(nrm > 0, nrm, 1.0)
    r_grid = np.linspace(0.0, vmax, n_radii)
    X = np.broadcast_to(xs[:, None, None, :], (xs.shape[0], n_radii, n_dirs, xs.shape[-1]))
    Vv = r_grid[None, :, None, None] * unit[:, None, :, :]
    s = L.metric_norm(X, Vv)
    Lval = L.eval_L(X, Vv)
    Lv = L.eval_Lv(X, Vv)
    Lv_norm = L.covector_norm(X, Lv)
    Lvv = L.eval_Lvv(X, Vv)
    gX = m.metric(X)
    if m.representation == "Embedded":
        E = m.tangent_basis(X)
        red = np.einsum("...ia,...ij,...jb->...ab", E, Lvv, E)
        eig = np.linalg.eigvalsh(red)
    else:
        gih = np.broadcast_to(ginv_half[:, None, None], gX.shape)
        eig = np.linalg.eigvalsh(np.einsum("...ij,...jk,...kl->...il", gih, Lvv, gih))
    A1 = float(eig.min())
    bmax = eig.max(axis=-1)
    if A1 <= 0:
        i = np.unravel_index(np.argmin(eig.min(axis=-1)), eig.shape[:-1])
        raise ConvexityError(f"fiberwise Hessian not positive definite at x={X[i].tolist()}, v={Vv[i].tolist()}")

    th = L.theta(xs)
    th_norm = L.covector_norm(xs, th)
    Vx = L.potential(xs)
    theta_sup = float(th_norm.max())
    A2 = 0.5 * A1 if L.theta.is_zero else 0.25 * A1
    if L.theta.is_zero:
        tail3 = float(np.max(-Vx))
    else:
        tail3 = float(np.max(th_norm**2 / A1 - Vx))
    sample3 = float(np.max(A2 * s**2 - Lval))
    A3 = max(0.0, tail3 * (1.01 if tail3 > 0 else 1.0), sample3 * 1.01)
    if A3 < 1e-12:
        A3 = 0.0
    ratio4 = float(np.max(Lval / (1.0 + s**2)))
    A4 = 0.5 if ratio4 <= 0.5 else 1.01 * ratio4
    ratio5 = float(np.max(Lv_norm / (1.0 + s)))
    A5 = 1.0 if ratio5 <= 1.0 else 1.01 * ratio5

    a_prof = np.array([Lval[:, : i + 1].max() for i in range(n_radii)])
    b_prof = np.array([bmax[:, : i + 1].max() for i in range(n_radii)])
    return GrowthConstants(A1, A2, A3, A4, A5, r_grid, a_prof, b_prof, theta_sup)


def quad_cap(L: Lagrangian, k: float, region=None, samples: int = 1024, check_convexity: bool = False) -> Lagrangian:
    """Quadratic-at-infinity modification agreeing with ``L`` on ``{E_L <= k + 1}``.

    Below ``R`` the returned Lagrangian evaluates exactly as ``L``.  ``R`` is
    twice the smallest admissible radius ``sqrt(2 (k + 1 + sup V))`` and the
    blend width is ``R / 4``.  With ``check_convexity`` (needs ``region``) the
    radius is doubled until the blend is fiberwise convex on sampled points;
    a one-form of size ``|theta|`` needs ``R`` of order ``100 |theta|``.
    """
    if not np.isfinite(k):
        raise LagrangianError("k must be finite")
    if L.potential.is_zero:
        vsup = 0.0
    else:
        if region is None:
            raise LagrangianError("a region is needed to bound the potential")
        region = np.asarray(region, dtype=float)
        vsup = _sup_potential(L, region, samples)
    r_min = np.sqrt(max(2.0 * (k + 1.0 + vsup), 0.0))
    if L.cap is not None and L.cap.radius >= r_min:
        return L
    R = 2.0 * r_min if r_min > 0 else 1.0
    capped = L.with_cap(QuadraticCap(R, R / 4.0))
    if check_convexity:
        if region is None:
            raise LagrangianError("check_convexity needs a region")
        for _ in range(30):
            try:
                estimate_growth_constants(capped, region, vmax=1.5 * (R + R / 4.0), n_points=64)
                break
            except ConvexityError:
                R *= 2.0
                capped = L.with_cap(QuadraticCap(R, R / 4.0))
        else:
            raise ConvexityError("no convex cap found")
    return capped


def _sup_potential(L: Lagrangian, region, samples: int) -> float:
    d = region.shape[0]
    m = max(1, int(np.ceil(np.log2(samples))))
    pts = region[:, 0] + (region[:, 1] - region[:, 0]) * qmc.Sobol(d, scramble=False).random_base2(m)
    vals = L.potential(pts)
    best = float(vals.max())
    res = optimize.minimize(
        lambda x: (-float(L.potential(x)), -L.potential.gradient(x)),
        pts[int(np.argmax(vals))],
        jac=True,
        method="L-BFGS-B",
        bounds=[tuple(b) for b in region],
    )
    return max(best, -float(res.fun))

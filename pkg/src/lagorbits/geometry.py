"""Riemannian manifolds in two concrete forms.

``PeriodicChart``
    A single global chart on R^d where some coordinates are identified modulo
    a period (torus, cylinder, plane, R x M products).  Points are stored in
    the universal cover; closed loops carry an integer winding vector.

``Embedded``
    A hypersurface ``{c(z) = 0}`` of Euclidean space with the induced metric,
    tangent projection ``pi(z)`` and normal projection ``pi_perp(z)``.
"""
from __future__ import annotations

from typing import Callable, Mapping, Sequence

import numpy as np

from .expr import CompiledArray, compile_expression

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)
_GL_NODES = 0.5 * (_GL_NODES + 1.0)
_GL_WEIGHTS = 0.5 * _GL_WEIGHTS


class GeometryError(ValueError):
    pass


class Manifold:
    representation: str = ""
    dim: int
    name: str
    coords: tuple

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r}, dim={self.dim})"


class PeriodicChart(Manifold):
    """Global chart with optional periodic coordinates.

    Parameters
    ----------
    dim : int
        Manifold dimension.
    metric : callable
        ``x[..., d] -> g[..., d, d]``.
    metric_grad : callable, optional
        ``x[..., d] -> dg[..., d, d, d]`` with ``dg[..., l, i, j] = d_l g_ij``.
        Central differences with step ``1e-5 * scale`` are used when omitted.
    periods : sequence of float, optional
        Period of each coordinate, ``0`` for a non-periodic one.
    flat : bool
        Declares the metric constant; enables caching in the loop-space metric.
    """

    representation = "PeriodicChart"

    def __init__(
        self,
        dim: int,
        metric: Callable,
        metric_grad: Callable | None = None,
        periods: Sequence[float] | None = None,
        coords: Sequence[str] | None = None,
        name: str = "chart",
        flat: bool = False,
        scale: float = 1.0,
    ):
        if dim < 1:
            raise GeometryError("dim must be >= 1")
        self.dim = int(dim)
        self._metric = metric
        self._metric_grad = metric_grad
        periods = np.zeros(dim) if periods is None else np.asarray(periods, dtype=float)
        if periods.shape != (dim,) or np.any(periods < 0):
            raise GeometryError("periods must be a length-dim vector of non-negative numbers")
        self.periods = periods
        self.periodic_axes = np.flatnonzero(periods > 0)
        self.coords = tuple(coords) if coords is not None else tuple(f"x{i + 1}" for i in range(dim))
        self.name = name
        self.flat = bool(flat)
        self.scale = float(scale)

    # -- metric -----------------------------------------------------------
    def metric(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.asarray(self._metric(x), dtype=float)
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g.reshape(-1, self.dim * self.dim)).any(axis=1))
            where = x.reshape(-1, self.dim)[bad[0, 0]] if bad.size else x
            raise GeometryError(f"non-finite metric entries at coordinates {np.asarray(where).tolist()}")
        return g

    def metric_grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self._metric_grad is not None:
            return np.asarray(self._metric_grad(x), dtype=float)
        h = 1e-5 * self.scale
        out = np.empty(x.shape + (self.dim, self.dim))
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = h
            out[..., l, :, :] = (self.metric(x + e) - self.metric(x - e)) / (2 * h)
        return out

    def christoffel(self, x) -> np.ndarray:
        """``Gamma[..., k, i, j]`` of the Levi-Civita connection."""
        x = np.asarray(x, dtype=float)
        g = self.metric(x)
        try:
            ginv = np.linalg.inv(g)
        except np.linalg.LinAlgError:
            raise GeometryError(f"singular metric near {x.reshape(-1, self.dim)[0].tolist()}") from None
        dg = self.metric_grad(x)  # [l, i, j] = d_l g_ij
        # first kind: Gamma_{l i j} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
        first = 0.5 * (
            np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg
        )
        gamma = np.einsum("...kl,...lij->...kij", ginv, first)
        return 0.5 * (gamma + np.swapaxes(gamma, -1, -2))

    # -- lattice ----------------------------------------------------------
    def lattice_offset(self, winding) -> np.ndarray:
        off = np.zeros(self.dim)
        winding = np.asarray(winding, dtype=float).reshape(-1)
        if winding.size != self.periodic_axes.size:
            raise GeometryError(
                f"winding has {winding.size} entries, manifold has {self.periodic_axes.size} periodic coordinates"
            )
        off[self.periodic_axes] = winding * self.periods[self.periodic_axes]
        return off

    def wrap_difference(self, dx) -> np.ndarray:
        """Shortest lattice representative of a coordinate difference."""
        dx = np.array(dx, dtype=float)
        for ax in self.periodic_axes:
            p = self.periods[ax]
            dx[..., ax] -= p * np.floor(dx[..., ax] / p + 0.5)
        return dx

    def min_eigenvalue(self, x) -> np.ndarray:
        return np.linalg.eigvalsh(self.metric(x))[..., 0]


class Embedded(Manifold):
    """Hypersurface ``{z : c(z) = 0}`` in R^N with the induced metric."""

    representation = "Embedded"

    def __init__(
        self,
        ambient_dim: int,
        constraint: Callable,
        constraint_grad: Callable,
        constraint_hess: Callable,
        project: Callable | None = None,
        project_jacobian: Callable | None = None,
        name: str = "embedded",
        coords: Sequence[str] | None = None,
    ):
        self.ambient_dim = int(ambient_dim)
        self.dim = self.ambient_dim - 1
        self.constraint = constraint
        self.constraint_grad = constraint_grad
        self.constraint_hess = constraint_hess
        self._project = project
        self._project_jacobian = project_jacobian
        self.name = name
        self.coords = tuple(coords) if coords is not None else tuple(f"z{i + 1}" for i in range(ambient_dim))
        self.periodic_axes = np.array([], dtype=int)
        self.flat = False

    def normal(self, z) -> np.ndarray:
        n = np.asarray(self.constraint_grad(np.asarray(z, dtype=float)), dtype=float)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    def normal_projector(self, z) -> np.ndarray:
        n = self.normal(z)
        return n[..., :, None] * n[..., None, :]

    def tangent_projector(self, z) -> np.ndarray:
        return np.eye(self.ambient_dim) - self.normal_projector(z)

    def tangent_basis(self, z) -> np.ndarray:
        """Orthonormal tangent frame ``E[..., N, dim]``."""
        n = self.normal(z)
        stack = np.concatenate([n[..., :, None], np.broadcast_to(np.eye(self.ambient_dim), n.shape + (self.ambient_dim,))], axis=-1)
        q, _ = np.linalg.qr(stack)
        return q[..., :, 1 : self.ambient_dim]

    def project(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if self._project is not None:
            return self._project(z)
        for _ in range(20):
            c = np.asarray(self.constraint(z))
            gc = np.asarray(self.constraint_grad(z))
            z = z - (c / np.sum(gc * gc, axis=-1))[..., None] * gc
            if np.max(np.abs(c)) < 1e-15:
                break
        return z

    def project_jacobian(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self._project_jacobian is not None:
            return self._project_jacobian(y)
        h = 1e-6
        cols = []
        for i in range(self.ambient_dim):
            e = np.zeros(self.ambient_dim)
            e[i] = h
            cols.append((self.project(y + e) - self.project(y - e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def metric(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.eye(self.ambient_dim), z.shape[:-1] + (self.ambient_dim,) * 2)

    def surface_error(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return np.abs(self.constraint(z))


# -- operations ---------------------------------------------------------------

def metric_eval(m: Manifold, x, u, w) -> np.ndarray:
    """``g_x(u, w)``; vectorised over leading axes."""
    g = m.metric(x)
    return np.einsum("...i,...ij,...j->...", np.asarray(u, float), g, np.asarray(w, float))


def christoffel(m: Manifold, x) -> np.ndarray:
    if m.representation != "PeriodicChart":
        raise GeometryError("Christoffel symbols are only provided in chart representation")
    return m.christoffel(x)


def chart_distance(m: Manifold, x, y) -> np.ndarray:
    """Length of the straight chart segment from ``x`` to ``y``.

    Periodic coordinates use the shortest lattice representative.  The value
    bounds the Riemannian distance from above.  For embedded manifolds the
    segment is projected onto the surface.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = _GL_NODES.reshape((-1,) + (1,) * (x.ndim - 1) + (1,))
    if m.representation == "PeriodicChart":
        d = m.wrap_difference(y - x)
        pts = x + s * d
        speed2 = np.einsum("...i,...ij,...j->...", d, m.metric(pts), d)
    else:
        d = y - x
        pts = x + s * d
        tang = np.einsum("...ij,...j->...i", m.project_jacobian(pts), np.broadcast_to(d, pts.shape))
        speed2 = np.sum(tang * tang, axis=-1)
    w = _GL_WEIGHTS.reshape((-1,) + (1,) * (x.ndim - 1))
    return np.sum(w * np.sqrt(np.maximum(speed2, 0.0)), axis=0)


# -- concrete manifolds -------------------------------------------------------

def euclidean(dim: int = 2, coords: Sequence[str] | None = None) -> PeriodicChart:
    eye = np.eye(dim)
    return PeriodicChart(
        dim,
        metric=lambda x: np.broadcast_to(eye, np.shape(x)[:-1] + (dim, dim)),
        metric_grad=lambda x: np.zeros(np.shape(x)[:-1] + (dim, dim, dim)),
        coords=coords or (("x", "y") if dim == 2 else None),
        name="plane" if dim == 2 else f"R{dim}",
        flat=True,
    )


def flat_torus(dim: int = 2, period: float = 1.0) -> PeriodicChart:
    eye = np.eye(dim)
    return PeriodicChart(
        dim,
        metric=lambda x: np.broadcast_to(eye, np.shape(x)[:-1] + (dim, dim)),
        metric_grad=lambda x: np.zeros(np.shape(x)[:-1] + (dim, dim, dim)),
        periods=[period] * dim,
        name="torus",
        flat=True,
        scale=period,
    )


def chart_from_expressions(
    coords: Sequence[str],
    metric: Sequence[Sequence[str | float]],
    periods: Sequence[float] | None = None,
    params: Mapping[str, float] | None = None,
    name: str = "chart",
) -> PeriodicChart:
    """Chart whose metric components are grammar expressions in ``coords``.

    Derivatives of the metric are exact (symbolic).
    """
    coords = tuple(coords)
    d = len(coords)
    comp = [[compile_expression(metric[i][j], coords, params) for j in range(d)] for i in range(d)]
    for i in range(d):
        for j in range(i):
            if comp[i][j].expr != comp[j][i].expr:
                raise GeometryError(f"metric not symmetric in entries ({i},{j})")
    g = CompiledArray([[comp[i][j].expr for j in range(d)] for i in range(d)], coords)
    dg = CompiledArray([[[comp[i][j].diff(coords[l]).expr for j in range(d)] for i in range(d)] for l in range(d)], coords)
    flat = all(c.is_constant for row in comp for c in row)
    return PeriodicChart(d, g, dg, periods=periods, coords=coords, name=name, flat=flat)


def warped_cylinder(beta: str = "1 + r^2", params: Mapping[str, float] | None = None, name: str = "cylinder") -> PeriodicChart:
    """``R x S^1`` with metric ``dr^2 + beta(r) dphi^2``, ``phi`` of period ``2 pi``."""
    b = compile_expression(beta, ("r", "phi"), params)
    db = b.diff("r")

    def g(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 1, 1] = b(x)
        return out

    def dg(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (2, 2, 2))
        out[..., 0, 1, 1] = db(x)
        return out

    chart = PeriodicChart(2, g, dg, periods=[0.0, 2 * np.pi], coords=("r", "phi"), name=name, scale=1.0)
    chart.beta = b
    return chart


def round_sphere(radius: float = 1.0) -> Embedded:
    """Round sphere of the given radius in R^3."""
    R = float(radius)

    def c(z):
        return 0.5 * (np.sum(np.asarray(z) ** 2, axis=-1) - R * R)

    def gc(z):
        return np.asarray(z, dtype=float)

    def hc(z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(np.eye(3), z.shape[:-1] + (3, 3))

    def proj(z):
        z = np.asarray(z, dtype=float)
        return R * z / np.linalg.norm(z, axis=-1, keepdims=True)

    def proj_jac(y):
        y = np.asarray(y, dtype=float)
        r = np.linalg.norm(y, axis=-1, keepdims=True)
        u = y / r
        return R * (np.eye(3) - u[..., :, None] * u[..., None, :]) / r[..., None]

    m = Embedded(3, c, gc, hc, project=proj, project_jacobian=proj_jac, name="sphere", coords=("x", "y", "z"))
    m.radius = R
    return m


def sample_points(m: Manifold, n: int, box=None, rng=None) -> np.ndarray:
    """Uniform points in a chart box (chart) or on the surface (embedded).

    The default box spans one period of each periodic coordinate and ``[-5, 5]``
    on the others.
    """
    rng = np.random.default_rng(rng)
    if m.representation == "Embedded":
        z = rng.normal(size=(n, m.ambient_dim))
        return m.project(z)
    if box is None:
        box = [[0.0, p] if p > 0 else [-5.0, 5.0] for p in m.periods]
    box = np.asarray(box, dtype=float)
    return box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random((n, m.dim))

"""Discrete loop space: loops ``(x, T)``, the free-period action and its gradient.

A loop is ``N`` samples ``x_0 .. x_{N-1}`` on the uniform grid ``s = i/N`` of
the parameter circle together with a period ``T``.  On a periodic chart the
samples live in the universal cover and close up as
``x_N = x_0 + lattice_offset(winding)``.

The action is discretised with midpoints and forward differences,

    S_k = sum_i (T/N) L(m_i, v_i) + k T,   m_i = (x_i + x_{i+1})/2,
                                           v_i = N (x_{i+1} - x_i) / T,

and :func:`differential` is its exact gradient (not a discretisation of the
continuous formula), so flows built on it decrease the discrete action.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .geometry import Manifold, chart_distance
from .lagrangian import Lagrangian


class LoopError(ValueError):
    pass


class MetricSolveError(LoopError):
    pass


SURFACE_TOL = 1e-10


def _is_embedded(m: Manifold) -> bool:
    return m.representation == "Embedded"


@dataclass(frozen=True, eq=False)
class Loop:
    manifold: Manifold
    samples: np.ndarray
    T: float
    winding: tuple = ()

    def __post_init__(self):
        x = np.array(self.samples, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        m = self.manifold
        T = float(self.T)
        object.__setattr__(self, "T", T)
        if not np.isfinite(T) or T <= 0:
            raise LoopError(f"period must be positive, got {T}")
        if x.ndim != 2 or x.shape[0] < 8:
            raise LoopError("a loop needs at least 8 samples, shaped (N, n)")
        if not np.all(np.isfinite(x)):
            raise LoopError("non-finite loop samples")
        if _is_embedded(m):
            if x.shape[1] != m.ambient_dim:
                raise LoopError(f"samples must have {m.ambient_dim} ambient coordinates")
            err = float(np.max(m.surface_error(x)))
            if err > SURFACE_TOL:
                raise LoopError(f"samples leave the surface by {err:.3e}")
            object.__setattr__(self, "winding", ())
            return
        if x.shape[1] != m.dim:
            raise LoopError(f"samples must have {m.dim} coordinates")
        w = tuple(int(v) for v in np.asarray(self.winding, dtype=int).reshape(-1))
        if not w:
            w = (0,) * m.periodic_axes.size
        if len(w) != m.periodic_axes.size:
            raise LoopError(f"winding needs {m.periodic_axes.size} entries")
        object.__setattr__(self, "winding", w)
        steps = np.diff(self.closed_samples(), axis=0)
        for ax in m.periodic_axes:
            if np.max(np.abs(steps[:, ax])) >= 0.5 * m.periods[ax]:
                raise LoopError("consecutive samples more than half a period apart; winding is ambiguous")

    # -- constructors -------------------------------------------------------
    @classmethod
    def constant(cls, m: Manifold, x0, T: float, N: int = 64) -> "Loop":
        x0 = np.asarray(x0, dtype=float)
        return cls(m, np.tile(x0, (N, 1)), T)

    @classmethod
    def from_function(cls, m: Manifold, fn: Callable, T: float, N: int = 64, winding=()) -> "Loop":
        """Sample ``fn(s)`` on ``s = i/N``; embedded samples are projected."""
        s = np.arange(N) / N
        x = np.asarray(fn(s), dtype=float)
        if _is_embedded(m):
            x = m.project(x)
        return cls(m, x, T, tuple(winding))

    def replace(self, samples=None, T=None) -> "Loop":
        return Loop(
            self.manifold,
            self.samples if samples is None else samples,
            self.T if T is None else T,
            self.winding,
        )

    # -- geometry of the discretisation --------------------------------------
    @property
    def N(self) -> int:
        return self.samples.shape[0]

    @property
    def offset(self) -> np.ndarray:
        if _is_embedded(self.manifold) or not self.winding:
            return np.zeros(self.samples.shape[1])
        return self.manifold.lattice_offset(self.winding)

    def closed_samples(self) -> np.ndarray:
        return np.vstack([self.samples, self.samples[:1] + self.offset])

    def steps(self) -> np.ndarray:
        return np.diff(self.closed_samples(), axis=0)

    def midpoints(self) -> np.ndarray:
        c = self.closed_samples()
        return 0.5 * (c[:-1] + c[1:])

    def velocities(self) -> np.ndarray:
        return self.steps() * (self.N / self.T)

    def sample_velocities(self) -> np.ndarray:
        """Centred velocities at the samples themselves."""
        c = self.closed_samples()
        prev = np.vstack([c[-2:-1] - self.offset, c[:-2]])
        return (c[1:] - prev) * (self.N / (2.0 * self.T))

    def rotated(self, shift: int) -> "Loop":
        """Same closed curve with the sample index shifted by ``shift``."""
        shift = shift % self.N
        c = self.closed_samples()
        x = np.vstack([c[shift:-1], c[:shift] + self.offset])
        return self.replace(samples=x)

    # -- serialisation --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "T": self.T,
            "winding": list(self.winding),
            "samples": self.samples.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, m: Manifold, data: dict) -> "Loop":
        try:
            samples = np.asarray(data["samples"], dtype=float)
            T = float(data["T"])
            winding = tuple(data.get("winding", ()))
        except (KeyError, TypeError, ValueError) as exc:
            raise LoopError(f"malformed loop record: {exc}") from None
        if "N" in data and int(data["N"]) != samples.shape[0]:
            raise LoopError("declared N does not match the sample count")
        return cls(m, samples, T, winding)

    def to_csv(self, L: Lagrangian) -> str:
        """Columns ``t, <coords>, speed, energy`` at every sample."""
        v = self.sample_velocities()
        speed = L.metric_norm(self.samples, v)
        energy = L.energy(self.samples, v)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", *self.manifold.coords, "speed", "energy"])
        t = self.T * np.arange(self.N) / self.N
        for i in range(self.N):
            w.writerow([repr(float(t[i])), *(repr(float(c)) for c in self.samples[i]), repr(float(speed[i])), repr(float(energy[i]))])
        return buf.getvalue()


@dataclass
class LoopTangent:
    """Variation ``(xi, alpha)``: one vector per sample plus a period change."""

    xi: np.ndarray
    alpha: float

    def __add__(self, other: "LoopTangent") -> "LoopTangent":
        return LoopTangent(self.xi + other.xi, self.alpha + other.alpha)

    def __mul__(self, c: float) -> "LoopTangent":
        return LoopTangent(c * self.xi, c * self.alpha)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


@dataclass
class LoopCovector:
    """Differential ``(dS/dx_i, dS/dT)``; pairs with a :class:`LoopTangent`."""

    dx: np.ndarray
    dT: float

    def pair(self, t: LoopTangent) -> float:
        return float(np.sum(self.dx * t.xi) + self.dT * t.alpha)


@dataclass
class PathOfLoops:
    loops: list
    s: np.ndarray = field(default=None)

    def __post_init__(self):
        if not self.loops:
            raise LoopError("a path needs at least one loop")
        N = self.loops[0].N
        w = self.loops[0].winding
        for lp in self.loops:
            if lp.N != N:
                raise LoopError("all loops on a path must share N")
            if lp.winding != w:
                raise LoopError("all loops on a path must share the homotopy class")
        if self.s is None:
            self.s = np.linspace(0.0, 1.0, len(self.loops))
        self.s = np.asarray(self.s, dtype=float)
        if self.s.shape != (len(self.loops),) or np.any(np.diff(self.s) <= 0):
            raise LoopError("path parameters must increase strictly")

    def __len__(self):
        return len(self.loops)

    def __getitem__(self, i):
        return self.loops[i]


# -- action and differential ---------------------------------------------------

def _check_pair(L: Lagrangian, loop: Loop):
    if loop.manifold is not L.manifold:
        raise LoopError("loop and Lagrangian live on different manifolds")


def action(L: Lagrangian, k: float, loop: Loop) -> float:
    _check_pair(L, loop)
    vals = L.eval_L(loop.midpoints(), loop.velocities())
    return float(loop.T * np.mean(vals) + k * loop.T)


def differential(L: Lagrangian, k: float, loop: Loop) -> LoopCovector:
    """Exact gradient of the discrete action in ``(x_0 .. x_{N-1}, T)``.

    For embedded loops the position part is projected to the tangent spaces.
    """
    _check_pair(L, loop)
    N, T = loop.N, loop.T
    m, v = loop.midpoints(), loop.velocities()
    Lx = L.eval_Lx(m, v)
    Lv = L.eval_Lv(m, v)
    E = np.sum(Lv * v, axis=-1) - L.eval_L(m, v)
    Lx_prev = np.roll(Lx, 1, axis=0)
    Lv_prev = np.roll(Lv, 1, axis=0)
    dx = (T / (2.0 * N)) * (Lx_prev + Lx) + (Lv_prev - Lv)
    if _is_embedded(loop.manifold):
        dx = np.einsum("nij,nj->ni", loop.manifold.tangent_projector(loop.samples), dx)
    return LoopCovector(dx, float(np.mean(k - E)))


# -- the product metric --------------------------------------------------------

_FLAT_CACHE: dict = {}


class LoopMetric:
    """Discrete product metric ``alpha beta + <xi(0), eta(0)> + int <D xi, D eta>`` at a loop.

    ``D`` is the covariant difference
    ``N (xi_{i+1} - xi_i) + Gamma(m_i)[x'_i, (xi_i + xi_{i+1})/2]`` on charts
    and the tangentially projected plain difference on embedded manifolds.
    """

    def __init__(self, loop: Loop):
        self.loop = loop
        m = loop.manifold
        self.embedded = _is_embedded(m)
        N = loop.N
        if self.embedded:
            self.frames = m.tangent_basis(loop.samples)  # (N, n, d)
            self.block = m.dim
        else:
            self.frames = None
            self.block = m.dim
        key = None
        if not self.embedded and getattr(m, "flat", False):
            g0 = np.asarray(m.metric(loop.samples[0]))
            key = (N, self.block, g0.tobytes())
            cached = _FLAT_CACHE.get(key)
            if cached is not None:
                self.matrix, self._lu = cached
                return
        self.matrix = self._assemble()
        try:
            self._lu = splinalg.splu(self.matrix.tocsc())
        except RuntimeError as exc:
            raise MetricSolveError(f"loop-space metric is singular ({exc}); {self._worst_block()}") from None
        if key is not None:
            if len(_FLAT_CACHE) > 64:
                _FLAT_CACHE.clear()
            _FLAT_CACHE[key] = (self.matrix, self._lu)

    def _difference_blocks(self):
        """Blocks ``A_i, B_i`` with ``D_i xi = A_i c_i + B_i c_{i+1}`` in block coordinates."""
        loop = self.loop
        m = loop.manifold
        N = loop.N
        if self.embedded:
            mid = loop.midpoints()
            P = m.tangent_projector(mid)
            E = self.frames
            E_next = np.roll(E, -1, axis=0)
            A = -N * np.einsum("nij,njk->nik", P, E)
            B = N * np.einsum("nij,njk->nik", P, E_next)
            G = np.broadcast_to(np.eye(m.ambient_dim), P.shape)
            return A, B, G
        d = m.dim
        mid = loop.midpoints()
        g = m.metric(mid)
        eye = np.eye(d)
        if m.flat:
            A = np.broadcast_to(-N * eye, (N, d, d))
            B = np.broadcast_to(N * eye, (N, d, d))
        else:
            Gam = m.christoffel(mid)
            xdot = N * loop.steps()
            C = np.einsum("nkij,ni->nkj", Gam, xdot)
            A = -N * eye + 0.5 * C
            B = N * eye + 0.5 * C
        return A, B, g

    def _assemble(self):
        loop = self.loop
        N, b = loop.N, self.block
        A, B, g = self._difference_blocks()
        gA = np.einsum("nij,njk->nik", g, A)
        gB = np.einsum("nij,njk->nik", g, B)
        AA = np.einsum("nji,njk->nik", A, gA) / N
        AB = np.einsum("nji,njk->nik", A, gB) / N
        BB = np.einsum("nji,njk->nik", B, gB) / N
        idx = np.arange(b)
        i = np.arange(N)
        j = (i + 1) % N
        if self.embedded:
            base = np.eye(b)
        else:
            base = np.asarray(self.loop.manifold.metric(self.loop.samples[0]))
        bi = np.concatenate([i, j, i, j, [0]])
        bj = np.concatenate([i, j, j, i, [0]])
        blocks = np.concatenate([AA, BB, AB, np.swapaxes(AB, 1, 2), base[None]])
        rows = (bi[:, None, None] * b + idx[None, :, None]) + 0 * idx[None, None, :]
        cols = (bj[:, None, None] * b + idx[None, None, :]) + 0 * idx[None, :, None]
        M = sparse.coo_matrix((blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(N * b, N * b))
        return M.tocsr()

    def _worst_block(self) -> str:
        loop = self.loop
        steps = np.linalg.norm(loop.steps(), axis=-1)
        i = int(np.argmin(steps))
        return f"smallest step at block {i} (|dx| = {steps[i]:.3e})"

    # -- coordinates ---------------------------------------------------------
    def _to_coords(self, xi):
        xi = np.asarray(xi, dtype=float)
        if self.embedded:
            return np.einsum("nia,ni->na", self.frames, xi).reshape(-1)
        return xi.reshape(-1)

    def _from_coords(self, c):
        c = c.reshape(self.loop.N, self.block)
        if self.embedded:
            return np.einsum("nia,na->ni", self.frames, c)
        return c

    def inner(self, a: LoopTangent, b: LoopTangent) -> float:
        ca, cb = self._to_coords(a.xi), self._to_coords(b.xi)
        return float(ca @ (self.matrix @ cb) + a.alpha * b.alpha)

    def norm(self, a: LoopTangent) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    def riesz(self, dS: LoopCovector) -> LoopTangent:
        rhs = self._to_coords(dS.dx)
        if not np.any(rhs) and dS.dT == 0:
            return LoopTangent(np.zeros_like(np.asarray(dS.dx, dtype=float)), 0.0)
        sol = self._lu.solve(rhs)
        if not np.all(np.isfinite(sol)):
            raise MetricSolveError(f"non-finite Riesz solve; {self._worst_block()}")
        return LoopTangent(self._from_coords(sol), float(dS.dT))


def riesz_gradient(loop: Loop, dS: LoopCovector) -> LoopTangent:
    return LoopMetric(loop).riesz(dS)


def gradient(L: Lagrangian, k: float, loop: Loop):
    """``(S_k, dS_k, grad S_k, |grad S_k|)`` at ``loop``."""
    S = action(L, k, loop)
    dS = differential(L, k, loop)
    metric = LoopMetric(loop)
    g = metric.riesz(dS)
    return S, dS, g, float(np.sqrt(max(dS.pair(g), 0.0)))


# -- lengths and distances -----------------------------------------------------

def length(loop: Loop) -> float:
    m = loop.manifold
    steps = loop.steps()
    if _is_embedded(m):
        return float(np.sum(np.linalg.norm(steps, axis=-1)))
    g = m.metric(loop.midpoints())
    return float(np.sum(np.sqrt(np.einsum("ni,nij,nj->n", steps, g, steps))))


def loop_difference(a: Loop, b: Loop) -> np.ndarray:
    """``b - a`` samplewise, with a common lattice shift removed on charts."""
    if a.N != b.N:
        raise LoopError("loops must share N")
    d = b.samples - a.samples
    m = a.manifold
    if not _is_embedded(m) and m.periodic_axes.size:
        shift = d[0] - m.wrap_difference(d[0])
        d = d - shift
    return d


def path_speed(p: PathOfLoops) -> float:
    """Largest product-metric norm of the difference quotients along ``p``."""
    if len(p) < 2:
        return 0.0
    best = 0.0
    for j in range(len(p) - 1):
        a, b = p[j], p[j + 1]
        ds = p.s[j + 1] - p.s[j]
        xi = loop_difference(a, b) / ds
        if _is_embedded(a.manifold):
            xi = np.einsum("nij,nj->ni", a.manifold.tangent_projector(a.samples), xi)
        t = LoopTangent(xi, (b.T - a.T) / ds)
        best = max(best, LoopMetric(a).norm(t))
    return best


def loop_set_distance(a: Loop, b: Loop) -> float:
    """``max_t`` of the chart distance between corresponding samples."""
    if a.N != b.N:
        raise LoopError("loops must share N")
    return float(np.max(chart_distance(a.manifold, a.samples, b.samples)))


def homotopy_class(loop: Loop) -> tuple:
    if _is_embedded(loop.manifold):
        raise LoopError("homotopy classes are only tracked on periodic charts")
    return tuple(loop.winding)


def resample(loop: Loop, N: int) -> Loop:
    """Periodic linear interpolation to ``N`` samples."""
    c = loop.closed_samples()
    s_old = np.arange(loop.N + 1) / loop.N
    s_new = np.arange(N) / N
    x = np.stack([np.interp(s_new, s_old, c[:, j]) for j in range(c.shape[1])], axis=-1)
    if _is_embedded(loop.manifold):
        x = loop.manifold.project(x)
    return Loop(loop.manifold, x, loop.T, loop.winding)


def resample_fourier(loop: Loop, N: int) -> Loop:
    """Trigonometric interpolation to ``N`` samples (smooth loops stay smooth)."""
    n0 = loop.N
    off = loop.offset
    s0 = np.arange(n0) / n0
    periodic = loop.samples - s0[:, None] * off
    F = np.fft.rfft(periodic, axis=0)
    G = np.zeros((N // 2 + 1, F.shape[1]), dtype=complex)
    keep = min(F.shape[0], G.shape[0])
    G[:keep] = F[:keep]
    if n0 % 2 == 0 and keep == F.shape[0] and N > n0:
        G[keep - 1] *= 0.5
    x = np.fft.irfft(G, n=N, axis=0) * (N / n0)
    x = x + (np.arange(N) / N)[:, None] * off
    if _is_embedded(loop.manifold):
        x = loop.manifold.project(x)
    return Loop(loop.manifold, x, loop.T, loop.winding)


def action_terms(L: Lagrangian, loop: Loop) -> np.ndarray:
    """Per-interval energies ``E_L(m_i, v_i)``."""
    m, v = loop.midpoints(), loop.velocities()
    return L.energy(m, v)


__all__: Sequence[str] = [
    "Loop",
    "LoopTangent",
    "LoopCovector",
    "PathOfLoops",
    "LoopMetric",
    "LoopError",
    "MetricSolveError",
    "action",
    "differential",
    "riesz_gradient",
    "gradient",
    "length",
    "path_speed",
    "loop_set_distance",
    "homotopy_class",
    "resample",
    "resample_fourier",
]

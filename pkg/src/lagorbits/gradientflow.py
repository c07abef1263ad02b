"""Negative gradient flows of the action on the discrete loop space.

Two vector fields are provided:

* ``rescaled``:   V = -grad S / sqrt(1 + |grad S|^2)            (|V| < 1)
* ``truncated``:  V = -rho(S) grad S / sqrt(1 + |grad S|^2)     (|V| <= tau)

where ``rho`` rises smoothly from 0 at ``cutoff_low`` to ``tau`` at
``cutoff_high``.  :func:`evolve` integrates either field with a classical
Runge-Kutta scheme in ``(x, log T)`` and never accepts a step that raises the
action.  :func:`polish` is a Newton solver for the discrete critical-point
equation used to finish off flow output.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from dataclasses import field as _dcfield
from typing import Callable

import numpy as np

from .lagrangian import Lagrangian
from .loopspace import Loop, LoopError, LoopTangent, differential, gradient, action

KINDS = ("rescaled", "truncated")
VERDICTS = ("converged", "period_collapse", "period_blowup", "escaped", "budget")
SLACK = 1e-12


class FlowError(ValueError):
    pass


class IntegrationStall(RuntimeError):
    def __init__(self, message: str, record: "PSRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class FlowConfig:
    kind: str = "rescaled"
    tau: float = 1.0
    cutoff_low: float = 0.0
    cutoff_high: float = 1.0
    step: float = 0.05
    max_time: float = math.inf
    box: np.ndarray | None = None
    gradient_tol: float = 1e-10
    min_step: float = 1e-14
    max_step: float = 10.0
    period_min: float = 0.0
    period_max: float = math.inf

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FlowError(f"kind must be one of {KINDS}")
        if not self.tau > 0:
            raise FlowError("tau must be positive")
        if self.kind == "truncated" and not (0 <= self.cutoff_low < self.cutoff_high):
            raise FlowError("need 0 <= cutoff_low < cutoff_high")
        if not self.step > 0:
            raise FlowError("step must be positive")
        if self.box is not None:
            self.box = np.asarray(self.box, dtype=float)

    @classmethod
    def truncated_at(cls, level: float, tau: float = 1.0, **kw) -> "FlowConfig":
        """Cutoffs ``level/4`` and ``level/2`` for a positive level estimate."""
        if level <= 0:
            raise FlowError("truncation level must be positive")
        return cls(kind="truncated", tau=tau, cutoff_low=level / 4.0, cutoff_high=level / 2.0, **kw)


def _smoothstep(u):
    u = min(max(u, 0.0), 1.0)
    return u * u * u * (10.0 + u * (-15.0 + 6.0 * u))


def rho(cfg: FlowConfig, S: float) -> float:
    if cfg.kind == "rescaled":
        return 1.0
    return cfg.tau * _smoothstep((S - cfg.cutoff_low) / (cfg.cutoff_high - cfg.cutoff_low))


@dataclass
class _Eval:
    loop: Loop
    S: float
    grad_norm: float
    V: LoopTangent
    rate: float


def _evaluate(cfg: FlowConfig, L: Lagrangian, k: float, loop: Loop) -> _Eval:
    S, _, g, gn = gradient(L, k, loop)
    c = rho(cfg, S) / math.sqrt(1.0 + gn * gn)
    return _Eval(loop, S, gn, g * (-c), c * gn * gn)


def field(cfg: FlowConfig, L: Lagrangian, k: float, loop: Loop) -> LoopTangent:
    return _evaluate(cfg, L, k, loop).V


@dataclass
class PSRecord:
    times: list = _dcfield(default_factory=list)
    actions: list = _dcfield(default_factory=list)
    grad_norms: list = _dcfield(default_factory=list)
    periods: list = _dcfield(default_factory=list)
    excursions: list = _dcfield(default_factory=list)
    rates: list = _dcfield(default_factory=list)
    verdict: str = "budget"

    def append(self, t, ev: _Eval, excursion: float):
        self.add(t, ev.S, ev.grad_norm, ev.loop.T, excursion, ev.rate)

    def add(self, t, S, grad_norm, T, excursion=0.0, rate=0.0):
        self.times.append(float(t))
        self.actions.append(float(S))
        self.grad_norms.append(float(grad_norm))
        self.periods.append(float(T))
        self.excursions.append(float(excursion))
        self.rates.append(float(rate))

    def __len__(self):
        return len(self.actions)

    def extend(self, other: "PSRecord", time_offset: float = 0.0):
        start = 1 if self.actions and other.actions else 0
        self.times += [t + time_offset for t in other.times[start:]]
        for name in ("actions", "grad_norms", "periods", "excursions", "rates"):
            getattr(self, name).extend(getattr(other, name)[start:])
        self.verdict = other.verdict

    def is_monotone(self, slack: float = SLACK) -> bool:
        a = np.asarray(self.actions)
        return bool(np.all(np.diff(a) <= slack)) if a.size > 1 else True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "time", "action", "grad_norm", "T", "excursion"])
        for i in range(len(self)):
            w.writerow(
                [i, repr(self.times[i]), repr(self.actions[i]), repr(self.grad_norms[i]), repr(self.periods[i]), repr(self.excursions[i])]
            )
        return buf.getvalue()


def _outside(box, x) -> bool:
    if box is None:
        return False
    return bool(np.any(x < box[:, 0]) or np.any(x > box[:, 1]))


def _shift(loop: Loop, base: Loop, dx, dlogT) -> Loop:
    x = base.samples + dx
    if loop.manifold.representation == "Embedded":
        x = loop.manifold.project(x)
    T = base.T * math.exp(dlogT)
    return base.replace(samples=x, T=T)


def evolve(
    cfg: FlowConfig,
    L: Lagrangian,
    k: float,
    loop: Loop,
    duration: float,
    callback: Callable | None = None,
    max_steps: int = 200_000,
):
    """Flow ``loop`` for ``duration`` (capped by ``cfg.max_time``).

    Returns ``(final_loop, PSRecord)``.  A step is rejected and halved when the
    action would increase by more than ``1e-12``; it is doubled when the
    realised decrease matches the first-order prediction within 20 %.
    ``callback(t, loop)`` is invoked after every accepted step.
    """
    if duration < 0:
        raise FlowError("duration must be non-negative")
    duration = min(duration, cfg.max_time)
    rec = PSRecord()
    x_start = loop.samples.copy()
    cur = _evaluate(cfg, L, k, loop)
    t = 0.0
    rec.append(t, cur, 0.0)
    if _outside(cfg.box, loop.samples):
        rec.verdict = "escaped"
        return loop, rec
    h = min(cfg.step, cfg.max_step)
    steps = 0
    while True:
        if cur.grad_norm < cfg.gradient_tol:
            rec.verdict = "converged"
            break
        if cur.loop.T < cfg.period_min:
            rec.verdict = "period_collapse"
            break
        if cur.loop.T > cfg.period_max:
            rec.verdict = "period_blowup"
            break
        if t >= duration * (1 - 1e-15) or steps >= max_steps:
            rec.verdict = "budget"
            break
        if cur.rate == 0.0:
            # rho vanishes: the loop is a fixed point for the rest of the run
            t = duration
            rec.append(t, cur, rec.excursions[-1])
            rec.verdict = "budget"
            break
        hs = min(h, duration - t)
        try:
            new = _rk4(cfg, L, k, cur, hs)
        except (LoopError, FloatingPointError, np.linalg.LinAlgError, OverflowError, ValueError):
            new = None
        if new is None or not new.S <= cur.S + SLACK:
            h = 0.5 * hs
            if h < cfg.min_step:
                rec.verdict = "budget"
                raise IntegrationStall(f"step fell below {cfg.min_step:g} at t={t:.6g}", rec)
            continue
        predicted = hs * cur.rate
        ratio = (cur.S - new.S) / predicted if predicted > 0 else 1.0
        t += hs
        steps += 1
        cur = new
        exc = float(np.max(np.linalg.norm(cur.loop.samples - x_start, axis=-1)))
        rec.append(t, cur, exc)
        if callback is not None:
            callback(t, cur.loop)
        if _outside(cfg.box, cur.loop.samples):
            rec.verdict = "escaped"
            break
        if 0.8 <= ratio <= 1.2:
            h = min(2.0 * hs, cfg.max_step)
        elif ratio < 0.3:
            h = 0.5 * hs
        else:
            h = hs
    return cur.loop, rec


def _rk4(cfg, L, k, cur: _Eval, h: float) -> _Eval:
    base = cur.loop

    def rhs(ev: _Eval):
        return ev.V.xi, ev.V.alpha / ev.loop.T

    k1 = rhs(cur)
    e2 = _evaluate(cfg, L, k, _shift(base, base, 0.5 * h * k1[0], 0.5 * h * k1[1]))
    k2 = rhs(e2)
    e3 = _evaluate(cfg, L, k, _shift(base, base, 0.5 * h * k2[0], 0.5 * h * k2[1]))
    k3 = rhs(e3)
    e4 = _evaluate(cfg, L, k, _shift(base, base, h * k3[0], h * k3[1]))
    k4 = rhs(e4)
    dx = (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    dl = (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return _evaluate(cfg, L, k, _shift(base, base, dx, dl))


# -- Palais-Smale diagnostics -------------------------------------------------

@dataclass
class PSVerdict:
    verdict: str
    consistent: bool
    message: str = ""


def ps_classify(rec: PSRecord, D1: float, D2: float, gradient_tol: float, level_tol: float = 1e-3) -> PSVerdict:
    """Classify the tail of a flow record.

    A period collapse is only consistent when the action tends to zero: a
    sequence with small gradient and periods going to zero has level ``0``.
    """
    if not len(rec):
        raise FlowError("empty record")
    T = rec.periods[-1]
    g = rec.grad_norms[-1]
    S = rec.actions[-1]
    if T < D1:
        ok = abs(S) < level_tol
        msg = "" if ok else f"period collapsed at level {S:.6g}; discretisation suspected"
        return PSVerdict("period_collapse", ok, msg)
    if T > D2:
        return PSVerdict("period_blowup", True, f"T={T:.6g} exceeds {D2:g}")
    if g < gradient_tol:
        return PSVerdict("converged", True)
    if rec.verdict == "escaped":
        return PSVerdict("escaped", True)
    return PSVerdict("budget", True, f"gradient {g:.3e} above {gradient_tol:g}")


# -- Newton polish ------------------------------------------------------------

@dataclass
class PolishInfo:
    iterations: int
    residual: float
    converged: bool
    history: list


def _coloring(N: int) -> int:
    for c in range(3, N + 1):
        if N % c == 0:
            return c
    return N


class _Coords:
    """Flat coordinates ``(positions, T)`` around a base loop."""

    def __init__(self, loop: Loop):
        self.base = loop
        m = loop.manifold
        self.embedded = m.representation == "Embedded"
        self.N = loop.N
        if self.embedded:
            self.E = m.tangent_basis(loop.samples)
            self.b = m.dim
        else:
            self.b = m.dim
        self.n = self.N * self.b + 1

    def loop(self, z) -> Loop:
        a = z[:-1].reshape(self.N, self.b)
        if self.embedded:
            y = self.base.samples + np.einsum("nia,na->ni", self.E, a)
            x = self.base.manifold.project(y)
        else:
            x = self.base.samples + a
        return self.base.replace(samples=x, T=z[-1])

    def grad(self, L, k, z) -> np.ndarray:
        lp = self.loop(z)
        dS = differential(L, k, lp)
        if self.embedded:
            a = z[:-1].reshape(self.N, self.b)
            y = self.base.samples + np.einsum("nia,na->ni", self.E, a)
            J = self.base.manifold.project_jacobian(y)
            gx = np.einsum("nji,nj->ni", J, dS.dx)
            gx = np.einsum("nia,ni->na", self.E, gx)
        else:
            gx = dS.dx
        return np.concatenate([gx.reshape(-1), [dS.dT]])

    def z0(self) -> np.ndarray:
        z = np.zeros(self.n)
        z[-1] = self.base.T
        return z


def _hessian(coords: _Coords, L, k, z, h=1e-5) -> np.ndarray:
    N, b, n = coords.N, coords.b, coords.n
    H = np.zeros((n, n))
    c = _coloring(N)
    idx = np.arange(N)
    for color in range(c):
        members = idx[idx % c == color]
        for comp in range(b):
            e = np.zeros(n)
            e[members * b + comp] = h
            dG = (coords.grad(L, k, z + e) - coords.grad(L, k, z - e)) / (2 * h)
            dGx = dG[:-1].reshape(N, b)
            for j in members:
                for nb in ((j - 1) % N, j, (j + 1) % N):
                    H[nb * b : (nb + 1) * b, j * b + comp] = dGx[nb]
    hT = h * max(1.0, abs(z[-1]))
    e = np.zeros(n)
    e[-1] = hT
    col = (coords.grad(L, k, z + e) - coords.grad(L, k, z - e)) / (2 * hT)
    H[:, -1] = col
    H[-1, :] = col
    return 0.5 * (H + H.T)


def polish(
    L: Lagrangian,
    k: float,
    loop: Loop,
    tol: float = 1e-11,
    max_iter: int = 40,
    rcond: float = 1e-9,
) -> tuple[Loop, PolishInfo]:
    """Newton iteration on the discrete critical-point equation ``dS_k = 0``.

    The Hessian is built from central differences of the exact discrete
    gradient and inverted on the complement of its near-null space (symmetry
    directions such as translations or reparametrisations).  Each step is
    backtracked until the gradient norm decreases.
    """
    cur = loop
    hist = []
    for it in range(max_iter):
        co = _Coords(cur)
        z = co.z0()
        G = co.grad(L, k, z)
        r = float(np.linalg.norm(G))
        hist.append(r)
        if r < tol:
            return cur, PolishInfo(it, r, True, hist)
        H = _hessian(co, L, k, z)
        w, Q = np.linalg.eigh(H)
        keep = np.abs(w) > rcond * np.max(np.abs(w))
        step = -Q[:, keep] @ ((Q[:, keep].T @ G) / w[keep])
        lam = 1.0
        accepted = False
        while lam > 1e-6:
            zt = z + lam * step
            if zt[-1] > 0:
                try:
                    Gt = co.grad(L, k, zt)
                    if np.linalg.norm(Gt) < r * (1 - 1e-4 * lam):
                        cur = co.loop(zt)
                        accepted = True
                        break
                except (LoopError, FloatingPointError, ValueError):
                    pass
            lam *= 0.5
        if not accepted:
            return cur, PolishInfo(it, r, False, hist)
    co = _Coords(cur)
    r = float(np.linalg.norm(co.grad(L, k, co.z0())))
    hist.append(r)
    return cur, PolishInfo(max_iter, r, r < tol, hist)


def optimal_period(L: Lagrangian, k: float, loop: Loop, bounds=(1e-3, 1e3)) -> Loop:
    """Loop with its period replaced by the minimiser of ``T -> S_k(x, T)``.

    The root of the exact ``dS/dT`` is bracketed in ``bounds``; without a
    sign change the bounded scalar minimiser decides.
    """
    from scipy import optimize

    def dT(u):
        return differential(L, k, loop.replace(T=math.exp(u))).dT

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    if dT(lo) < 0 < dT(hi):
        u = optimize.brentq(dT, lo, hi, xtol=1e-14, rtol=1e-15)
        return loop.replace(T=math.exp(u))
    res = optimize.minimize_scalar(
        lambda u: action(L, k, loop.replace(T=math.exp(u))), bounds=(lo, hi), method="bounded", options={"xatol": 1e-10}
    )
    return loop.replace(T=math.exp(res.x))

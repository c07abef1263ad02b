"""Minimax engines: mountain pass, sweepout, class minimisation and the energy scan.

Paths and sweeps are handled by one string-method loop: flow every free node
with the truncated field (cutoffs at a quarter and a half of the current
level), push back nodes that wander into the collar of the confinement set,
redistribute nodes to equal product-metric spacing and take the highest node
as the current level.  The highest node is finally polished with Newton's
method at a finer resolution and certified.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .critvals import estimate_mu, find_negative_action_loop
from .gradientflow import (
    FlowConfig,
    IntegrationStall,
    PSRecord,
    evolve,
    optimal_period,
    polish,
    ps_classify,
)
from .lagrangian import Lagrangian, e0_estimate, estimate_growth_constants
from .loopspace import (
    Loop,
    LoopError,
    LoopMetric,
    LoopTangent,
    PathOfLoops,
    action,
    gradient,
    length,
    loop_difference,
    resample_fourier,
)
from .shrink import ShrinkMap, pushback
from .verify import OrbitCertificate, certify

__all__ = [
    "MinimaxError",
    "MountainPassProblem",
    "MinimaxResult",
    "BarrierEstimate",
    "BoxBallCover",
    "ScanRow",
    "ScanResult",
    "find_negative_action_loop",
    "mountain_pass",
    "struwe_scan",
    "barrier",
    "latitude_sweep",
    "sweepout_minimax",
    "class_minimize",
    "straight_path",
    "random_admissible_path",
]


class MinimaxError(RuntimeError):
    def __init__(self, message, record: PSRecord | None = None, node: int | None = None):
        super().__init__(message)
        self.record = record
        self.node = node


class MonotonicityAlarm(MinimaxError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


# -- barrier ------------------------------------------------------------------

@dataclass
class BoxBallCover:
    """Balls of ``radius`` centred on a grid of ``spacing`` over ``box``."""

    box: np.ndarray
    spacing: float
    radius: float

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float)
        d = self.box.shape[0]
        if not self.radius > 0.5 * self.spacing * math.sqrt(d):
            raise ValueError("balls do not cover the box: need radius > spacing * sqrt(d) / 2")

    def centers(self) -> np.ndarray:
        axes = [np.arange(lo, hi + 0.5 * self.spacing, self.spacing) for lo, hi in self.box]
        axes = [a if a[-1] >= hi else np.append(a, a[-1] + self.spacing) for a, (lo, hi) in zip(axes, self.box)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.box.shape[0])

    def lebesgue_number(self) -> float:
        """Every set of diameter below this lies in one ball (distance from a
        point to its nearest grid node is at most ``spacing sqrt(d) / 2``)."""
        return self.radius - 0.5 * self.spacing * math.sqrt(self.box.shape[0])


@dataclass
class BarrierEstimate:
    k: float
    A1: float
    e0: float
    mu: float
    mu_inf: float
    lebesgue_delta: float
    r: float
    a: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def barrier(
    L: Lagrangian,
    k: float,
    K,
    cover: BoxBallCover | None = None,
    vmax: float | None = None,
    n_loops: int = 200,
    rng=0,
) -> BarrierEstimate:
    """Level ``a > 0`` separating constant loops from negative-action loops.

    ``mu`` is the largest per-ball constant (``mu_inf`` the smallest is kept
    for reference); ``r = min(delta, sqrt(A1 (k - e0)) / (sqrt 2 mu))`` and
    ``a = sqrt(2 A1 (k - e0)) r - mu r^2``.
    """
    K = np.asarray(K, dtype=float)
    e0 = e0_estimate(L, K)
    if not k > e0:
        raise MinimaxError(f"barrier needs k > e0 (k={k}, e0={e0:.6g})")
    if cover is None:
        width = float(np.min(K[:, 1] - K[:, 0]))
        cover = BoxBallCover(K, width / 4.0, width / 4.0)
    vmax = vmax if vmax is not None else 2.0 * math.sqrt(2.0 * (k + 1.0 + max(0.0, -e0)))
    A1 = estimate_growth_constants(L, K, vmax).A1
    mus = [estimate_mu(L.manifold, L.theta, (c, cover.radius), n_loops=n_loops, rng=rng) for c in cover.centers()]
    mu, mu_inf = max(mus), min(mus)
    delta = cover.lebesgue_number()
    r = min(delta, math.sqrt(A1 * (k - e0)) / (math.sqrt(2.0) * mu))
    a = math.sqrt(2.0 * A1 * (k - e0)) * r - mu * r * r
    return BarrierEstimate(float(k), A1, e0, mu, mu_inf, delta, r, a)


# -- results ---------------------------------------------------------------------

@dataclass
class MinimaxResult:
    level: float
    loop: Loop
    ps: PSRecord
    k: float
    family_kind: str
    certificate: OrbitCertificate | None = None
    coarse_level: float = math.nan
    verdict: str = "converged"
    path: PathOfLoops | None = None
    checks: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family_kind": self.family_kind,
            "k": self.k,
            "level": self.level,
            "coarse_level": self.coarse_level,
            "verdict": self.verdict,
            "period": self.loop.T,
            "length": length(self.loop),
            "checks": self.checks,
            "notes": self.notes,
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
            "loop": self.loop.to_dict(),
            "ps": {
                "actions": self.ps.actions,
                "grad_norms": self.ps.grad_norms,
                "periods": self.ps.periods,
                "verdict": self.ps.verdict,
            },
        }


# -- string method ----------------------------------------------------------------

def _argmax(actions: Sequence[float], level_tol: float) -> int:
    a = np.asarray(actions)
    top = a.max()
    return int(np.flatnonzero(a >= top - level_tol)[0])


def _node_distance(a: Loop, b: Loop) -> float:
    xi = loop_difference(a, b)
    if a.manifold.representation == "Embedded":
        xi = np.einsum("nij,nj->ni", a.manifold.tangent_projector(a.samples), xi)
    return LoopMetric(a).norm(LoopTangent(xi, b.T - a.T))


def _interpolate(a: Loop, b: Loop, theta: float) -> Loop:
    x = a.samples + theta * loop_difference(a, b)
    if a.manifold.representation == "Embedded":
        x = a.manifold.project(x)
    return Loop(a.manifold, x, (1 - theta) * a.T + theta * b.T, a.winding)


def remesh(nodes: list) -> list:
    """Same number of nodes, equally spaced in the product metric, endpoints kept."""
    n = len(nodes)
    d = np.array([_node_distance(nodes[j], nodes[j + 1]) for j in range(n - 1)])
    if not np.all(np.isfinite(d)) or d.sum() == 0:
        return list(nodes)
    cum = np.concatenate([[0.0], np.cumsum(d)])
    targets = np.linspace(0.0, cum[-1], n)
    out = [nodes[0]]
    for t in targets[1:-1]:
        j = min(int(np.searchsorted(cum, t, side="right")) - 1, n - 2)
        theta = (t - cum[j]) / d[j] if d[j] > 0 else 0.0
        try:
            out.append(_interpolate(nodes[j], nodes[j + 1], float(theta)))
        except LoopError:
            out.append(nodes[j])
    out.append(nodes[-1])
    return out


@dataclass
class _StringSettings:
    tau: float = 1.0
    sweep_time: float = 0.5
    max_sweeps: int = 60
    level_tol: float = 1e-9
    coarse_tol: float = 1e-3
    stall_sweeps: int = 4
    flow_step: float = 0.05
    period_max: float = math.inf
    period_min: float = 0.0


def _string_method(L, k, nodes, fixed, shrink: ShrinkMap | None, st: _StringSettings, jobs: int = 1):
    nodes = list(nodes)
    acts = [action(L, k, lp) for lp in nodes]
    level = max(acts)
    if not level > 0:
        raise MinimaxError(f"family maximum {level:.6g} is not positive; no mountain-pass geometry")
    rec = PSRecord()
    i = _argmax(acts, st.level_tol)
    _, _, _, gn = gradient(L, k, nodes[i])
    rec.add(0, level, gn, nodes[i].T)
    free = [j for j in range(len(nodes)) if j not in fixed]
    stalls = 0
    for sweep in range(1, st.max_sweeps + 1):
        cfg = FlowConfig.truncated_at(level, tau=st.tau, step=st.flow_step, period_max=st.period_max, period_min=st.period_min)

        def flow(j):
            try:
                out, _ = evolve(cfg, L, k, nodes[j], st.sweep_time)
            except IntegrationStall:
                out = nodes[j]
            return out

        if jobs > 1:
            with ThreadPoolExecutor(jobs) as ex:
                moved = list(ex.map(flow, free))
        else:
            moved = [flow(j) for j in free]
        for j, lp in zip(free, moved):
            nodes[j] = lp
        if shrink is not None:
            for j in free:
                lp = nodes[j]
                if not np.all(shrink.in_K(lp.samples)):
                    raise MinimaxError(f"node {j} left the confinement set K", rec, j)
                if not np.all(shrink.in_K0(lp.samples)):
                    back = pushback(shrink, lp)
                    if action(L, k, back) > action(L, k, lp) + 1e-12:
                        raise MinimaxError(f"pushback raised the action of node {j}", rec, j)
                    nodes[j] = back
        nodes = remesh(nodes)
        acts = [action(L, k, lp) for lp in nodes]
        new_level = max(acts)
        i = _argmax(acts, st.level_tol)
        _, _, _, gn = gradient(L, k, nodes[i])
        exc = float(np.max(np.abs(nodes[i].samples)))
        rec.add(sweep, new_level, gn, nodes[i].T, exc)
        change = level - new_level
        level = new_level
        if not level > 0:
            raise MinimaxError("level dropped to zero or below during deformation", rec)
        if gn < st.coarse_tol:
            break
        stalls = stalls + 1 if change < 1e-8 * max(1.0, abs(level)) else 0
        if stalls >= st.stall_sweeps:
            break
    return nodes, acts, i, rec


def _finish(L, k, nodes, acts, i, rec, kind, method, N_polish, D1, D2, gradient_tol, tolerances=None):
    coarse = acts[i]
    cand = nodes[i]
    if N_polish and N_polish != cand.N:
        cand = resample_fourier(cand, N_polish)
    polished, info = polish(L, k, cand)
    S, _, _, gn = gradient(L, k, polished)
    rec.add(rec.times[-1] + 1 if rec.times else 0, S, gn, polished.T)
    v = ps_classify(rec, D1, D2, gradient_tol)
    rec.verdict = v.verdict
    if v.verdict == "period_collapse" and not v.consistent:
        raise MinimaxError(f"period collapse at positive level ({v.message})", rec)
    cert = certify(L, k, polished, method, tolerances)
    res = MinimaxResult(
        level=S,
        loop=polished,
        ps=rec,
        k=float(k),
        family_kind=kind,
        certificate=cert,
        coarse_level=coarse,
        verdict=v.verdict,
        path=PathOfLoops(nodes),
        notes={"polish_iterations": info.iterations, "polish_residual": info.residual, "argmax_node": i},
    )
    return res


# -- mountain pass ----------------------------------------------------------------

@dataclass
class MountainPassProblem:
    L: Lagrangian
    k: float
    family: PathOfLoops
    confinement: ShrinkMap | None = None
    tau: float = 1.0
    gradient_tol: float = 1e-8
    level_tol: float = 1e-9
    D1: float = 1e-3
    D2: float = 1e3
    sweep_time: float = 0.5
    max_sweeps: int = 60
    N_polish: int = 256
    period_max: float = math.inf
    tolerances: dict | None = None

    def __post_init__(self):
        if not isinstance(self.family, PathOfLoops):
            self.family = PathOfLoops(list(self.family))
        p0 = self.family[0]
        if np.ptp(p0.samples, axis=0).max() > 0:
            raise MinimaxError("the path must start at a constant loop")
        end = action(self.L, self.k, self.family[len(self.family) - 1])
        if not end < 0:
            raise MinimaxError(f"the path must end at a loop of negative action (got {end:.6g})")
        if self.confinement is not None:
            for j, lp in enumerate(self.family.loops):
                if not np.all(self.confinement.in_K(lp.samples)):
                    raise MinimaxError(f"path node {j} is not inside K", node=j)

    @classmethod
    def from_witness(cls, L, k, x0, witness: Loop, n_nodes: int = 16, T0: float = 0.05, **kw):
        """Straight path from the constant loop at ``x0`` (period ``T0``, action ``k T0``)."""
        return cls(L, k, straight_path(x0, witness, n_nodes, min(T0, witness.T)), **kw)

    @classmethod
    def search(cls, L, k, region, n_nodes: int = 16, N: int = 64, rng=0, **kw):
        """Build the standard path: constant loop at the centre of a circle witness."""
        w = find_negative_action_loop(L, k, region, N=N, rng=rng)
        if w is None:
            raise MinimaxError(f"no loop of negative action found at k={k}; no mountain-pass geometry")
        x0 = w.samples.mean(axis=0)
        return cls.from_witness(L, k, x0, w, n_nodes, **kw)


def straight_path(x0, witness: Loop, n_nodes: int = 16, T0: float | None = None) -> PathOfLoops:
    """Nodes ``(1 - s) x0 + s w`` with periods interpolated geometrically."""
    x0 = np.asarray(x0, dtype=float)
    T0 = witness.T if T0 is None else T0
    loops = []
    for s in np.linspace(0.0, 1.0, n_nodes):
        x = (1 - s) * x0 + s * witness.samples
        if witness.manifold.representation == "Embedded":
            x = witness.manifold.project(x)
        T = math.exp((1 - s) * math.log(T0) + s * math.log(witness.T))
        loops.append(Loop(witness.manifold, x, T, witness.winding))
    return PathOfLoops(loops)


def mountain_pass(p: MountainPassProblem, jobs: int = 1) -> MinimaxResult:
    st = _StringSettings(tau=p.tau, sweep_time=p.sweep_time, max_sweeps=p.max_sweeps, level_tol=p.level_tol, period_max=p.period_max)
    nodes, acts, i, rec = _string_method(p.L, p.k, p.family.loops, {0}, p.confinement, st, jobs)
    return _finish(p.L, p.k, nodes, acts, i, rec, "mountain_pass", "mountain_pass", p.N_polish, p.D1, p.D2, p.gradient_tol, p.tolerances)


def random_admissible_path(L: Lagrangian, k: float, box, rng, n_nodes: int = 40, N: int = 48) -> PathOfLoops:
    """Random path from a constant loop to a negative-action circle inside ``box``.

    Intermediate nodes are the straight interpolation with random smooth
    wiggles that vanish at both ends; periods follow a random monotone profile.
    """
    m = L.manifold
    box = np.asarray(box, dtype=float)
    lo, hi = box[:, 0], box[:, 1]
    center = 0.5 * (lo + hi) + 0.1 * (hi - lo) * rng.uniform(-1, 1, lo.size)
    room = float(np.min(np.minimum(center - lo, hi - center)))
    w = None
    for rad in np.linspace(0.95 * room, 0.3 * room, 12):
        for orient in (-1, 1):
            s = np.arange(N) / N
            x = np.tile(center, (N, 1))
            x[:, 0] += rad * np.cos(orient * 2 * np.pi * s)
            x[:, 1] += rad * np.sin(orient * 2 * np.pi * s)
            cand = optimal_period(L, k, Loop(m, x, 1.0))
            if action(L, k, cand) < 0:
                w = cand
                break
        if w is not None:
            break
    if w is None:
        raise MinimaxError("box too small for a negative-action circle")
    x0 = center + 0.3 * room * rng.uniform(-1, 1, lo.size)
    T0 = float(np.exp(rng.uniform(-2, 2)))
    svals = np.linspace(0.0, 1.0, n_nodes)
    warp = np.sort(rng.random(n_nodes - 2))
    tvals = np.concatenate([[0.0], warp, [1.0]])
    t = np.arange(N) / N
    amp = 0.15 * room * rng.normal(size=(3, 2, lo.size))
    loops = []
    for s_, tv in zip(svals, tvals):
        x = (1 - s_) * x0 + s_ * w.samples
        bump = math.sin(math.pi * s_) ** 2
        for j in range(3):
            x = x + bump * (np.outer(np.cos(2 * np.pi * (j + 1) * t), amp[j, 0]) + np.outer(np.sin(2 * np.pi * (j + 1) * t), amp[j, 1]))
        x = np.clip(x, lo, hi)
        T = math.exp((1 - tv) * math.log(T0) + tv * math.log(w.T))
        loops.append(Loop(m, x, T))
    return PathOfLoops(loops)


# -- Struwe scan --------------------------------------------------------------------

@dataclass
class ScanRow:
    k: float
    level: float
    refined: bool
    T: float
    passed: bool
    D2: float = math.nan
    period_ok: bool | None = None


@dataclass
class ScanResult:
    rows: list
    D: float
    tau: float
    monotone: bool
    quotients: list
    results: list = field(default_factory=list, repr=False)

    def to_csv(self) -> str:
        lines = ["k,c,refined,T,pass,D2,period_ok"]
        for r in self.rows:
            lines.append(f"{r.k!r},{r.level!r},{int(r.refined)},{r.T!r},{int(r.passed)},{r.D2!r},{'' if r.period_ok is None else int(r.period_ok)}")
        return "\n".join(lines) + "\n"


def struwe_scan(
    L: Lagrangian,
    k_min: float,
    k_max: float,
    grid_size: int,
    problem_factory: Callable[[float], MountainPassProblem],
    tau: float = 1.0,
    mono_tol: float = 1e-8,
    jobs: int = 1,
    strict: bool = True,
) -> ScanResult:
    """Mountain-pass levels on an energy grid, refined where ``c`` grows slowly.

    Where the one-sided difference quotient is below ``D = 2 median`` the
    run is repeated, warm-started from its own final path, with the flow
    periods capped at ``D + 2``; refined orbits must satisfy
    ``T <= D + 2 + tau``.
    """
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    if not k_min < k_max:
        raise ValueError("need k_min < k_max")
    ks = np.linspace(k_min, k_max, grid_size)

    def run(k):
        return mountain_pass(problem_factory(float(k)))

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(run, ks))
    else:
        results = [run(k) for k in ks]
    c = np.array([r.level for r in results])
    monotone = bool(np.all(np.diff(c) >= -mono_tol))
    q = np.diff(c) / np.diff(ks)
    q = np.append(q, q[-1])
    D = 2.0 * float(np.median(q))
    rows = []
    for k, r, qi in zip(ks, results, q):
        row = ScanRow(float(k), r.level, False, r.loop.T, bool(r.certificate and r.certificate.passed))
        if qi < D:
            base = problem_factory(float(k))
            base.family = r.path
            base.period_max = D + 2.0
            rr = mountain_pass(base)
            row = ScanRow(float(k), rr.level, True, rr.loop.T, bool(rr.certificate and rr.certificate.passed), D + 2.0, rr.loop.T <= D + 2.0 + tau)
        rows.append(row)
    out = ScanResult(rows, D, tau, monotone, q.tolist(), results)
    if strict and not monotone:
        raise MonotonicityAlarm("c(k) decreases beyond tolerance; discretisation alarm", out)
    return out


# -- sweepouts of the sphere ------------------------------------------------------

def latitude_sweep(m, k: float, n_nodes: int = 17, N: int = 64, T_pole: float = 0.05, perturb: float = 0.0, rng=None) -> list:
    """Latitude circles from pole to pole at their optimal periods.

    ``perturb`` adds a smooth random tilt that vanishes at the poles.
    """
    if m.representation != "Embedded" or m.ambient_dim != 3:
        raise ValueError("latitude sweeps are built on a sphere in R^3")
    R = getattr(m, "radius", 1.0)
    rng = np.random.default_rng(rng)
    s = np.arange(N) / N
    a = rng.normal(size=4) if perturb else np.zeros(4)
    nodes = []
    for th in np.linspace(0.0, np.pi, n_nodes):
        if th == 0.0 or th == np.pi:
            nodes.append(Loop.constant(m, [0.0, 0.0, R * math.cos(th)], T_pole, N))
            continue
        z = np.stack(
            [R * math.sin(th) * np.cos(2 * np.pi * s), R * math.sin(th) * np.sin(2 * np.pi * s), R * math.cos(th) * np.ones(N)], -1
        )
        if perturb:
            w = perturb * math.sin(th) ** 2
            z[:, 2] += w * R * (a[0] * np.cos(2 * np.pi * s) + a[1] * np.sin(4 * np.pi * s))
            z[:, 0] += w * R * a[2] * np.cos(4 * np.pi * s)
            z[:, 1] += w * R * a[3] * np.sin(2 * np.pi * s)
        lp = Loop(m, m.project(z), 1.0)
        ell = length(lp)
        nodes.append(lp.replace(T=max(ell / math.sqrt(2.0 * k), T_pole)) if k > 0 else lp)
    return nodes


def sweepout_minimax(
    L: Lagrangian,
    k: float,
    sweep: list,
    tau: float = 1.0,
    sweep_time: float = 0.5,
    max_sweeps: int = 60,
    N_polish: int = 256,
    gradient_tol: float = 1e-8,
    D1: float = 1e-3,
    D2: float = 1e3,
    region=None,
) -> MinimaxResult:
    """Deform a pole-to-pole sweep (poles fixed) and polish its highest loop.

    Checks recorded on the result: ``positive_level`` (the minimax value is
    positive), ``nonconstant`` (critical length at least half the initial
    family's largest length) and ``period_bound`` (the period exceeds the
    lower bound derived from the quadratic growth constants with
    ``A = level + 1`` and ``A3`` raised to at least ``2k + 1``).
    """
    nodes = list(sweep)
    l_init = max(length(lp) for lp in nodes)
    if l_init <= 1e-8:
        raise MinimaxError("sweep is degenerate: every loop is (nearly) constant")
    st = _StringSettings(tau=tau, sweep_time=sweep_time, max_sweeps=max_sweeps)
    nodes, acts, i, rec = _string_method(L, k, nodes, {0, len(nodes) - 1}, None, st)
    if max(length(lp) for lp in nodes) < 0.1 * l_init:
        raise MinimaxError("homotopy-loss alarm: the sweep collapsed to short loops", rec)
    res = _finish(L, k, nodes, acts, i, rec, "sweepout", "sweepout", N_polish, D1, D2, gradient_tol)
    m = L.manifold
    if region is None:
        R = getattr(m, "radius", 1.0)
        region = [[-R, R]] * m.ambient_dim
    gc = estimate_growth_constants(L, region, vmax=4.0 * math.sqrt(2.0 * max(k, 0.0) + 1.0))
    A = res.level + 1.0
    A3 = max(gc.A3, 2.0 * k + 1.0)
    ell = length(res.loop)
    T_low = (-A + math.sqrt(A * A + 4.0 * gc.A2 * (A3 - k) * ell * ell)) / (2.0 * (A3 - k))
    res.checks = {
        "positive_level": res.level > 0,
        "nonconstant": ell >= 0.5 * l_init,
        "period_bound": res.loop.T >= T_low,
    }
    res.notes.update({"initial_length": l_init, "period_lower_bound": T_low, "A2": gc.A2, "A3": A3})
    if not res.level > 0:
        raise MinimaxError("sweepout level is not positive", rec)
    return res


# -- class minimisation -------------------------------------------------------------

def _straight_class_loop(m, alpha, base, N, k, rng, wiggle=0.05):
    off = m.lattice_offset(alpha)
    s = np.arange(N) / N
    x = np.asarray(base, dtype=float) + np.outer(s, off)
    for j in (1, 2):
        x = x + wiggle * np.outer(np.sin(2 * np.pi * j * s + rng.uniform(0, 2 * np.pi)), rng.normal(size=m.dim))
    lp = Loop(m, x, 1.0, alpha)
    ell = length(lp)
    return lp.replace(T=ell / math.sqrt(2.0 * k) if k > 0 else 1.0)


def class_minimize(
    L: Lagrangian,
    k: float,
    alpha,
    seed: Loop | None = None,
    n_starts: int = 3,
    N: int = 64,
    rng=0,
    chunk_time: float = 2.0,
    max_time: float = 400.0,
    drift_radius: float = 5.0,
    switch_tol: float = 1e-3,
    cu_estimate: float = 0.0,
    D1: float = 1e-4,
    D2: float = 1e4,
    base_box=None,
) -> MinimaxResult:
    """Minimise ``S_k`` over loops of winding ``alpha``.

    Each start is flowed by the rescaled field in chunks of ``chunk_time``.
    When the gradient falls below ``switch_tol`` the loop is polished and
    certified.  A start *drifts* when the mean of its non-periodic
    coordinates leaves ``[-drift_radius, drift_radius]``; if every start
    drifts the result has verdict ``drift`` and no certificate.
    """
    m = L.manifold
    if m.representation != "PeriodicChart":
        raise MinimaxError("class minimisation needs a chart with periodic coordinates")
    alpha = tuple(int(a) for a in np.asarray(alpha).reshape(-1))
    if not any(alpha):
        raise MinimaxError("alpha must be a non-trivial class")
    rng = np.random.default_rng(rng)
    free_axes = [i for i in range(m.dim) if i not in set(m.periodic_axes.tolist())]
    starts = []
    if seed is not None:
        if tuple(seed.winding) != alpha:
            raise MinimaxError("seed loop is not in the requested class")
        starts.append(seed)
    box = np.asarray(base_box, dtype=float) if base_box is not None else np.array([[-0.5, 0.5]] * m.dim)
    while len(starts) < n_starts:
        base = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(m.dim)
        starts.append(_straight_class_loop(m, alpha, base, N, k, rng, wiggle=0.05 if starts or seed else 0.02))
    cfg = FlowConfig(kind="rescaled", step=0.05, gradient_tol=switch_tol, period_min=D1, period_max=D2)
    outcomes = []
    for st_loop in starts:
        lp = st_loop
        rec = PSRecord()
        means = [float(np.mean(lp.samples[:, free_axes])) if free_axes else 0.0]
        t = 0.0
        verdict = "budget"
        while t < max_time:
            trace = []

            def cb(_t, cur):
                if free_axes:
                    trace.append(float(np.mean(cur.samples[:, free_axes])))

            try:
                lp, r = evolve(cfg, L, k, lp, chunk_time, callback=cb)
            except IntegrationStall as exc:
                r = exc.record
                rec.extend(r, t)
                verdict = "budget"
                break
            rec.extend(r, t)
            t += r.times[-1] if r.times else chunk_time
            means.extend(trace)
            if free_axes and abs(means[-1]) > drift_radius:
                verdict = "drift"
                break
            if r.verdict in ("converged", "period_collapse", "period_blowup"):
                verdict = r.verdict
                break
        rec.verdict = verdict
        outcomes.append((lp, rec, verdict, means))

    converged = [(lp, rec, means) for lp, rec, v, means in outcomes if v == "converged"]
    if not converged:
        drifted = all(v == "drift" for _, _, v, _ in outcomes)
        lp, rec, v, means = outcomes[0]
        return MinimaxResult(
            level=action(L, k, lp),
            loop=lp,
            ps=rec,
            k=float(k),
            family_kind="class_min",
            certificate=None,
            coarse_level=action(L, k, lp),
            verdict="drift" if drifted else v,
            checks={"drift": drifted},
            notes={"free_means": [o[3] for o in outcomes], "verdicts": [o[2] for o in outcomes]},
        )
    best = None
    for lp, rec, means in converged:
        pol, info = polish(L, k, lp)
        S = action(L, k, pol)
        if best is None or S < best[0]:
            best = (S, pol, rec, info, means)
    S, pol, rec, info, means = best
    _, _, _, gn = gradient(L, k, pol)
    rec.add(rec.times[-1] + 1 if rec.times else 0, S, gn, pol.T)
    v = ps_classify(rec, D1, D2, 1e-8)
    rec.verdict = v.verdict
    cert = certify(L, k, pol, "class_min")
    L_cu = action(L, cu_estimate, pol) + (k - cu_estimate) * pol.T
    return MinimaxResult(
        level=S,
        loop=pol,
        ps=rec,
        k=float(k),
        family_kind="class_min",
        certificate=cert,
        coarse_level=rec.actions[-2] if len(rec.actions) > 1 else S,
        verdict=v.verdict,
        checks={"cu_identity": abs(L_cu - S) <= 1e-9 * max(1.0, abs(S)), "drift": False},
        notes={"polish_iterations": info.iterations, "polish_residual": info.residual, "free_means": means, "cu_estimate": cu_estimate},
    )

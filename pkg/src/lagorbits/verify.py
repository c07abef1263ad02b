"""Independent checks of candidate periodic orbits.

Nothing here touches the variational machinery: residuals are computed from
the loop samples with high-order finite differences, and :func:`shoot`
integrates the Euler-Lagrange equation as an ordinary initial-value problem.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .lagrangian import Lagrangian
from .loopspace import Loop, action, homotopy_class, length

DEFAULT_TOLERANCES = {"el_residual": 1e-3, "energy_dev": 1e-3, "closure_err": 1e-3}
METHODS = ("mountain_pass", "sweepout", "class_min")


def _extended(loop: Loop, pad: int) -> np.ndarray:
    """Samples with ``pad`` periodic neighbours on each side (lifted)."""
    x, off = loop.samples, loop.offset
    return np.vstack([x[-pad:] - off, x, x[:pad] + off])


def _d4(y: np.ndarray, h: float, pad: int) -> np.ndarray:
    """Fourth-order central derivative of a padded periodic sequence."""
    n = y.shape[0] - 2 * pad
    i = np.arange(pad, pad + n)
    return (-y[i + 2] + 8 * y[i + 1] - 8 * y[i - 1] + y[i - 2]) / (12.0 * h)


def velocities(loop: Loop) -> np.ndarray:
    h = loop.T / loop.N
    return _d4(_extended(loop, 2), h, 2)


def el_residual(L: Lagrangian, loop: Loop) -> float:
    """``max_t |d/dt L_v - L_x|`` in the dual metric (tangential part when embedded)."""
    h = loop.T / loop.N
    xe = _extended(loop, 4)
    ve = _d4(xe, h, 2)  # velocities at indices 2 .. N+5 of xe
    xs = xe[2:-2]
    p = L.eval_Lv(xs, ve)
    dp = _d4(p, h, 2)
    x = loop.samples
    v = ve[2:-2]
    r = dp - L.eval_Lx(x, v)
    m = L.manifold
    if m.representation == "Embedded":
        r = np.einsum("nij,nj->ni", m.tangent_projector(x), r)
        return float(np.max(np.linalg.norm(r, axis=-1)))
    return float(np.max(L.covector_norm(x, r)))


def energy_deviation(L: Lagrangian, loop: Loop, k: float) -> float:
    return float(np.max(np.abs(L.energy(loop.samples, velocities(loop)) - k)))


# -- shooting -------------------------------------------------------------------

def _acceleration(L: Lagrangian, x, v):
    m = L.manifold
    dth = L.theta.exterior_derivative(x)
    force = np.einsum("...lj,...j->...l", dth, v) + L.potential.gradient(x)
    if m.representation == "Embedded":
        n = np.asarray(m.constraint_grad(x), dtype=float)
        n2 = np.sum(n * n, axis=-1)
        H = np.asarray(m.constraint_hess(x), dtype=float)
        curv = np.einsum("...i,...ij,...j->...", v, H, v) / n2
        tang = force - (np.sum(force * n, axis=-1) / n2)[..., None] * n
        return tang - curv[..., None] * n
    g = m.metric(x)
    acc = np.linalg.solve(g, force[..., None])[..., 0]
    if not m.flat:
        acc = acc - np.einsum("...kij,...i,...j->...k", m.christoffel(x), v, v)
    return acc


@dataclass
class ShootReport:
    closure: float
    energy_drift: float
    x_end: np.ndarray
    v_end: np.ndarray
    diverged: bool = False
    trajectory: np.ndarray | None = field(default=None, repr=False)


def shoot(L: Lagrangian, x0, v0, T: float, steps: int = 4096, offset=None, record: int | None = None) -> ShootReport:
    """Integrate the Euler-Lagrange equation from ``(x0, v0)`` for time ``T`` with RK4.

    ``offset`` is the lattice vector the orbit should close up to (chart
    windings).  ``record`` stores that many equally spaced positions,
    ``steps`` must then be a multiple of it.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    off = np.zeros_like(x) if offset is None else np.asarray(offset, dtype=float)
    h = T / steps
    E0 = float(L.energy(x, v))
    vmax = 1e3 * max(float(L.metric_norm(x, v)), 1.0)
    drift = 0.0
    traj = None
    every = 0
    if record:
        if steps % record:
            raise ValueError("steps must be a multiple of record")
        every = steps // record
        traj = np.empty((record, x.size))
    embedded = L.manifold.representation == "Embedded"

    def f(x, v):
        return v, _acceleration(L, x, v)

    def energy_speed(x, v):
        g = L.manifold.metric(x)
        s2 = float(v @ g @ v)
        if L.cap is not None and math.sqrt(s2) >= L.cap.radius:
            return float(L.energy(x, v)), math.sqrt(s2)
        return 0.5 * s2 - float(L.potential(x)), math.sqrt(s2)

    for n in range(steps):
        if traj is not None and n % every == 0:
            traj[n // every] = x
        a1, b1 = f(x, v)
        a2, b2 = f(x + 0.5 * h * a1, v + 0.5 * h * b1)
        a3, b3 = f(x + 0.5 * h * a2, v + 0.5 * h * b2)
        a4, b4 = f(x + h * a3, v + h * b3)
        x = x + (h / 6.0) * (a1 + 2 * a2 + 2 * a3 + a4)
        v = v + (h / 6.0) * (b1 + 2 * b2 + 2 * b3 + b4)
        E, speed = energy_speed(x, v)
        if not np.isfinite(speed) or speed > vmax:
            return ShootReport(math.inf, math.inf, x, v, True, traj)
        drift = max(drift, abs(E - E0))
    dx = x - (np.asarray(x0, dtype=float) + off)
    if not embedded and hasattr(L.manifold, "wrap_difference") and offset is None:
        dx = L.manifold.wrap_difference(dx)
    dv = v - np.asarray(v0, dtype=float)
    x_ref = np.asarray(x0, dtype=float)
    closure = float(L.metric_norm(x_ref, dx) + L.metric_norm(x_ref, dv))
    return ShootReport(closure, drift, x, v, False, traj)


def convergence_order(L: Lagrangian, x0, v0, T: float, steps: int = 32) -> float:
    """Observed order from end states at ``steps``, ``2 steps`` and ``4 steps``."""
    ends = [shoot(L, x0, v0, T, steps * 2**j) for j in range(3)]
    s = [np.concatenate([e.x_end, e.v_end]) for e in ends]
    return float(np.log2(np.linalg.norm(s[0] - s[1]) / np.linalg.norm(s[1] - s[2])))


# -- certificates ---------------------------------------------------------------

@dataclass
class OrbitCertificate:
    loop: Loop
    k: float
    action: float
    el_residual: float
    energy_dev: float
    closure_err: float
    homotopy: list
    method: str
    length: float
    tolerances: dict
    require_positive_action: bool
    failures: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "method": self.method,
            "k": self.k,
            "action": self.action,
            "period": self.loop.T,
            "length": self.length,
            "el_residual": self.el_residual,
            "energy_dev": self.energy_dev,
            "closure_err": self.closure_err,
            "class": list(self.homotopy),
            "tolerances": dict(self.tolerances),
            "require_positive_action": self.require_positive_action,
            "failures": list(self.failures),
            "notes": dict(self.notes),
            "loop": self.loop.to_dict(),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def certify(
    L: Lagrangian,
    k: float,
    loop: Loop,
    method: str,
    tolerances: dict | None = None,
    shoot_steps: int = 4096,
) -> OrbitCertificate:
    """Collect all residuals; PASS iff each is below its tolerance.

    Mountain-pass and sweepout candidates must also have positive action.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    S = action(L, k, loop)
    el = el_residual(L, loop)
    ed = energy_deviation(L, loop, k)
    v0 = velocities(loop)[0]
    rep = shoot(L, loop.samples[0], v0, loop.T, shoot_steps, offset=loop.offset)
    need_pos = method != "class_min"
    try:
        cls = list(homotopy_class(loop))
    except ValueError:
        cls = []
    fails = []
    for name, val in (("el_residual", el), ("energy_dev", ed), ("closure_err", rep.closure)):
        if not (np.isfinite(val) and val < tol[name]):
            fails.append(name)
    if need_pos and not S > 0:
        fails.append("action")
    notes = {"shoot_steps": shoot_steps, "energy_drift": rep.energy_drift}
    if L.cap is not None:
        notes["cap"] = {"radius": L.cap.radius, "blend": L.cap.blend, "profile": "quintic smoothstep on theta and V"}
    if need_pos:
        # a computed minimax level bounds the true inf-sup from above only
        notes["level_bound"] = "upper"
    return OrbitCertificate(loop, float(k), S, el, ed, rep.closure, cls, method, length(loop), tol, need_pos, fails, notes)

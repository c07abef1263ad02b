"""Scenario files: TOML text describing a manifold, a Lagrangian and run settings.

Only literal values and grammar expressions are accepted; nothing in a
scenario is executed as code.  Example::

    name = "magplane"
    seed = 0

    [manifold]
    kind = "plane"

    [lagrangian]
    theta = ["-B/2*y", "B/2*x"]
    params = { B = 1.0 }

    [search]
    region = [[-5.0, 5.0], [-5.0, 5.0]]
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import tomli
import tomli_w

from . import geometry
from .expr import ExpressionError
from .lagrangian import Lagrangian, LagrangianError, electromagnetic, quad_cap
from .shrink import ExpressionProfile, ShrinkError, ShrinkMap, build_radial_shrink

MANIFOLD_KINDS = ("plane", "torus", "cylinder", "sphere", "chart")

DISCRETIZATION_DEFAULTS = {
    "N": 64,
    "N_polish": 256,
    "n_nodes": 16,
    "tau": 1.0,
    "gradient_tol": 1e-8,
    "level_tol": 1e-9,
    "D1": 1e-3,
    "D2": 1e3,
    "max_sweeps": 60,
    "sweep_time": 0.5,
    "n_starts": 3,
    "max_time": 400.0,
    "drift_radius": 5.0,
    "tolerances": {"el_residual": 1e-3, "energy_dev": 1e-3, "closure_err": 1e-3},
}

_TOP_KEYS = {"name", "seed", "output", "manifold", "lagrangian", "shrink", "shrink_profile", "discretization", "search"}


class ScenarioError(ValueError):
    """Invalid scenario; ``diagnostics`` lists one message per problem."""

    def __init__(self, diagnostics):
        if isinstance(diagnostics, str):
            diagnostics = [diagnostics]
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


@dataclass
class Scenario:
    name: str
    manifold: dict
    lagrangian: dict = field(default_factory=dict)
    shrink: dict | None = None
    discretization: dict = field(default_factory=dict)
    search: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "out"

    # -- parsing -------------------------------------------------------------
    @classmethod
    def loads(cls, text: str) -> "Scenario":
        try:
            data = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            raise ScenarioError(f"parse error: {exc}") from None
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"cannot read {path}: {exc.strerror}") from None
        return cls.loads(text)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        errs = []
        unknown = set(data) - _TOP_KEYS
        if unknown:
            errs.append(f"unknown top-level keys: {sorted(unknown)}")
        man = data.get("manifold")
        if not isinstance(man, dict):
            errs.append("missing [manifold] table")
            man = {}
        elif man.get("kind") not in MANIFOLD_KINDS:
            errs.append(f"manifold.kind must be one of {MANIFOLD_KINDS}, got {man.get('kind')!r}")
        shrink = data.get("shrink")
        if "shrink_profile" in data:
            if not isinstance(data["shrink_profile"], str):
                errs.append("shrink_profile must be a string expression in r")
            shrink = dict(shrink or {})
            shrink["profile"] = data["shrink_profile"]
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            errs.append("seed must be an integer in [0, 2^64)")
        disc = dict(data.get("discretization", {}))
        bad = set(disc) - set(DISCRETIZATION_DEFAULTS)
        if bad:
            errs.append(f"unknown discretization keys: {sorted(bad)}")
        if errs:
            raise ScenarioError(errs)
        sc = cls(
            name=str(data.get("name", "scenario")),
            manifold=dict(man),
            lagrangian=dict(data.get("lagrangian", {})),
            shrink=shrink,
            discretization=disc,
            search=dict(data.get("search", {})),
            seed=seed,
            output=str(data.get("output", "out")),
        )
        sc.validate()
        return sc

    def to_dict(self) -> dict:
        out = {"name": self.name, "seed": self.seed, "output": self.output, "manifold": copy.deepcopy(self.manifold)}
        if self.lagrangian:
            out["lagrangian"] = copy.deepcopy(self.lagrangian)
        if self.shrink:
            sh = dict(self.shrink)
            if "profile" in sh:
                out["shrink_profile"] = sh.pop("profile")
            if sh:
                out["shrink"] = sh
        if self.discretization:
            out["discretization"] = copy.deepcopy(self.discretization)
        if self.search:
            out["search"] = copy.deepcopy(self.search)
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    def validate(self):
        """Build everything once so that bad expressions fail at load time."""
        errs = []
        try:
            m = self.build_manifold()
        except (geometry.GeometryError, ExpressionError, ValueError, TypeError, KeyError) as exc:
            raise ScenarioError(f"manifold: {exc}") from None
        try:
            self.build_lagrangian(m, cap=False)
        except (LagrangianError, ExpressionError, ValueError, TypeError) as exc:
            errs.append(f"lagrangian: {exc}")
        if self.shrink:
            try:
                self.build_shrink(m)
            except (ShrinkError, ExpressionError, ValueError, TypeError, KeyError) as exc:
                errs.append(f"shrink: {exc}")
        region = self.search.get("region")
        if region is not None:
            try:
                ok = all(len(b) == 2 and float(b[0]) < float(b[1]) for b in region) and len(region) == self._coord_dim(m)
            except (TypeError, ValueError):
                ok = False
            if not ok:
                errs.append("search.region must be one increasing [lo, hi] pair per coordinate")
        if errs:
            raise ScenarioError(errs)

    # -- builders ------------------------------------------------------------
    @staticmethod
    def _coord_dim(m) -> int:
        return m.ambient_dim if m.representation == "Embedded" else m.dim

    def build_manifold(self):
        s = self.manifold
        kind = s["kind"]
        if kind == "plane":
            return geometry.euclidean(int(s.get("dim", 2)), s.get("coords"))
        if kind == "torus":
            return geometry.flat_torus(int(s.get("dim", 2)), float(s.get("period", 1.0)))
        if kind == "cylinder":
            return geometry.warped_cylinder(str(s.get("beta", "1 + r^2")), s.get("params"))
        if kind == "sphere":
            return geometry.round_sphere(float(s.get("radius", 1.0)))
        return geometry.chart_from_expressions(s["coords"], s["metric"], s.get("periods"), s.get("params"), s.get("name", "chart"))

    def build_lagrangian(self, m=None, cap: bool = True) -> Lagrangian:
        m = m if m is not None else self.build_manifold()
        lg = self.lagrangian
        L = electromagnetic(m, lg.get("theta"), lg.get("V"), lg.get("params"))
        if cap and "cap_energy" in lg:
            L = quad_cap(L, float(lg["cap_energy"]), self.region(m), check_convexity=True)
        return L

    def build_shrink(self, m=None) -> ShrinkMap | None:
        if not self.shrink:
            return None
        m = m if m is not None else self.build_manifold()
        sh = self.shrink
        axes = sh.get("radial_axes")
        if "profile" in sh:
            prof = ExpressionProfile(sh["profile"], sh.get("params"), check_to=float(sh["r2"]))
            if axes is None:
                axes = [i for i in range(m.dim) if i not in set(m.periodic_axes.tolist())]
            return ShrinkMap(prof, float(sh["r2"]), tuple(axes))
        return build_radial_shrink(m, float(sh["r0"]), float(sh["r1"]), float(sh["r2"]), float(sh.get("s_inf", 0.5)), axes)

    def region(self, m=None):
        """Search box; defaults to ``[-5, 5]`` on open axes and one period on periodic ones."""
        if "region" in self.search:
            return [[float(a), float(b)] for a, b in self.search["region"]]
        m = m if m is not None else self.build_manifold()
        if m.representation == "Embedded":
            R = getattr(m, "radius", 1.0)
            return [[-R, R]] * m.ambient_dim
        return [[0.0, float(p)] if p > 0 else [-5.0, 5.0] for p in m.periods]

    def settings(self) -> dict:
        out = copy.deepcopy(DISCRETIZATION_DEFAULTS)
        for key, val in self.discretization.items():
            if key == "tolerances":
                out["tolerances"].update(val)
            else:
                out[key] = val
        return out

    def k_bracket(self):
        b = self.search.get("k_bracket", [-1.0, 10.0])
        return float(b[0]), float(b[1])


def isclose_dict(a, b, rel: float = 0.0) -> bool:
    """Structural equality with optional relative tolerance on floats."""
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(isclose_dict(a[k], b[k], rel) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(isclose_dict(x, y, rel) for x, y in zip(a, b))
    if isinstance(a, float) and isinstance(b, float):
        return a == b or math.isclose(a, b, rel_tol=rel)
    return a == b

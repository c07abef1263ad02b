"""Periodic orbits of prescribed energy for Lagrangian systems, by minimax on the free-period loop space."""

__version__ = "0.1.0"

from .geometry import Embedded, PeriodicChart, chart_from_expressions, euclidean, flat_torus, round_sphere, warped_cylinder
from .lagrangian import Lagrangian, e0_estimate, electromagnetic, estimate_growth_constants, quad_cap
from .loopspace import Loop, LoopMetric, PathOfLoops, action, differential, gradient, length
from .gradientflow import FlowConfig, PSRecord, evolve, polish
from .shrink import ShrinkMap, build_radial_shrink, pushback, verify_shrink_inequality
from .verify import OrbitCertificate, certify, shoot
from .critvals import estimate_cu, estimate_mu, find_negative_action_loop
from .minimax import (
    MinimaxResult,
    MountainPassProblem,
    barrier,
    class_minimize,
    latitude_sweep,
    mountain_pass,
    struwe_scan,
    sweepout_minimax,
)
from .scenario import Scenario

__all__ = [name for name in dir() if not name.startswith("_")]

"""The shooting integrator behind every certificate.

RK4 on the Euler-Lagrange equation, started from a loop point with its
velocity, must close the orbit and conserve energy.  Halving the step
should cut the closure error by about 16.
"""
# %%
import math

from lagorbits import electromagnetic, euclidean
from lagorbits.verify import convergence_order, shoot

L = electromagnetic(euclidean(), theta=["-y/2", "x/2"])
rep = shoot(L, [1.0, 0.0], [0.0, -1.0], 2 * math.pi)
print("closure", rep.closure, " energy drift", rep.energy_drift)
print("observed order", convergence_order(L, [1.0, 0.0], [0.0, -1.0], 2 * math.pi))

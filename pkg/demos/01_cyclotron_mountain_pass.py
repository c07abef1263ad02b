"""Mountain pass on the magnetic plane.

A charged particle in the plane with constant field B = 1 at energy k = 1/2
moves on unit circles of period 2 pi.  We find such a circle without telling
the solver anything about circles: it only gets the Lagrangian, the energy
and a search box.
"""
# %%
import math

import numpy as np

from lagorbits import MountainPassProblem, electromagnetic, euclidean, mountain_pass

L = electromagnetic(euclidean(), theta=["-B/2*y", "B/2*x"], params={"B": 1.0})

# %% The problem: a constant loop on one end, a negative-action loop on the other.
problem = MountainPassProblem.search(L, 0.5, [[-5, 5], [-5, 5]])
end = problem.family[len(problem.family) - 1]
print("witness period:", end.T)

# %% Run the string method, polish the top loop and certify it.
res = mountain_pass(problem)
c = res.loop.samples.mean(axis=0)
radius = np.linalg.norm(res.loop.samples - c, axis=1).mean()
print(f"level {res.level:.6f}  (pi = {math.pi:.6f})")
print(f"period {res.loop.T:.6f}  radius {radius:.6f}")
print("certificate:", res.certificate.status, res.certificate.failures)

# %% The Palais-Smale record is plot-ready CSV.
print(res.ps.to_csv().splitlines()[:3])

"""Checking the discrete differential and the loop-space gradient.

The adjoint differential is compared with central differences along random
directions.  The gradient is the Riesz representative in the product
metric, so <grad, grad> must equal dS(grad) up to roundoff.
"""
# %%
import numpy as np

from lagorbits import electromagnetic, warped_cylinder
from lagorbits.loopspace import Loop, LoopMetric, LoopTangent, action, differential, gradient

m = warped_cylinder("1 + r^2")
L = electromagnetic(m, theta=["0", "r"], V="0.1*r^2")
rng = np.random.default_rng(0)
s = np.arange(32) / 32
x = np.column_stack([0.3 * np.sin(2 * np.pi * s) + 0.2, 2 * np.pi * s + 0.1 * np.cos(4 * np.pi * s)])
lp = Loop(m, x, 1.3, (1,))

# %%
dS = differential(L, 0.7, lp)
xi, alpha, eps = rng.normal(size=x.shape), 0.4, 1e-6
fd = (action(L, 0.7, Loop(m, x + eps * xi, lp.T + eps * alpha, (1,))) - action(L, 0.7, Loop(m, x - eps * xi, lp.T - eps * alpha, (1,)))) / (2 * eps)
print("central difference", fd, " adjoint", dS.pair(LoopTangent(xi, alpha)))

# %%
S, dS, g, gnorm = gradient(L, 0.7, lp)
print("<g, g> =", LoopMetric(lp).inner(g, g), " dS(g) =", dS.pair(g), " |g| =", gnorm)

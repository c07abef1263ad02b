"""Confinement on a non-compact manifold.

A radial map of the cylinder that is the identity for |r| <= 3 and squeezes
the collar 3 <= |r| <= 4 inward never raises the kinetic Lagrangian of the
warped metric, because the circles get smaller as |r| drops.  Pushing a loop
back therefore never raises its action.
"""
# %%
import numpy as np

from lagorbits import Loop, action, build_radial_shrink, electromagnetic, pushback, verify_shrink_inequality, warped_cylinder

m = warped_cylinder("1 + r^2")
L = electromagnetic(m)
phi = build_radial_shrink(m, 1.0, 3.0, 4.0, 0.5)
rep = verify_shrink_inequality(phi, L, n=10_000, rng=0)
print("max of phi*L - L over 10^4 samples:", rep.max_violation)

# %%
s = np.arange(64) / 64
lp = Loop(m, np.column_stack([3.5 + 0.4 * np.sin(2 * np.pi * s), 2 * np.pi * s]), 2.0, (1,))
back = pushback(phi, lp)
print("action before", action(L, 0.5, lp), " after", action(L, 0.5, back))
print("r range after pushback:", back.samples[:, 0].min(), back.samples[:, 0].max())

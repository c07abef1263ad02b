"""Sweepout of the round sphere.

Latitude circles from pole to pole form a family that cannot be pulled off
the sphere.  Deforming the family downhill and polishing its highest loop
yields a great circle.
"""
# %%
import math

from lagorbits import electromagnetic, latitude_sweep, length, round_sphere, sweepout_minimax

S2 = round_sphere()
L = electromagnetic(S2)
sweep = latitude_sweep(S2, 0.5, perturb=0.2, rng=0)
print("initial longest loop:", max(length(lp) for lp in sweep))

# %%
res = sweepout_minimax(L, 0.5, sweep)
print(f"level {res.level:.5f}  length {length(res.loop):.5f}  (2 pi = {2 * math.pi:.5f})")
print("checks:", res.checks)
print("certificate:", res.certificate.status)

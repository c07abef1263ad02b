"""Minimizing in a free homotopy class.

On the flat torus the class (1, 0) contains a straight geodesic of length 1.
On the cylinder with metric dr^2 + (1 + r^2) dphi^2 the winding class is
represented by the waist circle r = 0.  With metric dr^2 + exp(2r) dphi^2 the
circles keep shrinking as r decreases, so there is nothing to converge to and
the solver reports drift instead of an orbit.
"""
# %%
from lagorbits import class_minimize, electromagnetic, flat_torus, length, warped_cylinder

torus = electromagnetic(flat_torus())
res = class_minimize(torus, 0.5, (1, 0))
print("torus:", res.certificate.status, "length", length(res.loop), "period", res.loop.T)

# %%
cyl = electromagnetic(warped_cylinder("1 + r^2"))
res = class_minimize(cyl, 0.5, (1,))
print("cylinder:", res.certificate.status, "max |r|", abs(res.loop.samples[:, 0]).max(), "length", length(res.loop))

# %% Same search on the exponential cylinder.
funnel = electromagnetic(warped_cylinder("exp(2*r)"))
res = class_minimize(funnel, 0.5, (1,))
print("funnel verdict:", res.verdict, "certificate:", res.certificate)
for i, means in enumerate(res.notes["free_means"]):
    print(f"  start {i}: mean r every 20 chunks", [round(m, 2) for m in means[::20]], "final", round(means[-1], 2))

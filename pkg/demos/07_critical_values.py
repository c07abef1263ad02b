"""Critical values and the mountain-pass barrier.

estimate_cu brackets the energy above which no contractible loop has
negative action, keeping a witness loop for every energy it rules out.
barrier computes a level a > 0 that every path from a short constant loop
to a negative-action loop must cross.
"""
# %%
from lagorbits import barrier, electromagnetic, estimate_cu, euclidean, flat_torus

torus = electromagnetic(flat_torus(), V="-cos(2*pi*x1)")
est = estimate_cu(torus, [[0, 1], [0, 1]], (0.0, 3.0), tol=1e-2)
print(f"torus with potential: c_u in [{est.lo:.4f}, {est.hi:.4f}], {len(est.witnesses)} witnesses")

mag = electromagnetic(euclidean(), theta=["-y/2", "x/2"])
est = estimate_cu(mag, [[-12, 12], [-12, 12]], (0.0, 10.0))
print("magnetic plane: unbounded suspected =", est.unbounded_suspected)

# %%
b = barrier(mag, 0.5, [[-5, 5], [-5, 5]])
print(f"barrier a = {b.a:.4f} at radius r = {b.r:.4f} (A1 = {b.A1}, mu = {b.mu:.4f}, delta = {b.lebesgue_delta:.4f})")

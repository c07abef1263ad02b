"""Minimax levels across energies.

On the magnetic plane c(k) = 2 pi k.  The scan checks that the computed
levels are monotone and reruns the slowly growing points with bounded
periods.  Five points keep the run under a minute; the test suite uses nine.
"""
# %%
import math

from lagorbits import MountainPassProblem, electromagnetic, euclidean, struwe_scan

L = electromagnetic(euclidean(), theta=["-y/2", "x/2"])
box = [[-5, 5], [-5, 5]]
scan = struwe_scan(L, 0.2, 1.0, 5, lambda k: MountainPassProblem.search(L, k, box), jobs=4)

# %%
print(scan.to_csv())
print("monotone:", scan.monotone, " D =", round(scan.D, 4))
for row in scan.rows:
    print(f"k={row.k:.2f}  c-2pi k = {row.level - 2 * math.pi * row.k:+.2e}")

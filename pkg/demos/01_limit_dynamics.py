"""The deterministic limit of the Wright-Fisher chain and its quasispecies.

As the population and the genome grow together, the class fractions follow a
deterministic map.  Above the error threshold (a < ln sigma) the orbit settles on
a distribution that still keeps a positive share of masters.  Below it the
masters vanish.
"""
import math

import numpy as np

from quasilab.dynamics import iterate_to_fixed_point, rho_star

sigma, K = 2.0, 4
print(f"error threshold: a = ln(sigma) = {math.log(sigma):.4f}\n")
for a in (0.1, 0.3, 0.6, 1.0):
    target = rho_star(a, sigma, K)
    z, steps = iterate_to_fixed_point(np.eye(K + 1)[0], a, sigma)
    print(f"a={a:.1f}  supercritical={target.supercritical!s:5}  rho*={np.round(target.rho_star, 4)}  "
          f"reached in {steps} steps, L1 gap {np.abs(z - target.rho_star).sum():.1e}")

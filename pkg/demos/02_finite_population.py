"""A finite population next to its deterministic limit.

The occupancy chain (class counts only) is run at two population sizes.  The
time average of the class fractions approaches the limiting quasispecies and
the fluctuations shrink as m doubles.
"""
from quasilab.dynamics import rho_star
from quasilab.experiments import estimate_stationary
from quasilab.model import ModelParams

a, sigma, K = 0.1, 2.0, 2
print("limit:", rho_star(a, sigma, K).rho_star.round(4))
for m in (100, 200):
    params = ModelParams(ell=20, m=m, kappa=2, q=a / 20, sigma=sigma, K=K)
    est = estimate_stationary(params, "occupancy", burn_in=500, steps=3000, replicas=4, seed=1)
    print(f"m={m}: mean {est.means.round(4)}  variance {est.variances.round(6)}")

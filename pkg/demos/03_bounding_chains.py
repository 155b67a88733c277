"""Sandwiching the population between two simpler chains.

A single uniform draw per individual drives the true chain and its lower and
upper bounding chains together.  The ordering is never broken.  Stopping times
of the upper chain grow fast with the population size, the signature of a
long-lived quasispecies.
"""
import numpy as np

from quasilab.coupling import coupling_map, lower_map, upper_map
from quasilab.experiments import time_trend
from quasilab.model import ModelParams
from quasilab.occupancy import leq

params = ModelParams(ell=5, m=10, kappa=2, q=0.08, sigma=2.0, K=1)
rng = np.random.default_rng(3)
o = np.array([4, 2, 2, 1, 1, 0])
while True:
    r = rng.random((10, 6))
    low, mid, up = lower_map(o, r, params), coupling_map(o, r, params), upper_map(o, r, params)
    if not (np.array_equal(low, mid) or np.array_equal(mid, up)):
        break
print("lower", low, "\ntrue ", mid, "\nupper", up)
print("ordered:", leq(low, mid) and leq(mid, up))

base = ModelParams(ell=20, m=2, kappa=2, q=0.6 / 20, sigma=2.0, K=0)
for row in time_trend(base, "m", [20, 40, 60], replicas=20, seed=0, measure=("tau0",)):
    print(f"m={row['m']:3d}  mean persistence time {row['mean_tau0']:.1f}")

"""Two ways to compute a stationary mean.

A long time average and the ratio of expected reward per regeneration cycle to
expected cycle length agree for a positive recurrent chain.  Here both are
checked on a two-state chain with known answer 1/3.
"""
from quasilab.experiments import renewal_check, two_state_chain

res = renewal_check(two_state_chain(0.3, 0.6), 0, lambda x: float(x == 1), horizon=20000, replicas=4, seed=5)
print(f"time average {res.time_average:.4f} +- {res.time_average_se:.4f}")
print(f"cycle ratio  {res.cycle_ratio:.4f} +- {res.cycle_ratio_se:.4f}  over {res.cycles} cycles")

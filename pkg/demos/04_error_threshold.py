"""The critical population ratio.

The cost psi of losing the master and finding it again sets the phase: the
quasispecies survives when alpha * psi > ln kappa, so alpha_c = ln kappa / psi.
Past the error threshold psi drops to zero and no population is large enough.
"""
from quasilab.ldp import critical_alpha, psi

sigma, kappa = 2.0, 2
for a in (0.1, 0.2, 0.4, 0.8):
    value = psi(a, sigma, l_max=12)
    print(f"a={a:.1f}  psi={value:.5f}  alpha_c={critical_alpha(a, sigma, kappa, value):.4f}")

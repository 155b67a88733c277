import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from quasilab import ldp
from quasilab.dynamics import limit_map_F, rho_star, scalar_map_Ftilde, selection_map_f
from quasilab.model import ValidationError
from oracles import psi_grid, v1_grid

probs = st.floats(0.0, 1.0)


def simplex(rng, K):
    return rng.dirichlet(np.ones(K + 2))[: K + 1]


def witness(r, a, sigma):
    xi = selection_map_f(r, sigma)
    K = len(r) - 1
    beta = xi[:, None] * ldp.limit_mutation_matrix(a, K)
    return xi, beta, beta.sum(axis=0)


def test_binomial_examples():
    assert ldp.binomial_rate(0.3, 0.3) == 0.0
    assert ldp.binomial_rate(0.5, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    # 0.7 ln(7/3) + 0.3 ln(3/7) = 0.4 ln(7/3)
    assert abs(ldp.binomial_rate(0.3, 0.7) - 0.338919) < 1e-6
    assert ldp.binomial_rate(0.0, 0.2) == math.inf
    assert ldp.binomial_rate(1.0, 0.5) == math.inf
    assert ldp.binomial_rate(0.0, 0.0) == 0.0


def test_binomial_matches_legendre_transform():
    p, t = 0.3, 0.7
    res = minimize_scalar(lambda lam: -(lam * t - math.log(1 - p + p * math.exp(lam))), bounds=(-20, 20),
                          method="bounded", options=dict(xatol=1e-12))
    assert abs(-res.fun - ldp.binomial_rate(p, t)) < 1e-9


@given(probs, probs)
def test_multinomial_reduces_to_binomial(p, t):
    assert ldp.multinomial_rate([p], [t]) == ldp.binomial_rate(p, t)


@settings(max_examples=200)
@given(st.integers(0, 10**6), st.integers(0, 4))
def test_multinomial_nonnegative_zero_on_diagonal(seed, K):
    rng = np.random.default_rng(seed)
    p, t = simplex(rng, K), simplex(rng, K)
    assert ldp.multinomial_rate(p, p) == pytest.approx(0.0, abs=1e-14)
    assert ldp.multinomial_rate(p, t) >= 0.0


@settings(max_examples=200)
@given(st.integers(0, 10**6))
def test_multinomial_convex_in_t(seed):
    rng = np.random.default_rng(seed)
    p, t1, t2 = (simplex(rng, 2) for _ in range(3))
    mid = ldp.multinomial_rate(p, (t1 + t2) / 2)
    assert mid <= (ldp.multinomial_rate(p, t1) + ldp.multinomial_rate(p, t2)) / 2 + 1e-12


def test_exp_rate_tracks_exact_multinomial():
    n, rng = 200, np.random.default_rng(1)
    for _ in range(20):
        p = simplex(rng, 2)
        counts = np.floor(n * simplex(rng, 2))
        rest = n - counts.sum()
        exact = (gammaln(n + 1) - gammaln(counts + 1).sum() - gammaln(rest + 1)
                 + (counts * np.log(p)).sum() + rest * math.log(1 - p.sum()))
        gap = abs(exact + n * ldp.multinomial_rate(p, counts / n))
        assert gap <= ldp.multinomial_log_bound(n, 2)


def test_log_bound_examples():
    assert ldp.log_multinomial_bound_check(10, [10]) <= 3 * math.log(10) + 5
    ldp.log_multinomial_bound_check(100, [30, 30])
    assert ldp.log_multinomial_bound_check(7, [0, 0, 0]) == 0.0
    with pytest.raises(ValidationError):
        ldp.log_multinomial_bound_check(5, [3, 3])


def test_limit_mutation():
    assert ldp.limit_mutation(0, 0, 0.4) == pytest.approx(math.exp(-0.4), abs=1e-16)
    assert ldp.limit_mutation(2, 1, 0.4) == 0.0
    assert abs(ldp.limit_mutation(0, 1, 1.0) - 0.367879) < 1e-6
    M = ldp.limit_mutation_matrix(0.7, 3)
    assert all(M[i, j] == pytest.approx(ldp.limit_mutation(i, j, 0.7), abs=1e-16) for i in range(4) for j in range(4))


@pytest.mark.parametrize("K", [0, 1, 2, 4])
def test_rate_I_zero_at_witness(K):
    rng = np.random.default_rng(K)
    for _ in range(20):
        r = simplex(rng, K)
        xi, beta, t = witness(r, 0.3, 2.0)
        assert ldp.rate_I(r, xi, beta, t, 0.3, 2.0) == pytest.approx(0.0, abs=1e-14)
        assert np.allclose(t, limit_map_F(r, 0.3, 2.0), atol=1e-15)


def test_rate_I_infinite_off_transport_set():
    r = np.array([0.4, 0.3])
    xi, beta, t = witness(r, 0.3, 2.0)
    lower = beta.copy()
    lower[1, 0] = 0.01
    assert ldp.rate_I(r, xi, lower, lower.sum(axis=0), 0.3, 2.0) == math.inf
    assert ldp.rate_I(r, xi, beta, t + 0.01, 0.3, 2.0) == math.inf


def test_rate_I_positive_off_zero_set():
    rng = np.random.default_rng(3)
    for _ in range(50):
        r = simplex(rng, 1)
        xi, beta, t = witness(r, 0.3, 2.0)
        xi2 = xi * rng.uniform(0.5, 0.99)
        assert ldp.rate_I(r, xi2, beta * 0.5, t * 0.5, 0.3, 2.0) > 0
        # perturbing beta within the transport set
        b2 = beta.copy()
        b2[0, 1] *= 0.5
        b2[1, 1] = t[1] - b2[0, 1]
        assert ldp.rate_I(r, xi, b2, t, 0.3, 2.0) > 0


def test_finite_rate_approaches_limit():
    ell, a = 2000, 0.3
    r = np.array([0.5, 0.2])
    xi, beta, t = witness(r, a, 2.0)
    beta2 = beta.copy()
    beta2[0, 1] *= 0.8
    beta2[1, 1] = t[1] - beta2[0, 1]
    for b in (beta, beta2):
        limit = ldp.rate_I(r, xi, b, t, a, 2.0)
        finite = ldp.finite_rate_I(r, xi, b, t, ell, a / ell, 2, 2.0, theta=ell)
        assert abs(finite - limit) < 1e-3


@pytest.mark.parametrize("K", [0, 1, 2])
def test_cost_V1_zero_on_orbit(K):
    rng = np.random.default_rng(10 + K)
    for _ in range(3):
        r = simplex(rng, K)
        res = ldp.cost_V1(r, limit_map_F(r, 0.3, 2.0), 0.3, 2.0, restarts=3)
        assert res.value < 1e-8
        assert ldp.in_transport_set(res.beta[0], limit_map_F(r, 0.3, 2.0), atol=1e-8)
    rs = rho_star(0.3, 2.0, K).rho_star
    assert ldp.cost_V1(rs, rs, 0.3, 2.0, restarts=3).value < 1e-8


@pytest.mark.parametrize("K", [0, 1, 2])
def test_cost_V1_matches_contraction(K):
    rng = np.random.default_rng(20 + K)
    for _ in range(2):
        r, t = simplex(rng, K), simplex(rng, K)
        assert abs(ldp.cost_V1(r, t, 0.3, 2.0, restarts=3).value - ldp.one_step_cost_closed(r, t, 0.3, 2.0)) < 1e-8


def test_cost_V1_grid_oracle():
    rng = np.random.default_rng(5)
    for _ in range(3):
        r = simplex(rng, 1)
        t = np.round(simplex(rng, 1) * 40) / 40
        oracle = v1_grid(r, t, 0.3, 2.0)
        value = ldp.cost_V1(r, t, 0.3, 2.0, restarts=5).value
        # the grid only restricts the search space; pitch 1/40 moves the value by at most a few 1e-3
        assert value <= oracle + 1e-9
        assert oracle - value < 0.02


def test_cost_V1_restarts_never_worse():
    rng = np.random.default_rng(2)
    r, t = simplex(rng, 1), simplex(rng, 1)
    few = ldp.cost_V1(r, t, 0.3, 2.0, restarts=2).value
    many = ldp.cost_V1(r, t, 0.3, 2.0, restarts=6).value
    assert many <= few + 1e-8


def test_cost_Vl_infinite_when_unreachable():
    assert ldp.cost_Vl([0.0, 0.5], [0.2, 0.1], 2, 0.3, 2.0, restarts=2).value == math.inf


def test_cost_V1_infinite_when_unreachable():
    # t_0 > 0 needs a master in r
    res = ldp.cost_V1([0.0, 0.5], [0.2, 0.1], 0.3, 2.0, restarts=3)
    assert res.value == math.inf


def test_cost_Vl():
    rng = np.random.default_rng(4)
    r = simplex(rng, 1)
    orbit = [r]
    for _ in range(3):
        orbit.append(limit_map_F(orbit[-1], 0.3, 2.0))
    assert ldp.cost_Vl(r, orbit[3], 3, 0.3, 2.0).value < 1e-8
    t = simplex(rng, 1)
    v1 = ldp.cost_V1(r, t, 0.3, 2.0)
    assert ldp.cost_Vl(r, t, 1, 0.3, 2.0).value == v1.value
    u = simplex(rng, 1)
    v2 = ldp.cost_Vl(r, t, 2, 0.3, 2.0).value
    assert v2 <= ldp.cost_V1(r, u, 0.3, 2.0).value + ldp.cost_V1(u, t, 0.3, 2.0).value + 1e-8


def test_scalar_step_is_contraction():
    s, t = np.array([0.2, 0.5, 0.9]), np.array([0.1, 0.6, 0.3])
    v, _ = ldp.scalar_step_cost(s, t, 0.3, 2.0)
    closed = [ldp.binomial_rate(scalar_map_Ftilde(x, 0.3, 2.0), y) for x, y in zip(s, t)]
    assert np.allclose(v, closed, atol=1e-12)


def test_master_cost_zero_set():
    a, sigma = 0.1, 2.0
    assert ldp.master_cost_zero_check(0.0, 0.0, a, sigma)
    t = 0.2
    for _ in range(3):
        t = scalar_map_Ftilde(t, a, sigma)
    assert ldp.master_cost_zero_check(0.2, t, a, sigma)
    assert ldp.master_cost_zero_check(0.2, rho_star(a, sigma, 0).rho_star[0], a, sigma)
    assert not ldp.master_cost_zero_check(0.2, 0.9, a, sigma)
    with pytest.raises(ValidationError):
        ldp.master_cost_zero_check(0.2, 0.1, 1.0, sigma)


@pytest.mark.parametrize("a", [0.1, 0.3])
@pytest.mark.parametrize("l", [1, 2, 3])
def test_psi_grid_oracle(a, l):
    opt = ldp.scalar_path_cost(rho_star(a, 2.0, 0).rho_star[0], 0.0, l, a, 2.0, exact_l=l).value
    oracle = psi_grid(a, 2.0, l)
    # pitch 1/50 on both rho and gamma; the grid value exceeds the optimum by O(pitch) at most
    assert opt <= oracle + 1e-9
    assert oracle - opt < 5e-3


def test_psi_subcritical_and_sign():
    assert ldp.psi(1.0, 2.0) == 0.0
    assert ldp.psi(0.5, 2.0, l_max=10, stabilize=False) >= 0.0
    with pytest.raises(ValidationError):
        ldp.psi(0.0, 2.0)


def test_psi_monotone_in_lmax():
    a = 0.3
    vals = [ldp.psi(a, 2.0, l_max=L, stabilize=False) for L in (2, 5, 10)]
    assert vals[0] >= vals[1] >= vals[2] >= 0


def test_psi_regression_pin_and_critical_alpha():
    res = ldp.psi_details(0.1, 2.0)
    assert res.stabilized
    assert abs(res.value - 0.6702906881512648) < 1e-9
    assert ldp.critical_alpha(0.1, 2.0, 2, res.value) == pytest.approx(math.log(2) / res.value, rel=1e-15)
    assert ldp.critical_alpha(0.1, 2.0, 2, math.log(2)) == 1.0
    assert ldp.critical_alpha(1.0, 2.0, 2, 0.0) == math.inf


def test_alt_denominator_option():
    # with the printed minus sign the selected fraction is negative for small rho, so the cost is infinite there
    v, _ = ldp.scalar_step_cost(0.3, 0.1, 0.1, 2.0, alt_denominator=True)
    assert v == math.inf
    res = ldp.psi_details(0.1, 2.0, l_max=5, alt_denominator=True, stabilize=False)
    assert res.value >= 0

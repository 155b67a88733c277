"""Rate functions, path costs and the error-threshold functional.

Conventions: ``x log(x/y) = 0`` when ``x = 0``, and ``+inf`` when ``x > 0 = y``.
Points of ``D`` are ``(K+1)``-vectors with non-negative entries summing to at
most one; the missing mass ``1 - sum`` is the implicit last cell of every
multinomial.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from .dynamics import limit_map_F, poisson_weights, rho_star, scalar_map_Ftilde, selection_map_f
from .model import OptimizationError, ValidationError

_SLACK = 1e-12


def _entropy_term(x, y):
    """Elementwise ``x log(x/y)`` with the conventions above."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        out = np.where(x > 0, x * np.log(x / np.where(y > 0, y, 1.0)), 0.0)
    return np.where((x > 0) & (y <= 0), np.inf, out)


def binomial_rate(p: float, t: float) -> float:
    """``t log(t/p) + (1-t) log((1-t)/(1-p))``; ``+inf`` outside ``[0,1]`` or on support mismatch."""
    if not (0.0 <= p <= 1.0) or not (-_SLACK <= t <= 1.0 + _SLACK):
        return math.inf
    t = min(max(t, 0.0), 1.0)
    return float(_entropy_term(t, p) + _entropy_term(1.0 - t, 1.0 - p))


def multinomial_rate(p, t) -> float:
    """``I_K(p, t) = sum_k t_k log(t_k/p_k) + (1-|t|) log((1-|t|)/(1-|p|))`` for ``p, t`` in ``D``."""
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < -_SLACK) or t.sum() > 1.0 + _SLACK or np.any(p < 0) or p.sum() > 1.0 + _SLACK:
        return math.inf
    t = np.clip(t, 0.0, None)
    t_rest = max(0.0, 1.0 - t.sum())
    p_rest = max(0.0, 1.0 - p.sum())
    return float(_entropy_term(t, p).sum() + _entropy_term(t_rest, p_rest))


def multinomial_log_bound(n: int, N: int) -> float:
    """Right-hand side ``(N+2) log n + 2N + 3`` of the multinomial log-estimate."""
    return (N + 2) * math.log(n) + 2 * N + 3


def log_multinomial_bound_check(n: int, counts):
    """Residual ``|log(n! / (prod i_k! (n-s)!)) + sum i_k log(i_k/n) + (n-s) log((n-s)/n)|``.

    ``counts = (i_0, ..., i_N)``, or a 2-D array with one count vector per
    row (then an array of residuals is returned).  Raises ``AssertionError``
    if a residual exceeds :func:`multinomial_log_bound`.
    """
    counts = np.asarray(counts, dtype=float)
    batch = counts.ndim == 2
    counts = np.atleast_2d(counts)
    s = counts.sum(axis=1)
    if np.any(s > n) or np.any(counts < 0):
        raise ValidationError("counts must be non-negative with sum <= n")
    log_coef = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) - gammaln(n - s + 1)
    residual = np.abs(log_coef + _entropy_term(counts, n).sum(axis=1) + _entropy_term(n - s, n))
    bound = multinomial_log_bound(n, counts.shape[1] - 1)
    worst = int(np.argmax(residual))
    if residual[worst] > bound:
        raise AssertionError(f"residual {residual[worst]} exceeds bound {bound} for n={n}, counts={counts[worst]}")
    return residual if batch else float(residual[0])


def limit_mutation(i: int, j: int, a: float) -> float:
    """Poisson kernel ``e^{-a} a^{j-i} / (j-i)!`` for ``i <= j``, else 0."""
    if i > j:
        return 0.0
    return math.exp(-a) * a ** (j - i) / math.factorial(j - i)


def limit_mutation_matrix(a: float, K: int) -> np.ndarray:
    w = poisson_weights(a, K)
    M = np.zeros((K + 1, K + 1))
    for i in range(K + 1):
        M[i, i:] = w[: K + 1 - i]
    return M


def _row_terms(xi, beta, kernel):
    # sum_k xi_k I_K(kernel[k], beta[k]/xi_k), perspective convention at xi_k = 0
    total = 0.0
    for k in range(len(xi)):
        row = beta[k]
        if xi[k] <= 0.0:
            if np.any(row > _SLACK):
                return math.inf
            continue
        total += xi[k] * multinomial_rate(kernel[k], row / xi[k])
        if total == math.inf:
            return math.inf
    return total


def in_transport_set(beta, t, atol=1e-10) -> bool:
    """Membership in the set of upper-triangular ``[0,1]`` matrices with column sums ``t``."""
    beta = np.asarray(beta, dtype=float)
    if np.any(np.tril(beta, -1) != 0.0) or np.any(beta < 0) or np.any(beta > 1):
        return False
    return bool(np.allclose(beta.sum(axis=0), t, rtol=0.0, atol=atol))


def rate_I(r, xi, beta, t, a: float, sigma: float) -> float:
    """``I_K(f(r), xi) + sum_k xi_k I_K(M_inf(k), beta(k,.)/xi_k)``, or ``+inf`` if ``beta`` is not admissible for ``t``."""
    beta = np.asarray(beta, dtype=float)
    if not in_transport_set(beta, t):
        return math.inf
    xi = np.asarray(xi, dtype=float)
    first = multinomial_rate(selection_map_f(r, sigma), xi)
    if first == math.inf:
        return math.inf
    return first + _row_terms(xi, beta, limit_mutation_matrix(a, len(xi) - 1))


def finite_rate_I(r, xi, beta, t, ell: int, q: float, kappa: int, sigma: float, theta: int) -> float:
    """Finite-size rate with the lumped kernel rows ``0..K`` and the collecting class ``theta``."""
    from .occupancy import lumped_mutation_matrix

    xi = np.asarray(xi, dtype=float)
    beta = np.asarray(beta, dtype=float)
    t = np.asarray(t, dtype=float)
    K = len(xi) - 1
    M = lumped_mutation_matrix(ell, q, kappa)
    value = multinomial_rate(selection_map_f(r, sigma), xi) + _row_terms(xi, beta, M[: K + 1, : K + 1])
    rest = 1.0 - xi.sum()
    leftover = t - beta.sum(axis=0)
    if rest <= 0.0:
        return value if np.all(np.abs(leftover) <= _SLACK) else math.inf
    return value + rest * multinomial_rate(M[theta, : K + 1], leftover / rest)


def one_step_cost_closed(r, t, a: float, sigma: float) -> float:
    """``I_K(F(r), t)``: each child lands in class ``j`` with probability ``F_j(r)`` independently,
    so by contraction this equals the infimum defining the one-step cost."""
    return multinomial_rate(limit_map_F(r, a, sigma), t)


@dataclass
class CostResult:
    """Value of a variational cost and the minimising witnesses.

    ``xi`` and ``beta`` hold one entry per step; ``path`` holds the visited
    points ``rho_0, ..., rho_l`` (and ``gamma`` the intermediate selection
    fractions for the one-dimensional costs).
    """

    value: float
    xi: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    path: Optional[np.ndarray] = None
    gamma: Optional[np.ndarray] = None
    l: Optional[int] = None


# --- one-step cost V1 -----------------------------------------------------------

def _unpack(x, t, K):
    xi = np.clip(x[: K + 1], 0.0, None)
    beta = np.zeros((K + 1, K + 1))
    pos = K + 1
    for j in range(K + 1):
        beta[:j, j] = np.clip(x[pos: pos + j], 0.0, None)
        pos += j
        beta[j, j] = t[j] - beta[:j, j].sum()
    return xi, beta


def _pack(xi, beta):
    K = len(xi) - 1
    parts = [np.asarray(xi, dtype=float)]
    for j in range(K + 1):
        parts.append(np.asarray(beta[:j, j], dtype=float))
    return np.concatenate(parts)


_INFINITE = 1e200  # finite stand-in for +inf: Nelder-Mead's tolerance test breaks on inf - inf
_INFEASIBLE = 1e250


def _kl(x, y):
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return math.inf
    return x * math.log(x / y)


def _mult_rate_scalar(p, t):
    # multinomial_rate for short python sequences, no domain checks
    tot_t = tot_p = acc = 0.0
    for pk, tk in zip(p, t):
        acc += _kl(tk, pk)
        tot_t += tk
        tot_p += pk
    return acc + _kl(max(0.0, 1.0 - tot_t), max(0.0, 1.0 - tot_p))


def _v1_objective(x, fr, t, kernel, K):
    x = x.tolist()
    xi = x[: K + 1]
    rows = [[0.0] * (K + 1) for _ in range(K + 1)]
    violation = 0.0
    pos = K + 1
    for j in range(K + 1):
        col = 0.0
        for i in range(j):
            v = x[pos + i]
            rows[i][j] = v
            col += v
            if v < 0.0:
                violation -= v
        pos += j
        rows[j][j] = diag = t[j] - col
        if diag < 0.0:
            violation -= diag
    total_xi = 0.0
    for k in range(K + 1):
        if xi[k] < 0.0:
            violation -= xi[k]
        total_xi += xi[k]
        excess = sum(rows[k]) - xi[k]
        if excess > 0.0:
            violation += excess
    violation += max(0.0, total_xi - 1.0)
    if violation > 0.0:
        return _INFEASIBLE * (1.0 + violation)
    value = _mult_rate_scalar(fr, xi)
    for k in range(K + 1):
        if value == math.inf:
            break
        if xi[k] > 0.0:
            value += xi[k] * _mult_rate_scalar(kernel[k], [b / xi[k] for b in rows[k]])
    return value if value < math.inf else _INFINITE


def _warm_start(r, t, a, sigma):
    # xi = f(r); each column of beta split in proportion to the mass each parent class sends there
    K = len(r) - 1
    xi = selection_map_f(r, sigma)
    flows = xi[:, None] * limit_mutation_matrix(a, K)
    col = flows.sum(axis=0)
    beta = np.zeros((K + 1, K + 1))
    for j in range(K + 1):
        if col[j] > 0:
            beta[:, j] = t[j] * flows[:, j] / col[j]
        else:
            beta[j, j] = t[j]
    return _pack(xi, beta)


def _random_start(t, K, rng):
    xi = rng.dirichlet(np.ones(K + 2))[: K + 1]
    beta = np.zeros((K + 1, K + 1))
    for j in range(K + 1):
        beta[: j + 1, j] = t[j] * rng.dirichlet(np.ones(j + 1))
    return _pack(xi, beta)


_COARSE = dict(xatol=1e-10, fatol=1e-14, adaptive=True)
_FINE = dict(xatol=1e-12, fatol=1e-16, adaptive=True)


def _nelder_mead(fun, x0, args, fine=False):
    opts = dict(_FINE if fine else _COARSE, maxiter=1500 * len(x0), maxfev=3000 * len(x0))
    res = minimize(fun, x0, args=args, method="Nelder-Mead", options=opts)
    # a second simplex started at the first solution escapes premature collapse
    res2 = minimize(fun, res.x, args=args, method="Nelder-Mead", options=opts)
    return res2 if res2.fun <= res.fun else res


def cost_V1(r, t, a: float, sigma: float, restarts: int = 20, seed: int = 0, warm_start: bool = True) -> CostResult:
    """One-step cost ``V_1(r, t) = inf { rate_I(r, xi, beta, t) }`` over ``xi`` in ``D`` and admissible ``beta``.

    Multi-start Nelder-Mead over ``xi`` and the strictly upper entries of
    ``beta``; each diagonal entry is fixed by its column sum.  Points outside
    the constraint set score a huge finite penalty growing with the violation,
    which steers the simplex back to the feasible region.
    Restart ``0`` is the proportional-allocation start when ``warm_start``
    is true; the others are random.  Restarts run with loose tolerances and
    the best one is polished with tight ones.

    Raises
    ------
    OptimizationError
        If no restart reaches a finite value.
    """
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    K = len(r) - 1
    rng = np.random.default_rng(seed)
    args = (selection_map_f(r, sigma).tolist(), t.tolist(), limit_mutation_matrix(a, K).tolist(), K)
    best = None
    for k in range(restarts):
        x0 = _warm_start(r, t, a, sigma) if (warm_start and k == 0) else _random_start(t, K, rng)
        res = _nelder_mead(_v1_objective, x0, args)
        if best is None or res.fun < best.fun:
            best = res
    if best is not None and best.fun < _INFINITE:
        polished = _nelder_mead(_v1_objective, best.x, args, fine=True)
        if polished.fun <= best.fun:
            best = polished
    if best is None or best.fun >= _INFEASIBLE:
        raise OptimizationError(f"no feasible (xi, beta) found for r={r}, t={t}", best=best)
    xi, beta = _unpack(best.x, t, K)
    beta[np.diag_indices(K + 1)] = np.clip(np.diag(beta), 0.0, None)
    value = math.inf if best.fun >= _INFINITE else max(0.0, float(best.fun))
    return CostResult(value=value, xi=[xi], beta=[beta], path=np.array([r, t]), l=1)


# --- multi-step cost Vl --------------------------------------------------------

def project_to_D(v) -> np.ndarray:
    """Euclidean projection onto ``{v >= 0, sum(v) <= 1}``."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, None)
    if v.sum() <= 1.0:
        return v
    # projection onto the probability simplex (sort-based)
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    k = np.nonzero(u * np.arange(1, len(u) + 1) > css - 1.0)[0][-1]
    shift = (css[k] - 1.0) / (k + 1.0)
    return np.clip(v - shift, 0.0, None)


def _path_objective(x, r, t, l, a, sigma):
    K1 = len(r)
    pts = [r] + [project_to_D(x[i * K1: (i + 1) * K1]) for i in range(l - 1)] + [t]
    value = sum(one_step_cost_closed(pts[k], pts[k + 1], a, sigma) for k in range(l))
    return value if value < math.inf else _INFINITE


def cost_Vl(r, t, l: int, a: float, sigma: float, restarts: int = 5, seed: int = 0,
            leg_restarts: int = 3) -> CostResult:
    """``l``-step cost: infimum of summed one-step rates over paths ``r = rho_0, ..., rho_l = t``.

    The intermediate points are optimised jointly (Nelder-Mead over
    ``rho_1..rho_{l-1}``, projected onto ``D``), scoring each leg with the
    contracted one-step cost; the legs of the best path are then re-solved
    with :func:`cost_V1`, whose values and witnesses are reported.
    The first start follows the orbit of ``F`` from ``r`` with a linear
    correction towards ``t``.
    """
    if l < 1:
        raise ValidationError("l must be at least 1")
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if l == 1:
        # same call as a direct cost_V1 with default effort, so both agree exactly
        return cost_V1(r, t, a, sigma, seed=seed)
    K1 = len(r)
    rng = np.random.default_rng(seed)
    orbit = [r]
    for _ in range(l):
        orbit.append(limit_map_F(orbit[-1], a, sigma))
    miss = t - orbit[l]
    guided = np.concatenate([project_to_D(orbit[k] + k / l * miss) for k in range(1, l)])
    best = None
    for k in range(restarts):
        x0 = guided if k == 0 else np.concatenate([rng.dirichlet(np.ones(K1 + 1))[:K1] for _ in range(l - 1)])
        res = _nelder_mead(_path_objective, x0, (r, t, l, a, sigma))
        if best is None or res.fun < best.fun:
            best = res
    if best.fun >= _INFINITE:
        return CostResult(value=math.inf, l=l)
    pts = [r] + [project_to_D(best.x[i * K1: (i + 1) * K1]) for i in range(l - 1)] + [t]
    legs = [cost_V1(pts[k], pts[k + 1], a, sigma, restarts=leg_restarts, seed=seed + k) for k in range(l)]
    return CostResult(
        value=float(sum(leg.value for leg in legs)),
        xi=[leg.xi[0] for leg in legs],
        beta=[leg.beta[0] for leg in legs],
        path=np.array(pts),
        l=l,
    )


# --- one-dimensional (master class) costs ------------------------------------------

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _binomial_rate_vec(p, t):
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    bad = (p < 0) | (p > 1) | (t < -_SLACK) | (t > 1 + _SLACK)
    t = np.clip(t, 0.0, 1.0)
    pc = np.clip(p, 0.0, 1.0)
    with np.errstate(invalid="ignore"):
        out = _entropy_term(t, pc) + _entropy_term(1.0 - t, 1.0 - pc)
    return np.where(bad, np.inf, out)


def _selected_fraction(s, sigma, alt_denominator):
    s = np.asarray(s, dtype=float)
    if alt_denominator:
        with np.errstate(divide="ignore", invalid="ignore"):
            p = sigma * s / ((sigma - 1.0) * s - 1.0)
        return np.where(s == 0, 0.0, p)
    return sigma * s / ((sigma - 1.0) * s + 1.0)


def _step_objective(p, gamma, t, survive):
    # I(p, gamma) + gamma I(e^{-a}, t/gamma); zero-mass perspective at gamma = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(gamma > 0, t / np.where(gamma > 0, gamma, 1.0), np.where(t > 0, np.inf, 0.0))
        second = np.where(gamma > 0, gamma * _binomial_rate_vec(survive, ratio), np.where(t > 0, np.inf, 0.0))
    return _binomial_rate_vec(p, gamma) + second


def scalar_step_cost(s, t, a: float, sigma: float, alt_denominator: bool = False, iters: int = 90):
    """Infimum over ``gamma`` of ``I(f(s), gamma) + gamma I(e^{-a}, t/gamma)``, vectorised.

    ``f(s) = sigma s / ((sigma-1) s + 1)`` (or the ``-1`` denominator when
    ``alt_denominator``).  The objective is convex in ``gamma`` on
    ``[t, 1]``; golden-section search is run on that interval and the two
    endpoints are evaluated as well.

    Returns
    -------
    value, gamma : ndarray
    """
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    p = _selected_fraction(s, sigma, alt_denominator)
    survive = math.exp(-a)
    lo = np.clip(t, 0.0, 1.0).copy()
    hi = np.ones_like(lo)
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1 = _step_objective(p, x1, t, survive)
    f2 = _step_objective(p, x2, t, survive)
    for _ in range(iters):
        left = f1 <= f2
        lo = np.where(left, lo, x1)
        hi = np.where(left, x2, hi)
        keep_x, keep_f = np.where(left, x1, x2), np.where(left, f1, f2)
        new_x = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
        new_f = _step_objective(p, new_x, t, survive)
        x1, f1 = np.where(left, new_x, keep_x), np.where(left, new_f, keep_f)
        x2, f2 = np.where(left, keep_x, new_x), np.where(left, keep_f, new_f)
    mid = 0.5 * (lo + hi)
    cands = np.stack([mid, np.clip(t, 0.0, 1.0), np.ones_like(mid)])
    vals = np.stack([_step_objective(p, c, t, survive) for c in cands])
    pick = np.argmin(np.where(np.isnan(vals), np.inf, vals), axis=0)
    value = np.take_along_axis(vals, pick[None], axis=0)[0]
    gamma = np.take_along_axis(cands, pick[None], axis=0)[0]
    value = np.where(t > 1 + _SLACK, np.inf, value)
    return value, gamma


def _scalar_grid(s, t, a, sigma, l_max, grid_size):
    pts = [np.linspace(0.0, 1.0, grid_size), [s, t]]
    rs = rho_star(a, sigma, 0).rho_star[0]
    pts.append([rs])
    z = s
    orbit = []
    for _ in range(l_max):
        z = scalar_map_Ftilde(z, a, sigma)
        orbit.append(z)
    pts.append(orbit)
    return np.unique(np.concatenate([np.asarray(v, dtype=float) for v in pts]))


def _dp_paths(grid, cost, src, dst, l_max):
    """Cheapest path from ``grid[src]`` to ``grid[dst]`` for each number of steps ``1..l_max``."""
    n = len(grid)
    value = np.full(n, np.inf)
    value[src] = 0.0
    back = np.empty((l_max, n), dtype=np.int64)
    per_l = np.empty(l_max)
    for l in range(l_max):
        tot = value[:, None] + cost
        back[l] = np.argmin(tot, axis=0)
        value = tot[back[l], np.arange(n)]
        per_l[l] = value[dst]
    return per_l, back


def _dp_path(back, l, dst):
    idx = [dst]
    for step in range(l - 1, -1, -1):
        idx.append(back[step, idx[-1]])
    return idx[::-1]


def _polish(path, a, sigma, alt_denominator):
    l = len(path) - 1
    if l < 2:
        return path, None

    def total(x):
        pts = np.concatenate([[path[0]], np.clip(x, 0.0, 1.0), [path[-1]]])
        v, _ = scalar_step_cost(pts[:-1], pts[1:], a, sigma, alt_denominator)
        return float(v.sum())

    x0 = np.asarray(path[1:-1], dtype=float)
    base = total(x0)
    if not np.isfinite(base):
        return path, None
    # finite differences may straddle an infinite-cost boundary; those steps are simply rejected
    with warnings.catch_warnings(), np.errstate(invalid="ignore", over="ignore"):
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(total, x0, method="L-BFGS-B", bounds=[(0.0, 1.0)] * len(x0),
                       options=dict(ftol=1e-15, gtol=1e-12, maxiter=2000))
    if np.isfinite(res.fun) and res.fun < base:
        return np.concatenate([[path[0]], np.clip(res.x, 0.0, 1.0), [path[-1]]]), res.fun
    return path, None


def scalar_path_cost(s: float, t: float, l_max: int, a: float, sigma: float, alt_denominator: bool = False,
                     grid_size: int = 401, polish: bool = True, exact_l: Optional[int] = None) -> CostResult:
    """Infimum over ``l <= l_max`` (or ``l == exact_l``) of the summed one-dimensional step costs from ``s`` to ``t``.

    Dynamic programming over a grid containing ``s``, ``t``, the fixed
    point and the forward orbit of ``s``, followed by continuous polishing
    of the best path's interior points.
    """
    grid = _scalar_grid(s, t, a, sigma, l_max, grid_size)
    cost, _ = scalar_step_cost(grid[:, None], grid[None, :], a, sigma, alt_denominator)
    src = int(np.searchsorted(grid, s))
    dst = int(np.searchsorted(grid, t))
    per_l, back = _dp_paths(grid, cost, src, dst, l_max)
    if exact_l is not None:
        best_l = exact_l
    else:
        best_l = int(np.argmin(per_l)) + 1
    value = float(per_l[best_l - 1])
    path = grid[_dp_path(back, best_l, dst)]
    if polish and np.isfinite(value) and value > 0:
        path, polished = _polish(path, a, sigma, alt_denominator)
        if polished is not None and polished < value:
            value = polished
    _, gamma = scalar_step_cost(path[:-1], path[1:], a, sigma, alt_denominator)
    return CostResult(value=max(0.0, value), path=path, gamma=gamma, l=best_l)


def master_cost(s: float, t: float, a: float, sigma: float, l_max: int = 50, **kw) -> CostResult:
    """Cost of the master class alone: ``inf_{l <= l_max} V_l(s, t)`` with ``K = 0``."""
    return scalar_path_cost(s, t, l_max, a, sigma, **kw)


def master_cost_zero_check(s: float, t: float, a: float, sigma: float, l_max: int = 50, tol: float = 1e-6) -> bool:
    """Whether the master-class cost from ``s`` to ``t`` vanishes (numerically below ``tol``).

    Requires ``sigma e^{-a} > 1``.
    """
    if sigma * math.exp(-a) <= 1.0:
        raise ValidationError("the zero-set characterisation needs sigma e^{-a} > 1")
    return master_cost(s, t, a, sigma, l_max=l_max).value < tol


# --- error threshold ------------------------------------------------------------------

@dataclass
class PsiResult:
    value: float
    l: Optional[int]
    path: Optional[np.ndarray]
    gamma: Optional[np.ndarray]
    l_max: int
    stabilized: bool
    history: list = field(default_factory=list)


def psi_details(a: float, sigma: float, l_max: int = 20, alt_denominator: bool = False, stabilize: bool = True,
                grid_size: int = 401, l_cap: int = 640, rtol: float = 1e-3) -> PsiResult:
    """Minimal cost of a path of the master-class concentration from ``rho*_0`` down to 0.

    Each step ``rho_k -> rho_{k+1}`` costs ``I(sigma rho_k / ((sigma-1) rho_k + 1), gamma_k) +
    gamma_k I(e^{-a}, rho_{k+1} / gamma_k)``, minimised over ``gamma_k``; the path starts at
    ``rho_0 = rho*_0`` and ends at ``rho_l = 0``, and the infimum is taken over
    ``l <= l_max``.  With ``stabilize``, ``l_max`` is doubled until the value
    changes by less than ``rtol`` (relative) or ``l_cap`` is reached.

    When ``sigma e^{-a} <= 1`` the start point is 0 and the value is 0.
    ``alt_denominator`` replaces ``(sigma-1) rho + 1`` by ``(sigma-1) rho - 1``;
    negative selection probabilities then make the step cost infinite.
    """
    start = rho_star(a, sigma, 0).rho_star[0]
    if start == 0.0:
        return PsiResult(0.0, 0, np.array([0.0]), np.array([]), l_max, True, [(l_max, 0.0)])
    history = []
    L = l_max
    res = scalar_path_cost(start, 0.0, L, a, sigma, alt_denominator, grid_size)
    history.append((L, res.value))
    stabilized = not stabilize
    while stabilize:
        if L * 2 > l_cap:
            break
        L *= 2
        nxt = scalar_path_cost(start, 0.0, L, a, sigma, alt_denominator, grid_size)
        history.append((L, nxt.value))
        change = abs(res.value - nxt.value)
        if nxt.value < res.value:
            res = nxt
        if change <= rtol * max(abs(res.value), 1e-300) or not np.isfinite(res.value):
            stabilized = True
            break
    return PsiResult(res.value, res.l, res.path, res.gamma, L, stabilized, history)


def psi(a: float, sigma: float, l_max: int = 20, alt_denominator: bool = False, stabilize: bool = True,
        **kw) -> float:
    """Value of the error-threshold functional; see :func:`psi_details`."""
    if not (a > 0 and sigma > 1):
        raise ValidationError("psi needs a > 0 and sigma > 1")
    res = psi_details(a, sigma, l_max, alt_denominator, stabilize, **kw)
    if stabilize and not res.stabilized:
        warnings.warn(f"psi({a}, {sigma}) not stabilised up to l_max={res.l_max}: {res.history}", RuntimeWarning)
    return res.value


def critical_alpha(a: float, sigma: float, kappa: int, psi_value: Optional[float] = None) -> float:
    """``log(kappa) / psi(a)``: the quasispecies forms for ``alpha`` above this value; ``inf`` if ``psi(a) = 0``."""
    value = psi(a, sigma) if psi_value is None else psi_value
    if value <= 0.0:
        return math.inf
    return math.log(kappa) / value


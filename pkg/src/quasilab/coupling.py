"""Monotone coupling of occupancy chains, lower/upper bounding chains and the reduced chain.

The bounding chains send every individual outside the classes ``0..K`` to a
single absorbing class ``theta``: class ``ell`` for the lower chain, class
``K+1`` for the upper chain.  While a master sequence is present, the classes
``0..K`` of a bounding chain evolve as the reduced chain on
``{z in N^(K+1): sum(z) <= m}`` implemented at the end of this module.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

from .model import CouplingViolation, GuardError, ModelParams, ValidationError
from .occupancy import leq, lumped_fitness_vector, lumped_mutation_matrix

THETAS = ("lower", "upper")
Z_ENUMERATION_MAX_M = 12
Z_ENUMERATION_MAX_K = 2


def theta_class(theta: str, params: ModelParams) -> int:
    """Index of the class collecting everything beyond ``K``: ``ell`` (lower) or ``K+1`` (upper)."""
    if theta == "lower":
        return params.ell
    if theta == "upper":
        if params.K + 1 > params.ell:
            raise ValidationError("the upper chain needs K < ell")
        return params.K + 1
    raise ValidationError(f"theta must be one of {THETAS}, got {theta!r}")


# --- coupling map ---------------------------------------------------------

@functools.lru_cache(maxsize=64)
def _mutation_cdf(ell: int, q: float, kappa: int) -> np.ndarray:
    cdf = np.cumsum(lumped_mutation_matrix(ell, q, kappa), axis=1)
    # rows must be stochastically ordered exactly; corrections are at rounding level
    cdf = np.maximum.accumulate(cdf[::-1], axis=0)[::-1]
    cdf = np.minimum(cdf, 1.0)
    cdf[:, -1] = 1.0
    cdf.setflags(write=False)
    return cdf


def mutation_cdf(params: ModelParams) -> np.ndarray:
    """Cumulative rows of the lumped mutation matrix, ascending class order."""
    return _mutation_cdf(int(params.ell), float(params.q), int(params.kappa))


def coupling_map(o, r, params: ModelParams) -> np.ndarray:
    """Next occupancy driven by the uniform matrix ``r`` (shape ``(m, ell+1)``).

    Child ``i`` takes its parent class by inverse CDF of the selection law at
    ``r[i, 0]`` and its own class by inverse CDF of ``M_H(parent, .)`` at
    ``r[i, 1]``; classes are scanned from 0 upwards.  The remaining columns of
    ``r`` are not used.  The map is monotone for the prefix-sum order.
    """
    o = np.asarray(o, dtype=np.int64)
    r = np.asarray(r, dtype=float)
    m = int(o.sum())
    n_classes = o.shape[0]
    # selection CDF from exact integer prefix sums: (S_l + (sigma-1) o(0)) / (m + (sigma-1) o(0))
    extra = (params.sigma - 1.0) * o[0]
    sel_cdf = (np.cumsum(o) + extra) / (m + extra)
    last_occupied = int(np.flatnonzero(o)[-1])
    parents = np.minimum(np.searchsorted(sel_cdf, r[:, 0], side="right"), last_occupied)
    # same as searchsorted(cdf[parent], r[:, 1], side="right") row by row
    children = np.count_nonzero(mutation_cdf(params)[parents] <= r[:, 1, None], axis=1)
    np.minimum(children, n_classes - 1, out=children)
    return np.bincount(children, minlength=n_classes)


# --- projections and bounding maps ----------------------------------------

def project(o, K: int, target: int) -> np.ndarray:
    """Keep classes ``0..K`` and move all other individuals to class ``target``."""
    o = np.asarray(o, dtype=np.int64)
    out = np.zeros_like(o)
    out[: K + 1] = o[: K + 1]
    out[target] += o.sum() - o[: K + 1].sum()
    return out


def pi_lower(o, K: int) -> np.ndarray:
    o = np.asarray(o)
    return project(o, K, o.shape[0] - 1)


def pi_upper(o, K: int) -> np.ndarray:
    return project(o, K, K + 1)


def enter_state(theta: str, params: ModelParams) -> np.ndarray:
    """Occupancy at which a bounding chain enters the set with a master sequence."""
    o = np.zeros(params.ell + 1, dtype=np.int64)
    if theta_class(theta, params) == params.ell:
        o[0], o[params.ell] = 1, params.m - 1
    else:
        o[0] = params.m
    return o


def exit_state(theta: str, params: ModelParams) -> np.ndarray:
    """Occupancy at which a bounding chain lands when the last master sequence is lost."""
    o = np.zeros(params.ell + 1, dtype=np.int64)
    if theta_class(theta, params) == params.ell:
        o[params.ell] = params.m
    else:
        o[1] = params.m
    return o


def bounded_map(o, r, params: ModelParams, theta: str) -> np.ndarray:
    """Lower (``theta="lower"``) or upper (``theta="upper"``) coupling map.

    Without master sequences the chain follows ``coupling_map`` until one
    appears, then jumps to the enter state.  With master sequences it applies
    ``coupling_map`` to the projected state and projects again, unless the
    last master is lost, in which case it jumps to the exit state.
    """
    target = theta_class(theta, params)
    o = np.asarray(o, dtype=np.int64)
    if o[0] == 0:
        nxt = coupling_map(o, r, params)
        return enter_state(theta, params) if nxt[0] >= 1 else nxt
    nxt = coupling_map(project(o, params.K, target), r, params)
    if nxt[0] == 0:
        return exit_state(theta, params)
    return project(nxt, params.K, target)


def lower_map(o, r, params: ModelParams) -> np.ndarray:
    return bounded_map(o, r, params, "lower")


def upper_map(o, r, params: ModelParams) -> np.ndarray:
    return bounded_map(o, r, params, "upper")


def run_coupled(o0, steps: int, params: ModelParams, rng: np.random.Generator):
    """Drive the lower, true and upper occupancy chains with the same uniform matrices.

    Returns
    -------
    lower, true, upper : ndarray, shape (steps+1, ell+1)

    Raises
    ------
    CouplingViolation
        If ``lower <= true <= upper`` fails at some step.
    """
    m, n_classes = params.m, params.ell + 1
    traj = np.empty((3, steps + 1, n_classes), dtype=np.int64)
    lo = tr = up = np.asarray(o0, dtype=np.int64)
    traj[:, 0] = lo
    for n in range(1, steps + 1):
        r = rng.random((m, n_classes))
        lo = lower_map(lo, r, params)
        tr = coupling_map(tr, r, params)
        up = upper_map(up, r, params)
        if not (leq(lo, tr) and leq(tr, up)):
            raise CouplingViolation(f"sandwich broken at step {n}: {lo} / {tr} / {up}")
        traj[0, n], traj[1, n], traj[2, n] = lo, tr, up
    return traj[0], traj[1], traj[2]


def run_bounded(o0, steps: int, params: ModelParams, theta: str, rng: np.random.Generator) -> np.ndarray:
    """Trajectory of one bounding occupancy chain."""
    m, n_classes = params.m, params.ell + 1
    traj = np.empty((steps + 1, n_classes), dtype=np.int64)
    o = traj[0] = np.asarray(o0, dtype=np.int64)
    for n in range(1, steps + 1):
        o = traj[n] = bounded_map(o, rng.random((m, n_classes)), params, theta)
    return traj


# --- reduced chain ----------------------------------------------------------

def z_enter(theta: str, params: ModelParams) -> tuple:
    return tuple(int(v) for v in enter_state(theta, params)[: params.K + 1])


def z_exit(theta: str, params: ModelParams) -> tuple:
    return tuple(int(v) for v in exit_state(theta, params)[: params.K + 1])


def state_tag(z, theta: str, params: ModelParams) -> str:
    """``"enter"``, ``"exit"`` or ``""`` for a reduced state."""
    z = tuple(int(v) for v in z)
    if z == z_exit(theta, params):
        return "exit"
    if z == z_enter(theta, params):
        return "enter"
    return ""


def reduced_kernel(params: ModelParams, theta: str) -> np.ndarray:
    """Rows ``0..K`` and ``theta`` of the lumped mutation matrix, columns ``0..K``.

    Returns an array of shape ``(K+2, K+1)``; the last row belongs to ``theta``.
    """
    M = lumped_mutation_matrix(params.ell, params.q, params.kappa)
    rows = list(range(params.K + 1)) + [theta_class(theta, params)]
    return np.array(M[rows, : params.K + 1])


def _compositions(total_max: int, allowed) -> list:
    """Non-negative integer vectors with ``v_i = 0`` where not ``allowed[i]`` and ``sum(v) <= total_max``."""
    out = []
    n = len(allowed)

    def rec(i, left, acc):
        if i == n:
            out.append(tuple(acc))
            return
        if not allowed[i]:
            rec(i + 1, left, acc + [0])
            return
        for v in range(left + 1):
            rec(i + 1, left - v, acc + [v])

    rec(0, total_max, [])
    return out


def _log_multinomial(n, counts, probs) -> float:
    """log of ``n! / (prod c! (n - sum c)!) prod p^c (1 - sum p)^(n - sum c)``."""
    counts = np.asarray(counts, dtype=float)
    rest = n - counts.sum()
    p_rest = max(0.0, 1.0 - float(np.sum(probs)))
    return float(
        gammaln(n + 1) - gammaln(counts + 1).sum() - gammaln(rest + 1)
        + xlogy(counts, probs).sum() + xlogy(rest, p_rest)
    )


def _check_guard(params: ModelParams):
    if params.m > Z_ENUMERATION_MAX_M or params.K > Z_ENUMERATION_MAX_K:
        raise GuardError(
            f"exact reduced-chain enumeration is limited to m <= {Z_ENUMERATION_MAX_M}, "
            f"K <= {Z_ENUMERATION_MAX_K} (got m={params.m}, K={params.K}); use z_step"
        )


def _generic_row(z: tuple, params: ModelParams, theta: str) -> dict:
    """Sum of ``p(z, s, b, z')`` over compatible ``s`` and ``b``, for every ``z'``.

    The enumeration visits each triple ``(s, b, d)`` once, where ``d`` counts
    the children of class-``theta`` parents landing in ``0..K``; then
    ``z' = colsum(b) + d``, so ``b`` is compatible with ``(s, z')`` by construction.
    """
    m, K = params.m, params.K
    kern = reduced_kernel(params, theta)
    z_arr = np.asarray(z, dtype=float)
    rest_z = m - int(sum(z))
    weights = np.concatenate([[params.sigma * z_arr[0]], z_arr[1:]])
    log_norm = m * np.log((params.sigma - 1.0) * z[0] + m)
    row = {}
    for s in _compositions(m, [zi > 0 for zi in z]):
        s_tot = sum(s)
        if rest_z == 0 and s_tot != m:
            continue
        log_ps = float(
            gammaln(m + 1) - gammaln(np.asarray(s) + 1.0).sum() - gammaln(m - s_tot + 1)
            + xlogy(np.asarray(s, dtype=float), weights).sum() + xlogy(m - s_tot, rest_z) - log_norm
        )
        if log_ps == -np.inf:
            continue
        per_class = []
        for i in range(K + 1):
            options = []
            for bi in _compositions(s[i], [True] * (K + 1)):
                lp = _log_multinomial(s[i], bi, kern[i])
                if lp > -np.inf:
                    options.append((np.asarray(bi), lp))
            per_class.append(options)
        theta_options = []
        for d in _compositions(m - s_tot, [True] * (K + 1)):
            lp = _log_multinomial(m - s_tot, d, kern[K + 1])
            if lp > -np.inf:
                theta_options.append((np.asarray(d), lp))
        for combo in itertools.product(*per_class):
            col = np.zeros(K + 1, dtype=np.int64)
            lp_b = 0.0
            for bi, lp in combo:
                col += bi
                lp_b += lp
            for d, lp_d in theta_options:
                key = tuple(int(v) for v in col + d)
                row[key] = row.get(key, 0.0) + np.exp(log_ps + lp_b + lp_d)
    return row


@functools.lru_cache(maxsize=4096)
def _z_row_cached(z: tuple, params: ModelParams, theta: str) -> tuple:
    exit_z = z_exit(theta, params)
    if z == exit_z:
        return ((z_enter(theta, params), 1.0),)
    if z[0] == 0:
        return ((z, 1.0),)
    row = {}
    for key, prob in _generic_row(z, params, theta).items():
        if key[0] == 0:
            key = exit_z
        row[key] = row.get(key, 0.0) + prob
    return tuple(sorted(row.items()))


def z_transition_row(z, params: ModelParams, theta: str) -> dict:
    """Exact transition row of the reduced chain from ``z``.

    Raises
    ------
    GuardError
        Past ``m <= 12``, ``K <= 2``.
    """
    _check_guard(params)
    theta_class(theta, params)
    z = tuple(int(v) for v in z)
    if len(z) != params.K + 1 or min(z) < 0 or sum(z) > params.m:
        raise ValidationError(f"{z} is not a reduced state for m={params.m}, K={params.K}")
    return dict(_z_row_cached(z, params, theta))


def z_transition_prob(z, z2, params: ModelParams, theta: str) -> float:
    """Exact transition probability ``p_theta(z, z2)`` of the reduced chain.

    Mass of every generic successor without master sequences is assigned to
    the exit state; the exit state moves to the enter state with probability
    one; states without master sequences other than the exit state are
    absorbing (they are never reached).
    """
    return z_transition_row(z, params, theta).get(tuple(int(v) for v in z2), 0.0)


def reduced_states(params: ModelParams) -> list:
    """All ``z`` with ``K+1`` non-negative entries and ``sum(z) <= m``."""
    return _compositions(params.m, [True] * (params.K + 1))


def z_step(z, params: ModelParams, theta: str, rng: np.random.Generator, kern=None) -> tuple:
    """Sample the next reduced state mechanistically: selection, then mutation of each parent group."""
    z = tuple(int(v) for v in z)
    exit_z = z_exit(theta, params)
    if z == exit_z:
        return z_enter(theta, params)
    if z[0] == 0:
        return z
    if kern is None:
        kern = reduced_kernel(params, theta)
    m, K = params.m, params.K
    rest = m - sum(z)
    w = np.array([params.sigma * z[0], *z[1:], rest], dtype=float)
    s = rng.multinomial(m, w / w.sum())
    new = np.zeros(K + 1, dtype=np.int64)
    for i in range(K + 2):
        if s[i] == 0:
            continue
        p = np.append(kern[i], max(0.0, 1.0 - kern[i].sum()))
        new += rng.multinomial(s[i], p / p.sum())[: K + 1]
    if new[0] == 0:
        return exit_z
    return tuple(int(v) for v in new)


# --- stopping times -----------------------------------------------------------

def first_passage(step, state, hit, rng, cap: int):
    """Run ``state = step(state, rng)`` until ``hit(state)``; return ``(time, state, censored)``.

    ``hit`` is checked at time 0 as well.  At most ``cap`` steps are taken.
    """
    n = 0
    while not hit(state):
        if n >= cap:
            return cap, state, True
        state = step(state, rng)
        n += 1
    return n, state, False


@dataclass
class HittingTimes:
    """Samples of the discovery time ``tau_star``, the return time ``tau`` and the persistence time ``tau0``.

    Censored samples are kept at the cap value and flagged.
    """

    tau_star: np.ndarray
    tau: np.ndarray
    tau0: np.ndarray
    censored_star: np.ndarray
    censored_tau: np.ndarray
    censored_tau0: np.ndarray

    def rows(self):
        for i in range(len(self.tau_star)):
            yield {
                "replica": i,
                "tau_star": int(self.tau_star[i]),
                "tau": int(self.tau[i]),
                "tau0": int(self.tau0[i]),
                "censored_star": int(self.censored_star[i]),
                "censored_tau": int(self.censored_tau[i]),
                "censored_tau0": int(self.censored_tau0[i]),
            }


def hitting_times(params: ModelParams, theta: str, replicas: int, seed: int, cap: int = 10**6,
                  measure=("tau_star", "tau", "tau0")) -> HittingTimes:
    """Sample the stopping times of a bounding chain.

    ``tau_star`` and ``tau`` are measured on the bounding occupancy chain
    started from its exit state: first time with a master sequence, then first
    return to the exit state.  ``tau0`` is measured on the reduced chain
    started from its enter state: first time without a master sequence.
    Quantities not listed in ``measure`` are reported as 0.
    """
    from .model import replica_rng

    out = {k: np.zeros(replicas, dtype=np.int64) for k in ("tau_star", "tau", "tau0")}
    cens = {k: np.zeros(replicas, dtype=bool) for k in ("tau_star", "tau", "tau0")}
    n_classes = params.ell + 1
    exit_o = exit_state(theta, params)
    kern = reduced_kernel(params, theta)

    def o_step(o, rng):
        return bounded_map(o, rng.random((params.m, n_classes)), params, theta)

    for rep in range(replicas):
        rng = replica_rng(seed, rep)
        if "tau_star" in measure or "tau" in measure:
            t_star, o, c = first_passage(o_step, exit_o, lambda o: o[0] >= 1, rng, cap)
            out["tau_star"][rep], cens["tau_star"][rep] = t_star, c
            if "tau" in measure:
                if c:
                    out["tau"][rep], cens["tau"][rep] = cap, True
                else:
                    t_ret, _, c2 = first_passage(o_step, o, lambda o: np.array_equal(o, exit_o), rng, cap - t_star)
                    out["tau"][rep], cens["tau"][rep] = t_star + t_ret, c2
        if "tau0" in measure:
            t0, _, c = first_passage(lambda z, g: z_step(z, params, theta, g, kern), z_enter(theta, params),
                                     lambda z: z[0] == 0, rng, cap)
            out["tau0"][rep], cens["tau0"][rep] = t0, c
    return HittingTimes(out["tau_star"], out["tau"], out["tau0"],
                        cens["tau_star"], cens["tau"], cens["tau0"])

"""Experiment harness: stationary estimates, renewal checks, stopping-time trends, phase scans and output."""
from __future__ import annotations

import csv
import functools
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .coupling import (Z_ENUMERATION_MAX_K, Z_ENUMERATION_MAX_M, bounded_map, hitting_times, reduced_kernel,
                       z_enter, z_step, z_transition_row)
from .dynamics import relaxation_time, rho_star
from .ldp import critical_alpha, psi
from .model import ModelParams, ValidationError, replica_rng, validate
from .occupancy import lumped_fitness_vector, lumped_mutation_matrix
from .sequence_wf import hamming_class_counts, master_population, wf_step

CHAINS = ("wf", "occupancy", "lower", "upper")
ABS_TOL = 0.05
SE_MULT = 4.0


# --- stationary estimates -----------------------------------------------------

@dataclass
class StationaryEstimate:
    """Time and replica averages of ``N_k / m`` for ``k = 0..K``.

    ``se`` is the standard error of the mean computed from the per-replica
    time averages (one batch per replica).  ``half_gap`` is the largest
    difference between first-half and second-half averages in units of its
    standard error; values above 4 flag an under-mixed run.
    """

    chain: str
    means: np.ndarray
    variances: np.ndarray
    se: np.ndarray
    replicas: int
    burn_in: int
    steps: int
    replica_means: np.ndarray = field(repr=False)
    half_gap: float = 0.0

    @property
    def under_mixed(self) -> bool:
        return self.half_gap > SE_MULT

    def tolerance(self, abs_tol: float = ABS_TOL, se_mult: float = SE_MULT) -> np.ndarray:
        """Per-class acceptance half-width ``max(abs_tol, se_mult * se)``."""
        return np.maximum(abs_tol, se_mult * self.se)

    def rows(self, target=None, abs_tol: float = ABS_TOL, se_mult: float = SE_MULT):
        tol = self.tolerance(abs_tol, se_mult)
        for k in range(len(self.means)):
            row = {"k": k, "mean": float(self.means[k]), "variance": float(self.variances[k]),
                   "se": float(self.se[k])}
            if target is not None:
                row["rho_star"] = float(target[k])
                row["tolerance"] = float(tol[k])
                row["within"] = int(abs(self.means[k] - target[k]) <= tol[k])
            yield row


def default_burn_in(params: ModelParams) -> int:
    """Ten times the relaxation time of the deterministic orbit, at least 100 steps."""
    return max(100, 10 * relaxation_time(params.effective_a, params.sigma, params.K))


def _class_series(params: ModelParams, chain: str, total: int, rng) -> np.ndarray:
    """Counts of classes ``0..K`` along ``total + 1`` states started all-master."""
    K, m, n_classes = params.K, params.m, params.ell + 1
    out = np.empty((total + 1, K + 1), dtype=np.int64)
    if chain == "wf":
        x = master_population(params)
        out[0] = hamming_class_counts(x, params.ell)[: K + 1]
        for n in range(1, total + 1):
            x = wf_step(x, params, rng)
            out[n] = hamming_class_counts(x, params.ell)[: K + 1]
        return out
    o = np.zeros(n_classes, dtype=np.int64)
    o[0] = m
    out[0] = o[: K + 1]
    if chain == "occupancy":
        fit = lumped_fitness_vector(params)
        M = lumped_mutation_matrix(params.ell, params.q, params.kappa)
        for n in range(1, total + 1):
            w = o * fit
            p = np.clip((w / w.sum()) @ M, 0.0, None)
            o = rng.multinomial(m, p / p.sum())
            out[n] = o[: K + 1]
        return out
    for n in range(1, total + 1):
        o = bounded_map(o, rng.random((m, n_classes)), params, chain)
        out[n] = o[: K + 1]
    return out


def estimate_stationary(params: ModelParams, chain: str = "occupancy", burn_in=None, steps: int = 10**4,
                        replicas: int = 32, seed: int = 0) -> StationaryEstimate:
    """Estimate the stationary means and variances of ``N_k / m`` for ``k <= K``.

    Each replica starts from the all-master population, discards ``burn_in``
    steps (default: :func:`default_burn_in`) and records the next ``steps``
    states.  Replica ``i`` draws from ``replica_rng(seed, i)``.
    """
    validate(params, allow_zero_q=True)
    if chain not in CHAINS:
        raise ValidationError(f"chain must be one of {CHAINS}, got {chain!r}")
    if steps < 2 or replicas < 2:
        raise ValidationError("need steps >= 2 and replicas >= 2")
    burn_in = default_burn_in(params) if burn_in is None else int(burn_in)
    K1 = params.K + 1
    rep_means = np.empty((replicas, K1))
    halves = np.empty((replicas, 2, K1))
    sum_sq = np.zeros(K1)
    for rep in range(replicas):
        series = _class_series(params, chain, burn_in + steps, replica_rng(seed, rep))[burn_in + 1:] / params.m
        rep_means[rep] = series.mean(axis=0)
        sum_sq += (series**2).sum(axis=0)
        half = steps // 2
        halves[rep] = series[:half].mean(axis=0), series[half:].mean(axis=0)
    means = rep_means.mean(axis=0)
    variances = np.clip(sum_sq / (replicas * steps) - means**2, 0.0, None)
    se = rep_means.std(axis=0, ddof=1) / math.sqrt(replicas)
    diff = halves[:, 0] - halves[:, 1]
    diff_se = diff.std(axis=0, ddof=1) / math.sqrt(replicas)
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.where(diff_se > 0, np.abs(diff.mean(axis=0)) / diff_se, 0.0)
    return StationaryEstimate(chain, means, variances, se, replicas, burn_in, steps, rep_means, float(gap.max()))


# --- renewal identity -----------------------------------------------------------

@dataclass
class RenewalResult:
    time_average: float
    time_average_se: float
    cycle_ratio: float
    cycle_ratio_se: float
    cycles: int
    exact: float = math.nan

    @property
    def discrepancy(self) -> float:
        """``|time_average - cycle_ratio|`` in units of the combined standard error."""
        se = math.hypot(self.time_average_se, self.cycle_ratio_se)
        gap = abs(self.time_average - self.cycle_ratio)
        return 0.0 if gap == 0 else gap / se if se > 0 else math.inf

    def rows(self):
        yield {"method": "time_average", "estimate": self.time_average, "se": self.time_average_se,
               "cycles": "", "exact": self.exact}
        yield {"method": "cycle_ratio", "estimate": self.cycle_ratio, "se": self.cycle_ratio_se,
               "cycles": self.cycles, "exact": self.exact}


def renewal_check(step, e, f=None, horizon: int = 10**5, replicas: int = 8, seed: int = 0,
                  in_wstar=None, same_state=None) -> RenewalResult:
    """Compare the two sides of the regeneration identity for the mean of ``f`` under the stationary law.

    Parameters
    ----------
    step : callable
        ``step(state, rng) -> state``, one transition of the chain.
    e : state
        Regeneration state; cycles are the excursions between visits to ``e``.
    f : callable, optional
        Function of the state; defaults to the indicator of ``in_wstar``.
    horizon : int
        Steps per replica for each side.
    in_wstar : callable, optional
        Membership predicate of the state subset of interest.
    same_state : callable, optional
        Equality test for states; defaults to ``==`` on tuples.

    Notes
    -----
    The time average runs from ``e`` and drops its first tenth.  The cycle
    ratio ``sum f over cycles / total cycle length`` uses independent streams
    and only complete cycles; its standard error comes from the delta
    method over the pooled cycles.
    """
    if f is None:
        if in_wstar is None:
            raise ValidationError("give f or in_wstar")
        f = lambda x: 1.0 if in_wstar(x) else 0.0  # noqa: E731
    if same_state is None:
        same_state = lambda x, y: tuple(np.ravel(x)) == tuple(np.ravel(y))  # noqa: E731
    burn = horizon // 10
    averages = np.empty(replicas)
    ys, taus = [], []
    for rep in range(replicas):
        rng = replica_rng(seed, 2 * rep)
        x, acc = e, 0.0
        for n in range(burn + horizon):
            if n >= burn:
                acc += f(x)
            x = step(x, rng)
        averages[rep] = acc / horizon
        rng = replica_rng(seed, 2 * rep + 1)
        x, y, tau, used = e, 0.0, 0, 0
        while used < horizon:
            y += f(x)
            x = step(x, rng)
            tau += 1
            used += 1
            if same_state(x, e):
                ys.append(y)
                taus.append(tau)
                y, tau = 0.0, 0
    if len(taus) < 2:
        raise ValidationError("fewer than two complete cycles; increase horizon")
    ys, taus = np.array(ys), np.array(taus, dtype=float)
    ratio = ys.sum() / taus.sum()
    ratio_se = float(np.std(ys - ratio * taus, ddof=1) / (taus.mean() * math.sqrt(len(taus))))
    return RenewalResult(float(averages.mean()), float(averages.std(ddof=1) / math.sqrt(replicas)),
                         float(ratio), ratio_se, len(taus))


def two_state_chain(p01: float, p10: float):
    """Step function of the chain on ``{0, 1}`` with the given switching probabilities."""
    def step(x, rng):
        u = rng.random()
        if x == 0:
            return 1 if u < p01 else 0
        return 0 if u < p10 else 1
    return step


def reduced_stationary(params: ModelParams, theta: str) -> dict:
    """Exact stationary law of the reduced chain on the states reachable from its enter state."""
    start = z_enter(theta, params)
    seen, frontier = {start}, [start]
    while frontier:
        z = frontier.pop()
        for z2, p in z_transition_row(z, params, theta).items():
            if p > 0 and z2 not in seen:
                seen.add(z2)
                frontier.append(z2)
    states = sorted(seen)
    index = {z: i for i, z in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for z in states:
        for z2, p in z_transition_row(z, params, theta).items():
            P[index[z], index[z2]] += p
    # solve pi (P - I) = 0 with sum(pi) = 1
    A = np.vstack([P.T - np.eye(len(states)), np.ones(len(states))])
    b = np.zeros(len(states) + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return dict(zip(states, np.clip(pi, 0.0, None)))


def reduced_renewal_check(params: ModelParams, theta: str = "upper", horizon: int = 2 * 10**4,
                          replicas: int = 8, seed: int = 0, exact=None) -> RenewalResult:
    """Renewal check for the mean master fraction ``z_0 / m`` of the reduced chain, regenerating at its enter state.

    ``exact=True`` also solves the enumerated kernel for the true stationary
    mean (raises ``GuardError`` beyond the enumeration limits); ``None`` does
    so only when the limits allow it.
    """
    kern = reduced_kernel(params, theta)
    step = lambda z, rng: z_step(z, params, theta, rng, kern)  # noqa: E731
    f = lambda z: z[0] / params.m  # noqa: E731
    if exact is None:
        exact = params.m <= Z_ENUMERATION_MAX_M and params.K <= Z_ENUMERATION_MAX_K
    # solve first so an oversized request fails before any simulation
    value = float(sum(p * f(z) for z, p in reduced_stationary(params, theta).items())) if exact else math.nan
    res = renewal_check(step, z_enter(theta, params), f, horizon, replicas, seed)
    res.exact = value
    return res


# --- stopping times -----------------------------------------------------------

@dataclass
class TimeSummary:
    params: ModelParams
    theta: str
    mean_tau_star: float
    mean_tau0: float
    censored_star: float
    censored_tau0: float
    max_tau_star: int
    max_tau0: int


def measure_times(params: ModelParams, replicas: int = 20, cap: int = 10**6, seed: int = 0, theta: str = "upper",
                  measure=("tau_star", "tau0")) -> TimeSummary:
    """Sample means and censoring rates of ``tau_star`` and ``tau0``; censored samples count at the cap."""
    validate(params, allow_zero_q=True)
    h = hitting_times(params, theta, replicas, seed, cap=cap, measure=measure)
    return TimeSummary(params, theta, float(h.tau_star.mean()), float(h.tau0.mean()),
                       float(h.censored_star.mean()), float(h.censored_tau0.mean()),
                       int(h.tau_star.max()), int(h.tau0.max()))


def time_trend(base: ModelParams, vary: str, values, replicas: int = 20, cap: int = 10**6, seed: int = 0,
               theta: str = "upper", measure=("tau_star", "tau0")):
    """Rows of the trend table of mean stopping times as ``vary`` (``"m"`` or ``"ell"``) runs over ``values``.

    With ``vary="ell"`` the product ``ell * q`` is held at its base value.
    """
    rows = []
    for v in values:
        if vary == "ell":
            p = base.with_(ell=int(v), q=base.effective_a / int(v))
        elif vary == "m":
            p = base.with_(m=int(v))
        else:
            raise ValidationError(f"cannot vary {vary!r}")
        s = measure_times(p, replicas, cap, seed, theta, measure)
        rows.append({vary: int(v), "mean_tau_star": s.mean_tau_star, "censored_star": s.censored_star,
                     "mean_tau0": s.mean_tau0, "censored_tau0": s.censored_tau0})
    return rows


# --- phase scan ---------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _psi_cached(a: float, sigma: float, l_max: int) -> float:
    return psi(a, sigma, l_max=l_max)


def phase_rows(a_grid, sigma: float, kappa: int, l_max: int = 20):
    """Rows ``(a, psi, alpha_c)``: the predicted critical population ratio along ``a_grid``."""
    for a in a_grid:
        value = _psi_cached(float(a), float(sigma), l_max)
        yield {"a": float(a), "psi": value, "alpha_c": critical_alpha(a, sigma, kappa, value)}


def phase_scan(a_grid, alpha_grid, ell: int = 20, kappa: int = 2, sigma: float = 2.0, burn_in=None,
               steps: int = 2000, replicas: int = 4, seed: int = 0, l_max: int = 20):
    """Predicted phase and simulated stationary master fraction on the grid ``a_grid x alpha_grid``.

    The occupancy chain runs at ``q = a / ell`` and ``m = round(alpha * ell)``;
    every grid point uses the same seed.  One row per grid point.
    """
    rows = []
    for a in a_grid:
        value = _psi_cached(float(a), float(sigma), l_max)
        target = rho_star(a, sigma, 0).rho_star[0]
        for alpha in alpha_grid:
            params = validate(ModelParams.from_regime(a, alpha, ell, kappa, sigma, K=0))
            est = estimate_stationary(params, "occupancy", burn_in, steps, replicas, seed)
            ordered = alpha * value > math.log(kappa)
            rows.append({
                "a": float(a), "alpha": float(alpha), "ell": ell, "m": params.m, "q": params.q,
                "psi": value, "alpha_c": critical_alpha(a, sigma, kappa, value),
                "phase": "quasispecies" if ordered else "disordered",
                "rho0_star": float(target), "mean_N0": float(est.means[0]), "se_N0": float(est.se[0]),
            })
    return rows


# --- output -------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def to_csv(rows, metadata=None, columns=None) -> str:
    """CSV text with ``# key: value`` metadata lines first; floats use ``repr`` so output is exact."""
    rows = list(rows)
    buf = io.StringIO()
    for key, value in (metadata or {}).items():
        buf.write(f"# {key}: {value}\n")
    columns = columns or (list(rows[0]) if rows else [])
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return str(v)


def to_json(rows, metadata=None) -> str:
    return json.dumps({"metadata": metadata or {}, "rows": list(rows)}, default=_jsonable, indent=2) + "\n"


def trajectory_rows(traj, K: int, m: int, replica: int, tags=None):
    """Rows ``replica, step, N_0..N_K, N_rest`` of a class-count trajectory."""
    for n, counts in enumerate(traj):
        row = {"replica": replica, "step": n}
        for k in range(K + 1):
            row[f"N_{k}"] = int(counts[k])
        row["N_rest"] = int(m - counts[: K + 1].sum())
        if tags is not None:
            row["state_tag"] = tags[n]
        yield row

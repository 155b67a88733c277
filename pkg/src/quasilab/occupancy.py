"""Occupancy chain: class counts ``o = (o(0), ..., o(ell))`` with ``sum(o) = m``."""
from __future__ import annotations

import functools
import math

import numpy as np
from scipy.special import gammaln
from scipy.stats import binom

from .model import ModelParams, ValidationError


def check_occupancy(o, params: ModelParams) -> np.ndarray:
    o = np.array(o, dtype=np.int64, ndmin=1)
    if o.shape != (params.ell + 1,):
        raise ValidationError(f"occupancy needs ell+1 = {params.ell + 1} entries, got {o.shape[0]}")
    if np.any(o < 0) or o.sum() != params.m:
        raise ValidationError(f"{o} is not an occupancy distribution of m = {params.m}")
    return o


def lumped_fitness(b: int, sigma: float) -> float:
    return sigma if b == 0 else 1.0


def _log_comb(n: int, k: int) -> float:
    if n <= 60:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _log_pow(p: float, n: int) -> float:
    # n * log(p) with 0^0 = 1
    if n == 0:
        return 0.0
    return n * math.log(p) if p > 0 else -math.inf


def lumped_mutation(b: int, c: int, ell: int, q: float, kappa: int) -> float:
    """Probability that a child of a class-``b`` parent lands in class ``c``.

    Direct evaluation of the finite double sum over ``k`` fresh mutations
    (among the ``ell - b`` matching loci) and ``l`` back mutations (among the
    ``b`` mismatching loci) with ``k - l = c - b``.  Each term is evaluated in
    log space so that ``ell`` in the thousands does not overflow.
    """
    if not (0 <= b <= ell and 0 <= c <= ell):
        raise ValidationError(f"classes must lie in 0..{ell}")
    back = q / (kappa - 1)
    total = 0.0
    for l in range(0, b + 1):
        k = c - b + l
        if k < 0 or k > ell - b:
            continue
        log_term = (
            _log_comb(ell - b, k)
            + _log_comb(b, l)
            + _log_pow(q, k)
            + _log_pow(1.0 - q, ell - b - k)
            + _log_pow(back, l)
            + _log_pow(1.0 - back, b - l)
        )
        total += math.exp(log_term)
    return total


@functools.lru_cache(maxsize=64)
def _lumped_mutation_matrix(ell: int, q: float, kappa: int) -> np.ndarray:
    back = q / (kappa - 1)
    mat = np.zeros((ell + 1, ell + 1))
    for b in range(ell + 1):
        forward = binom.pmf(np.arange(ell - b + 1), ell - b, q)
        reverse = binom.pmf(np.arange(b + 1), b, back)[::-1]
        # index i of the convolution is k + (b - l) = c
        mat[b] = np.convolve(forward, reverse)
    mat.setflags(write=False)
    return mat


def lumped_mutation_matrix(ell: int, q: float, kappa: int) -> np.ndarray:
    """The full ``(ell+1, ell+1)`` lumped mutation matrix (read-only, cached).

    Row ``b`` is the law of ``b + Bin(ell-b, q) - Bin(b, q/(kappa-1))``,
    computed as a convolution of the two binomial laws.
    """
    return _lumped_mutation_matrix(int(ell), float(q), int(kappa))


def lumped_fitness_vector(params: ModelParams) -> np.ndarray:
    a = np.ones(params.ell + 1)
    a[0] = params.sigma
    return a


def class_law(o, params: ModelParams) -> np.ndarray:
    """Per-child class law ``p_h = sum_k o(k) A_H(k) M_H(k,h) / sum_k o(k) A_H(k)``."""
    w = np.asarray(o, dtype=float) * lumped_fitness_vector(params)
    p = (w / w.sum()) @ lumped_mutation_matrix(params.ell, params.q, params.kappa)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def occupancy_transition_prob(o, o2, params: ModelParams) -> float:
    """Exact ``p_O(o, o2)``: multinomial law of ``o2`` with ``m`` trials and cell probabilities ``class_law(o)``.

    The multinomial coefficient ``m! / prod_h o2(h)!`` is included; without it
    the rows of the kernel do not sum to one.
    """
    o = check_occupancy(o, params)
    o2 = check_occupancy(o2, params)
    p = class_law(o, params)
    if np.any((p == 0) & (o2 > 0)):
        return 0.0
    mask = o2 > 0
    log_prob = gammaln(params.m + 1) - gammaln(o2 + 1).sum() + float(o2[mask] @ np.log(p[mask]))
    return float(np.exp(log_prob))


def occupancy_step(o, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Draw the next occupancy: ``m`` children i.i.d. from ``class_law(o)``."""
    return rng.multinomial(params.m, class_law(o, params))


def leq(o, o2) -> bool:
    """Partial order: every prefix sum of ``o`` is at most that of ``o2``.

    ``o2`` is higher when its individuals sit closer to the master sequence.
    """
    return bool(np.all(np.cumsum(o) <= np.cumsum(o2)))


def iter_occupancies(m: int, n_classes: int):
    """Yield every vector of ``n_classes`` non-negative integers summing to ``m``."""
    if n_classes == 1:
        yield (m,)
        return
    for first in range(m, -1, -1):
        for rest in iter_occupancies(m - first, n_classes - 1):
            yield (first,) + rest


def transition_matrix(params: ModelParams):
    """Dense exact kernel over all occupancies; returns ``(states, P)``. Tiny instances only."""
    states = list(iter_occupancies(params.m, params.ell + 1))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for i, s in enumerate(states):
        for t in states:
            P[i, index[t]] = occupancy_transition_prob(s, t, params)
    return states, P


def simulate_occupancy(params: ModelParams, steps: int, rng: np.random.Generator, o0=None) -> np.ndarray:
    """Trajectory of the occupancy chain, shape ``(steps+1, ell+1)``; starts all-master by default."""
    if o0 is None:
        o = np.zeros(params.ell + 1, dtype=np.int64)
        o[0] = params.m
    else:
        o = check_occupancy(o0, params)
    fit = lumped_fitness_vector(params)
    M = lumped_mutation_matrix(params.ell, params.q, params.kappa)
    traj = np.empty((steps + 1, params.ell + 1), dtype=np.int64)
    traj[0] = o
    for n in range(1, steps + 1):
        w = o * fit
        p = np.clip((w / w.sum()) @ M, 0.0, None)
        o = rng.multinomial(params.m, p / p.sum())
        traj[n] = o
    return traj

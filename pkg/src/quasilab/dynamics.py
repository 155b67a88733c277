"""Limiting deterministic dynamics of the classes ``0..K``.

Points live in ``D = {r in R^(K+1): r >= 0, sum(r) <= 1}``; ``a`` is the
limit of ``ell * q`` and ``sigma`` the master fitness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ConvergenceError, as_simplex_point


def selection_map_f(r, sigma: float) -> np.ndarray:
    """``f(r) = (sigma r_0, r_1, ..., r_K) / ((sigma - 1) r_0 + 1)``."""
    r = np.asarray(r, dtype=float)
    out = r / ((sigma - 1.0) * r[0] + 1.0)
    out[0] *= sigma
    return out


def poisson_weights(a: float, K: int) -> np.ndarray:
    """``e^{-a} a^j / j!`` for ``j = 0..K``."""
    if a == 0:
        return np.eye(K + 1)[0]
    return np.array([math.exp(-a + j * math.log(a) - math.lgamma(j + 1)) for j in range(K + 1)])


def limit_map_F(r, a: float, sigma: float) -> np.ndarray:
    """``F_k(r) = sum_{i<=k} f_i(r) e^{-a} a^{k-i} / (k-i)!``: selection then Poisson forward mutation."""
    fr = selection_map_f(r, sigma)
    w = poisson_weights(a, len(fr) - 1)
    return np.convolve(fr, w)[: len(fr)]


def limit_map_F_closed(r, a: float, sigma: float) -> np.ndarray:
    """Expanded form of ``F``, kept as a cross-check of :func:`limit_map_F`."""
    r = np.asarray(r, dtype=float)
    K = len(r) - 1
    out = np.empty(K + 1)
    for k in range(K + 1):
        acc = a**k / math.factorial(k) * sigma * r[0]
        for i in range(1, k + 1):
            acc += a ** (k - i) / math.factorial(k - i) * r[i]
        out[k] = math.exp(-a) / ((sigma - 1.0) * r[0] + 1.0) * acc
    return out


def scalar_map_Ftilde(r: float, a: float, sigma: float) -> float:
    """One-dimensional map ``e^{-a} sigma r / ((sigma - 1) r + 1)`` of the master class."""
    # same operation order as limit_map_F, so the two agree bit for bit
    return math.exp(-a) * (r / ((sigma - 1.0) * r + 1.0) * sigma)


@dataclass(frozen=True)
class QuasispeciesDistribution:
    rho_star: np.ndarray
    supercritical: bool

    def __iter__(self):
        return iter(self.rho_star)

    def __getitem__(self, k):
        return self.rho_star[k]


def _rho_star_k(k: int, a: float, sigma: float) -> float:
    # terms exp(log(sigma e^-a - 1) + k log a - log k! + k log i - i log sigma)
    log_pref = math.log(sigma * math.exp(-a) - 1.0) + k * math.log(a) - math.lgamma(k + 1)
    log_sigma = math.log(sigma)
    total = 0.0
    small = 0
    i = 1
    while small < 5:
        term = math.exp(log_pref + k * math.log(i) - i * log_sigma)
        total += term
        small = small + 1 if term < 1e-18 * total else 0
        i += 1
    return total


def rho_star(a: float, sigma: float, K: int) -> QuasispeciesDistribution:
    """Quasispecies concentrations ``rho*_k = (sigma e^{-a} - 1) a^k / k! sum_{i>=1} i^k sigma^{-i}``.

    All zero when ``sigma e^{-a} <= 1``.  The series is summed until the
    terms stay below ``1e-18`` times the partial sum for five terms in a row.
    """
    if sigma * math.exp(-a) <= 1.0:
        return QuasispeciesDistribution(np.zeros(K + 1), False)
    if a == 0.0:
        return QuasispeciesDistribution(np.eye(K + 1)[0], True)
    return QuasispeciesDistribution(np.array([_rho_star_k(k, a, sigma) for k in range(K + 1)]), True)


def iterate_to_fixed_point(z0, a: float, sigma: float, tol: float = 1e-12, max_iters: int = 10**6,
                           return_orbit: bool = False):
    """Iterate ``F`` from ``z0`` until the L1 step is below ``tol``.

    Returns
    -------
    z : ndarray
        Last iterate.
    n : int
        Number of applications of ``F``.
    orbit : ndarray, only if ``return_orbit``

    Raises
    ------
    ConvergenceError
        After ``max_iters`` iterations; near the critical line
        ``sigma e^{-a} = 1`` the contraction is slow and a larger budget is
        needed.
    """
    z = as_simplex_point(z0)
    orbit = [z] if return_orbit else None
    for n in range(1, max_iters + 1):
        nxt = limit_map_F(z, a, sigma)
        step = np.abs(nxt - z).sum()
        z = nxt
        if return_orbit:
            orbit.append(z)
        if step < tol:
            return (z, n, np.array(orbit)) if return_orbit else (z, n)
    gap = sigma * math.exp(-a) - 1.0
    hint = " (sigma e^-a is within 1e-3 of 1: increase max_iters)" if abs(gap) < 1e-3 else ""
    raise ConvergenceError(f"no convergence after {max_iters} iterations{hint}", last=z, iterations=max_iters)


def relaxation_time(a: float, sigma: float, K: int, eps: float = 1e-3, z0=None, max_iters: int = 10**6) -> int:
    """Iterations for the orbit of ``F`` from ``z0`` (default: all master) to get ``eps``-close to its limit."""
    target = rho_star(a, sigma, K).rho_star
    z = np.zeros(K + 1) if z0 is None else as_simplex_point(z0)
    if z0 is None:
        z[0] = 1.0
    for n in range(max_iters + 1):
        if np.abs(z - target).sum() < eps:
            return n
        z = limit_map_F(z, a, sigma)
    raise ConvergenceError(f"orbit not within {eps} of rho* after {max_iters} iterations", last=z)

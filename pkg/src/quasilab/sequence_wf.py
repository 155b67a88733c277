"""Exact Wright-Fisher chain on populations of sequences, sharp peak landscape.

A sequence is a length-``ell`` ``uint8`` vector over ``{0, ..., kappa-1}``;
the master sequence is the all-zero vector.  A population is an
``(m, ell)`` array, one row per individual.
"""
from __future__ import annotations

import itertools

import numpy as np

from .model import GuardError, ModelParams, ValidationError

ENUMERATION_LIMIT = 10**6


def master_population(params: ModelParams) -> np.ndarray:
    return np.zeros((params.m, params.ell), dtype=np.uint8)


def check_population(x, params: ModelParams) -> np.ndarray:
    x = np.asarray(x)
    if x.shape != (params.m, params.ell):
        raise ValidationError(f"population shape {x.shape} != (m, ell) = {(params.m, params.ell)}")
    if np.any(x < 0) or np.any(x >= params.kappa):
        raise ValidationError("letters must lie in {0, ..., kappa-1}")
    return x.astype(np.uint8, copy=False)


def distance_to_master(x) -> np.ndarray:
    """Hamming distance of each row of ``x`` (or of a single sequence) to the master."""
    return np.count_nonzero(np.asarray(x), axis=-1)


def fitness(u, sigma: float) -> float:
    """Sharp peak: ``sigma`` for the master sequence, 1 otherwise."""
    return sigma if not np.any(np.asarray(u)) else 1.0


def selection_probability(u, x, sigma: float) -> float:
    """Probability that an individual equal to ``u`` is drawn as a parent from ``x``."""
    x = np.asarray(x)
    u = np.asarray(u)
    weights = np.where(distance_to_master(x) == 0, sigma, 1.0)
    count = np.count_nonzero(np.all(x == u, axis=1))
    return fitness(u, sigma) * count / weights.sum()


def mutation_probability(u, v, q: float, kappa: int) -> float:
    """Per-locus product ``prod_j ((1-q) 1[u_j = v_j] + q/(kappa-1) 1[u_j != v_j])``."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise ValidationError("sequences must have equal lengths")
    d = int(np.count_nonzero(u != v))
    return (1.0 - q) ** (u.size - d) * (q / (kappa - 1)) ** d


def hamming_class_counts(x, ell: int) -> np.ndarray:
    """Vector ``N_k(x)``, ``k = 0..ell``: number of members at distance ``k`` from the master."""
    return np.bincount(distance_to_master(x), minlength=ell + 1)


def wf_step(x, params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """One generation: ``m`` parents sampled by fitness, then per-locus mutation.

    Every call consumes the same amount of randomness (``m`` parent uniforms,
    ``m * ell`` mutation uniforms, ``m * ell`` replacement letters), so two
    streams in the same state produce the same generation.
    """
    m, ell = x.shape
    weights = np.where(distance_to_master(x) == 0, params.sigma, 1.0)
    cdf = np.cumsum(weights)
    cdf /= cdf[-1]
    parents = np.minimum(np.searchsorted(cdf, rng.random(m), side="right"), m - 1)
    children = x[parents]
    mutate = rng.random((m, ell)) < params.q
    # shift in 1..kappa-1 is uniform over the other letters
    shift = rng.integers(1, params.kappa, size=(m, ell), dtype=np.uint8)
    mutated = (children + shift) % params.kappa
    return np.where(mutate, mutated, children).astype(np.uint8)


def all_sequences(ell: int, kappa: int) -> np.ndarray:
    """Every sequence of length ``ell``, in lexicographic order, as rows."""
    return np.array(list(itertools.product(range(kappa), repeat=ell)), dtype=np.uint8).reshape(-1, ell)


def child_law(x, params: ModelParams, space=None) -> np.ndarray:
    """Law of one child over ``space`` (default: all sequences): ``sum_u F(u,x) M(u,v)``."""
    if space is None:
        space = all_sequences(params.ell, params.kappa)
    x = np.asarray(x)
    weights = np.where(distance_to_master(x) == 0, params.sigma, 1.0)
    weights = weights / weights.sum()
    # summing over the members of x is summing F(u, x) over distinct u
    mismatches = np.count_nonzero(x[:, None, :] != space[None, :, :], axis=2)
    kernel = (1.0 - params.q) ** (params.ell - mismatches) * (params.q / (params.kappa - 1)) ** mismatches
    return weights @ kernel


def enumerate_transition_row(x, params: ModelParams) -> dict:
    """Exact transition row ``P(X_{n+1} = y | X_n = x)`` for every population ``y``.

    Keys are populations as tuples of sequences (each a tuple of letters).

    Raises
    ------
    GuardError
        If ``kappa ** (ell * m)`` exceeds ``ENUMERATION_LIMIT``.
    """
    size = params.kappa ** (params.ell * params.m)
    if size > ENUMERATION_LIMIT:
        raise GuardError(f"kappa^(ell*m) = {size} exceeds the enumeration limit {ENUMERATION_LIMIT}")
    x = check_population(x, params)
    space = all_sequences(params.ell, params.kappa)
    law = child_law(x, params, space)
    labels = [tuple(int(c) for c in row) for row in space]
    row = {}
    for idx in itertools.product(range(len(space)), repeat=params.m):
        prob = 1.0
        for i in idx:
            prob *= law[i]
        row[tuple(labels[i] for i in idx)] = prob
    return row


def simulate_wf(params: ModelParams, steps: int, rng: np.random.Generator, x0=None, record=None):
    """Run ``steps`` generations; return the ``(steps+1, ell+1)`` class-count trajectory.

    ``record`` may be a callback ``record(step, population)``.
    """
    x = master_population(params) if x0 is None else check_population(x0, params).copy()
    traj = np.empty((steps + 1, params.ell + 1), dtype=np.int64)
    traj[0] = hamming_class_counts(x, params.ell)
    if record is not None:
        record(0, x)
    for n in range(1, steps + 1):
        x = wf_step(x, params, rng)
        traj[n] = hamming_class_counts(x, params.ell)
        if record is not None:
            record(n, x)
    return traj

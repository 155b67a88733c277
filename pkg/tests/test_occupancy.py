import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasilab.model import ModelParams, ValidationError
from quasilab.occupancy import (check_occupancy, class_law, iter_occupancies, leq, lumped_fitness, lumped_mutation,
                                lumped_mutation_matrix, occupancy_step, occupancy_transition_prob,
                                simulate_occupancy, transition_matrix)
from quasilab.sequence_wf import all_sequences, enumerate_transition_row, hamming_class_counts
from conftest import within_se


def test_lumped_fitness():
    assert lumped_fitness(0, 2.0) == 2.0
    assert lumped_fitness(1, 2.0) == 1.0
    assert lumped_fitness(7, 2.0) == 1.0


def test_lumped_mutation_examples():
    assert lumped_mutation(0, 0, 12, 0.03, 2) == pytest.approx(0.97**12, rel=1e-14)
    assert abs(lumped_mutation(0, 1, 1000, 0.001, 2) - math.exp(-1)) < 2e-3


@pytest.mark.parametrize("ell", [1, 2, 5, 17, 30])
@pytest.mark.parametrize("kappa", [2, 4])
def test_lumped_rows_sum_to_one(ell, kappa):
    rows = [sum(lumped_mutation(b, c, ell, 0.04, kappa) for c in range(ell + 1)) for b in range(ell + 1)]
    assert np.allclose(rows, 1.0, atol=1e-10)


def test_matrix_agrees_with_double_sum():
    M = lumped_mutation_matrix(9, 0.07, 3)
    direct = np.array([[lumped_mutation(b, c, 9, 0.07, 3) for c in range(10)] for b in range(10)])
    assert np.abs(M - direct).max() < 1e-14
    assert not M.flags.writeable


def test_lumped_equals_sequence_level_sum():
    # M_H(b, c) = sum over v in class c of M(u, v) for any u in class b
    ell, kappa, q = 3, 3, 0.1
    space = all_sequences(ell, kappa)
    d = np.count_nonzero(space, axis=1)
    M = lumped_mutation_matrix(ell, q, kappa)
    for u in space[::4]:
        mism = np.count_nonzero(space != u, axis=1)
        probs = (1 - q) ** (ell - mism) * (q / (kappa - 1)) ** mism
        for c in range(ell + 1):
            assert abs(probs[d == c].sum() - M[np.count_nonzero(u), c]) < 1e-14


def test_lumping_oracle(tiny):
    states = list(iter_occupancies(tiny.m, tiny.ell + 1))
    space = all_sequences(tiny.ell, tiny.kappa)
    worst = 0.0
    for x in itertools.product(space, repeat=tiny.m):
        x = np.array(x)
        o = hamming_class_counts(x, tiny.ell)
        lumped = {}
        for y, p in enumerate_transition_row(x, tiny).items():
            key = tuple(hamming_class_counts(np.array(y), tiny.ell))
            lumped[key] = lumped.get(key, 0.0) + p
        for o2 in states:
            worst = max(worst, abs(lumped.get(o2, 0.0) - occupancy_transition_prob(o, o2, tiny)))
    assert worst < 1e-12


@pytest.mark.parametrize("ell,m", [(2, 2), (2, 3), (3, 3)])
def test_rows_sum_to_one(ell, m):
    p = ModelParams(ell=ell, m=m, q=0.1, sigma=2.0)
    _, P = transition_matrix(p)
    assert np.abs(P.sum(axis=1) - 1).max() < 1e-12


def test_no_mutation_all_master_fixed(rng):
    p = ModelParams(ell=4, m=5, q=1e-300, sigma=2.0)
    o = (5, 0, 0, 0, 0)
    assert occupancy_transition_prob(o, o, p) == pytest.approx(1.0, abs=1e-12)
    p0 = ModelParams(ell=4, m=5, q=0.0, sigma=2.0)
    assert list(occupancy_step(o, p0, rng)) == list(o)


def test_sampler_matches_exact_row():
    p = ModelParams(ell=2, m=3, q=0.15, sigma=2.0)
    o = (1, 1, 1)
    rng = np.random.default_rng(4)
    n = 30000
    counts = {}
    for _ in range(n):
        key = tuple(occupancy_step(o, p, rng))
        counts[key] = counts.get(key, 0) + 1
    for o2 in iter_occupancies(3, 3):
        assert within_se(counts.get(o2, 0), n, occupancy_transition_prob(o, o2, p), k=5.0)


def test_sampler_reproducible():
    p = ModelParams(ell=6, m=9, q=0.05)
    a = simulate_occupancy(p, 20, np.random.default_rng(2))
    b = simulate_occupancy(p, 20, np.random.default_rng(2))
    assert np.array_equal(a, b)
    assert (a.sum(axis=1) == 9).all()


def test_leq_examples():
    ell, m = 4, 5
    states = list(iter_occupancies(m, ell + 1))
    bottom = (0,) * ell + (m,)
    top = (m,) + (0,) * ell
    for o in states:
        assert leq(o, o)
        assert leq(bottom, o)
        assert leq(o, top)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6))
def test_leq_partial_order(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rng.multinomial(6, np.ones(4) / 4) for _ in range(3))
    if leq(a, b) and leq(b, a):
        assert np.array_equal(a, b)
    if leq(a, b) and leq(b, c):
        assert leq(a, c)


def test_class_law_depends_on_counts_only():
    p = ModelParams(ell=3, m=4, q=0.1)
    law = class_law([2, 1, 1, 0], p)
    assert abs(law.sum() - 1) < 1e-15
    assert np.array_equal(law, class_law(np.array([2, 1, 1, 0]), p))


def test_check_occupancy():
    p = ModelParams(ell=2, m=3)
    with pytest.raises(ValidationError):
        check_occupancy([1, 1], p)
    with pytest.raises(ValidationError):
        check_occupancy([1, 1, 0], p)

"""Acceptance criteria 1-11; each prints one PASS/FAIL line with its runtime and budget."""
import contextlib
import csv
import itertools
import math
import time

import numpy as np
import pytest

from quasilab import ldp
from quasilab.cli import main
from quasilab.coupling import coupling_map, lower_map, reduced_states, upper_map, z_exit, z_step, z_transition_row
from quasilab.dynamics import iterate_to_fixed_point, limit_map_F, rho_star, selection_map_f
from quasilab.experiments import reduced_renewal_check, renewal_check, two_state_chain
from quasilab.model import ModelParams
from quasilab.occupancy import iter_occupancies, leq, occupancy_transition_prob
from quasilab.sequence_wf import all_sequences, enumerate_transition_row, hamming_class_counts
from conftest import ACCEPTANCE_LINES
from oracles import v1_grid


@contextlib.contextmanager
def criterion(number, title, budget, capsys):
    start = time.perf_counter()
    status, detail = "FAIL", ""
    try:
        yield
        elapsed = time.perf_counter() - start
        if elapsed > budget:
            detail = f" (over budget: {elapsed:.1f}s > {budget}s)"
            raise AssertionError(f"criterion {number} took {elapsed:.1f}s, budget {budget}s")
        status = "PASS"
    except BaseException as err:
        detail = detail or f" ({type(err).__name__}: {str(err).splitlines()[0][:120] if str(err) else ''})"
        raise
    finally:
        line = f"ACCEPTANCE {number}: {status} {title} [{time.perf_counter() - start:.1f}s / {budget}s]{detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(ln for ln in fh if not ln.startswith("#")))


def test_1_lumping_exactness(capsys):
    with criterion(1, "lumping exactness", 10, capsys):
        p = ModelParams(ell=2, m=2, kappa=2, q=0.1, sigma=2.0)
        states = list(iter_occupancies(2, 3))
        worst = 0.0
        for x in itertools.product(all_sequences(2, 2), repeat=2):
            x = np.array(x)
            lumped = {}
            for y, prob in enumerate_transition_row(x, p).items():
                key = tuple(hamming_class_counts(np.array(y), 2))
                lumped[key] = lumped.get(key, 0.0) + prob
            o = hamming_class_counts(x, 2)
            for o2 in states:
                worst = max(worst, abs(lumped.get(o2, 0.0) - occupancy_transition_prob(o, o2, p)))
        assert worst < 1e-12, worst


def test_2_fixed_points(capsys):
    with criterion(2, "fixed-point reproduction", 5, capsys):
        rng = np.random.default_rng(2)
        for sigma, a, K in itertools.product([2.0, 4.0], [0.1, 0.3, 0.5], [0, 1, 2, 5]):
            rs = rho_star(a, sigma, K).rho_star
            assert np.abs(limit_map_F(rs, a, sigma) - rs).sum() < 1e-12
            for _ in range(20):
                z0 = rng.dirichlet(np.ones(K + 2))[: K + 1]
                z, _ = iterate_to_fixed_point(z0, a, sigma, tol=1e-13)
                assert np.abs(z - rs).sum() < 1e-10, (sigma, a, K, z0)


def test_3_normalization(capsys):
    with criterion(3, "quasispecies normalization", 1, capsys):
        assert rho_star(0.1, 2.0, 60).rho_star.sum() >= 1 - 1e-10


def test_4_coupling_sandwich(capsys):
    with criterion(4, "coupling sandwich", 60, capsys):
        p = ModelParams(ell=5, m=10, kappa=2, q=0.08, sigma=2.0, K=1)
        rng = np.random.default_rng(4)
        violations = 0
        for _ in range(10**5):
            o = rng.multinomial(10, rng.dirichlet(np.ones(6)))
            r = rng.random((10, 6))
            mid = coupling_map(o, r, p)
            violations += not (leq(lower_map(o, r, p), mid) and leq(mid, upper_map(o, r, p)))
        assert violations == 0, violations


def test_5_reduced_chain(capsys):
    with criterion(5, "reduced-chain stochasticity and sampler", 300, capsys):
        p = ModelParams(ell=4, m=6, kappa=2, q=0.1, sigma=2.0, K=1)
        rng = np.random.default_rng(5)
        draws = 10**6
        for theta in ("lower", "upper"):
            states = reduced_states(p)
            for z in states:
                assert abs(sum(z_transition_row(z, p, theta).values()) - 1.0) < 1e-10
            live = [z for z in states if z[0] >= 1]
            per_state = draws // (2 * len(live))
            for z in live:
                row = z_transition_row(z, p, theta)
                counts = {}
                for _ in range(per_state):
                    key = z_step(z, p, theta, rng)
                    counts[key] = counts.get(key, 0) + 1
                assert set(counts) <= set(row), (theta, z)
                for key, prob in row.items():
                    se = math.sqrt(per_state * prob * (1 - prob))
                    assert abs(counts.get(key, 0) - per_state * prob) <= 5 * se + 1e-9, (theta, z, key)


def test_6_rate_zero_sets(capsys):
    with criterion(6, "rate-function zero sets and grid oracle", 600, capsys):
        a, sigma = 0.3, 2.0
        rng = np.random.default_rng(6)
        for i in range(50):
            K = i % 3
            r = rng.dirichlet(np.ones(K + 2))[: K + 1]
            xi = selection_map_f(r, sigma)
            beta = xi[:, None] * ldp.limit_mutation_matrix(a, K)
            assert ldp.rate_I(r, xi, beta, beta.sum(axis=0), a, sigma) < 1e-14
            assert ldp.cost_V1(r, limit_map_F(r, a, sigma), a, sigma).value < 1e-8
        for _ in range(5):
            r = rng.dirichlet(np.ones(3))[:2]
            t = np.round(rng.dirichlet(np.ones(3))[:2] * 40) / 40
            oracle = v1_grid(r, t, a, sigma)
            value = ldp.cost_V1(r, t, a, sigma).value
            assert value <= oracle + 1e-9 and oracle - value < 0.02, (r, t, oracle, value)


def _stationary(tmp_path, name, m, q, a, seed=7):
    out = tmp_path / name
    code = main(["stationary", "--ell", "20", "--m", str(m), "--kappa", "2", "--q", str(q), "--a", str(a),
                 "--sigma", "2", "--K", "2", "--burn-in", "2000", "--steps", "10000", "--replicas", "32",
                 "--seed", str(seed), "--out", str(out)])
    assert code == 0
    return out


def test_7_supercritical_and_11_determinism(tmp_path, capsys):
    with criterion(7, "supercritical desk reproduction", 900, capsys):
        path = _stationary(tmp_path, "m200.csv", 200, 0.005, 0.1)
        rows = read_csv(path)
        header = open(path).read()
        assert "# abs_tol: 0.05" in header and "# se_mult: 4.0" in header and "# note:" in header
        assert abs(float(rows[0]["rho_star"]) - 0.809675) < 1e-6
        assert abs(float(rows[1]["rho_star"]) - 0.161935) < 1e-6
        for row in rows:
            tol = max(0.05, 4 * float(row["se"]))
            assert abs(float(row["mean"]) - float(row["rho_star"])) <= tol, row
            assert row["within"] == "1"
        doubled = read_csv(_stationary(tmp_path, "m400.csv", 400, 0.005, 0.1))
        for small, big in zip(rows, doubled):
            assert float(big["variance"]) < float(small["variance"]), (small, big)
    with criterion(11, "determinism of the criterion 7 CSV", 900, capsys):
        again = _stationary(tmp_path, "m200_again.csv", 200, 0.005, 0.1)
        assert again.read_bytes() == path.read_bytes()


def test_8_subcritical(tmp_path, capsys):
    with criterion(8, "subcritical desk reproduction", 600, capsys):
        rows = read_csv(_stationary(tmp_path, "sub.csv", 200, 0.05, 1.0))
        assert float(rows[0]["rho_star"]) == 0.0
        assert float(rows[0]["mean"]) < 0.02, rows[0]


def test_9_renewal(capsys):
    with criterion(9, "renewal identity", 120, capsys):
        res = renewal_check(two_state_chain(0.3, 0.6), 0, lambda x: float(x == 1), horizon=40000, replicas=8,
                            seed=9)
        assert abs(res.time_average - 1 / 3) <= 4 * res.time_average_se
        assert abs(res.cycle_ratio - 1 / 3) <= 4 * res.cycle_ratio_se
        p = ModelParams(ell=4, m=6, kappa=2, q=0.3, sigma=2.0, K=1)
        z = reduced_renewal_check(p, "upper", horizon=20000, replicas=8, seed=9)
        assert z.discrepancy <= 4, z
        assert abs(z.cycle_ratio - z.exact) <= 4 * z.cycle_ratio_se
        assert abs(z.time_average - z.exact) <= 4 * z.time_average_se


def _count_vectors(n, parts):
    if parts == 1:
        return np.arange(n + 1)[:, None]
    rest = _count_vectors(n, parts - 1)
    out = [np.column_stack([rest[rest.sum(axis=1) <= n - i], np.full((rest.sum(axis=1) <= n - i).sum(), i)])
           for i in range(n + 1)]
    return np.concatenate(out)


def test_10_multinomial_log_estimate(capsys):
    with criterion(10, "multinomial log-estimate lemma", 60, capsys):
        checked = 0
        for N in range(4):
            for n in range(1, 51):
                counts = _count_vectors(n, N + 1)
                ldp.log_multinomial_bound_check(n, counts)
                checked += len(counts)
        assert checked > 3 * 10**6

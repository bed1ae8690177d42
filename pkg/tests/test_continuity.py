import math

import numpy as np
import pytest
from scipy.linalg import expm

from conftest import random_density
from gibbscmi.errors import NumericalError
from gibbscmi.continuity import (
    continuity_bound,
    log_derivative_fd,
    log_derivative_oracle,
    log_gap,
    perturbed_pair,
    random_state,
    relative_error,
    relative_error_sampled,
    relerr_report,
)
from gibbscmi.spectral import operator_norm, reduce_to

SZ = np.diag([1.0, -1.0])
SX = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_identical_states(rng):
    rho = random_state(4, rng, 1.0)
    assert relative_error(rho, rho) == pytest.approx(0.0, abs=1e-13)
    assert log_gap(rho, rho) == pytest.approx(0.0, abs=1e-13)


def test_rank_deficient_rejected():
    with pytest.raises(NumericalError) as exc:
        relative_error(np.diag([1.0, 0.0]), np.eye(2) / 2)
    assert exc.value.code == "not-positive-definite"


def test_reverse_relative_error_at_most_double(rng):
    checked = 0
    for _ in range(500):
        rho, sigma = perturbed_pair(4, rng, scale=0.6, max_eps=10.0)
        d_rs = relative_error(rho, sigma)
        if d_rs <= 0.5:
            checked += 1
            assert relative_error(sigma, rho) <= 2 * d_rs + 1e-12
    assert checked > 200


def test_relative_error_monotone_under_partial_trace(rng):
    for _ in range(50):
        rho = random_density(3, rng)
        sigma = random_density(3, rng)
        full = relative_error(rho.matrix, sigma.matrix)
        for keep in ([0], [1, 2], [0, 2]):
            sub = relative_error(reduce_to(rho, keep).matrix, reduce_to(sigma, keep).matrix)
            assert sub <= full + 1e-10


def test_eigen_reduction_matches_sampling(rng):
    rho, sigma = perturbed_pair(4, rng, scale=0.3)
    exact = relative_error(rho, sigma)
    coarse = relative_error_sampled(rho, sigma, 100, rng)
    fine = relative_error_sampled(rho, sigma, 10_000, rng)
    assert coarse <= exact + 1e-12 and fine <= exact + 1e-12
    assert exact - fine <= exact - coarse + 1e-12
    assert fine > 0.8 * exact


def test_bound_zero_at_zero_eps():
    assert continuity_bound(0.0, 0.3) == 0.0


def test_bound_at_half_lambda():
    # closed form evaluated by hand: l = log 4
    # 30-digit evaluation of the bracket at l = log 4
    assert continuity_bound(0.1, 0.5) == pytest.approx(2.20976130926348, rel=1e-13)


def test_bound_out_of_regime():
    with pytest.raises(NumericalError) as exc:
        continuity_bound(0.51, 0.5)
    assert exc.value.code == "out-of-regime"


def test_commuting_pairs_log_gap_at_most_eps(rng):
    for _ in range(200):
        p = rng.uniform(0.05, 1.0, size=6)
        q = p * (1 + rng.uniform(-0.3, 0.3, size=6))
        rho, sigma = np.diag(p / p.sum()), np.diag(q / q.sum())
        eps = max(relative_error(rho, sigma), relative_error(sigma, rho))
        assert log_gap(rho, sigma) <= eps + 1e-12


def test_continuity_bound_holds(rng):
    for _ in range(200):
        rho, sigma = perturbed_pair(8, rng, scale=0.4)
        rep = relerr_report(rho, sigma)
        assert rep.log_gap <= rep.bound


@pytest.mark.parametrize("J", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("eps", [1e-2, 1e-3])
def test_qubit_counterexample(J, eps):
    rho, sigma = expm(J * SZ), expm(J * SZ + eps * SX)
    assert log_gap(rho, sigma) == pytest.approx(eps, rel=1e-10)
    lower = abs(math.exp(J) * math.sinh(J) - J) / (2 * J * J) * eps**2
    assert relative_error(rho, sigma) >= lower


@pytest.mark.parametrize("c", [0.3, 1.0, 2.5])
def test_log_gap_scalar(rng, c):
    rho = random_state(4, rng, 1.0)
    assert log_gap(c * rho, rho) == pytest.approx(abs(math.log(c)), abs=1e-12)


def test_derivative_along_rho_is_identity(rng):
    rho = random_state(6, rng, 0.5)
    assert np.allclose(log_derivative_oracle(rho, rho), np.eye(6), atol=1e-12)


def test_derivative_commuting_direction(rng):
    w = np.array([0.1, 0.2, 0.3, 0.3, 0.1])  # repeated eigenvalues hit the series branch
    D = np.diag(rng.normal(size=5))
    assert np.allclose(log_derivative_oracle(np.diag(w), D), np.diag(np.diag(D) / w), atol=1e-12)


def _hermitian(rng, d):
    G = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (G + G.conj().T)


def test_derivative_matches_finite_differences(rng):
    for _ in range(20):
        rho = random_state(8, rng, rank_boost=4.0)
        Delta = _hermitian(rng, 8)
        exact = log_derivative_oracle(rho, Delta)
        err = operator_norm(exact - log_derivative_fd(rho, Delta, 1e-5)) / operator_norm(exact)
        assert err < 1e-6


def test_finite_difference_gap_is_second_order(rng):
    rho = random_state(8, rng, 0.5)
    Delta = _hermitian(rng, 8)
    exact = log_derivative_oracle(rho, Delta)
    e1 = operator_norm(exact - log_derivative_fd(rho, Delta, 1e-4))
    e2 = operator_norm(exact - log_derivative_fd(rho, Delta, 1e-5))
    assert e1 / e2 == pytest.approx(100, rel=0.05)


def test_report_nan_bound_outside_regime():
    rho = np.diag([0.5, 0.5])
    sigma = np.diag([0.9, 0.1])
    rep = relerr_report(rho, sigma)
    assert rep.delta_rs > 0.5 and math.isnan(rep.bound)

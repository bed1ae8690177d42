import math

import numpy as np
import pytest
import scipy.integrate
import scipy.linalg

from gibbscmi.beliefprop import (
    FilterSpec,
    bp_generator,
    bp_log_error,
    bp_operator,
    bp_truncate,
    filter_eval,
    filter_f,
    kernel_f_exact,
    kernel_g_exact,
    quadrature_rule,
    split_hamiltonian,
    step_doubling,
)
from gibbscmi.errors import NumericalError
from gibbscmi.hamiltonian import ising, pauli_matrix, tfim
from gibbscmi.lattice import Lattice
from gibbscmi.spectral import operator_norm, random_hermitian

X, Z = pauli_matrix("X").real, pauli_matrix("Z").real


def _f_integral(fn, beta):
    # independent scipy oracle on (0, inf); the log singularity sits at t = 0
    a, _ = scipy.integrate.quad(fn, 0, beta / math.pi, limit=200)
    b, _ = scipy.integrate.quad(fn, beta / math.pi, np.inf, limit=200)
    return 2 * (a + b)


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.0])
def test_f_normalized(beta):
    assert _f_integral(lambda t: filter_f(t, beta), beta) == pytest.approx(1.0, abs=1e-9)
    rule = quadrature_rule(FilterSpec(beta, "f"), 8.0)
    assert rule.mass == pytest.approx(1.0, abs=1e-10)
    assert rule.kernel(np.array([0.0]))[0] == 1.0


@pytest.mark.parametrize("beta", [0.5, 2.0])
def test_first_moment_bound(beta):
    moment = _f_integral(lambda t: 0.5 * beta * t * filter_f(t, beta), beta)
    assert moment <= beta**2 / 7
    assert moment == pytest.approx(7 * beta**2 * 1.2020569031595942 / (2 * math.pi**3), rel=1e-7)


def test_filter_parity():
    t = np.linspace(0.01, 3, 50)
    f = FilterSpec(1.3, "f")
    g = FilterSpec(1.3, "g")
    assert np.allclose(filter_eval(f, -t), filter_eval(f, t))
    assert np.allclose(filter_eval(g, -t), -filter_eval(g, t))
    with pytest.raises(NumericalError):
        filter_eval(g, 0.0)


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        FilterSpec(0.0)
    spec = FilterSpec(1.0, "f", 1e-8)
    # tail of f beyond t_max: int 4/(beta pi) e^{-pi t/beta} dt = (4/pi^2) e^{-pi T/beta} < tol
    assert 4 / math.pi**2 * math.exp(-math.pi * spec.t_max) < 1e-8


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.0])
def test_quadrature_matches_closed_form_kernels(beta):
    om = np.linspace(-30, 30, 241)
    rf = quadrature_rule(FilterSpec(beta, "f"), 30.0)
    rg = quadrature_rule(FilterSpec(beta, "g"), 30.0)
    assert np.abs(rf.kernel(om) - kernel_f_exact(om, beta)).max() < 1e-9
    assert np.abs(rg.kernel(om) - kernel_g_exact(om, beta)).max() < 1e-9


def test_quadrature_budget_failure():
    with pytest.raises(NumericalError) as exc:
        quadrature_rule(FilterSpec(1.0, "f", 1e-12, node_budget=40), 50.0)
    assert exc.value.code == "quadrature-failure"


def test_commuting_generator_is_half_beta_b():
    A = np.diag([1.0, -0.5, 0.2, 2.0])
    B = np.diag([0.3, 0.1, -0.4, 0.0])
    phi = bp_generator(A, B, 0.4, 1.5)
    assert np.allclose(phi, 0.75 * B, atol=1e-12)
    bp = bp_operator(A, B, 1.5, 64)
    assert np.allclose(bp.matrix.matrix, scipy.linalg.expm(0.75 * B), atol=1e-12)
    assert bp.residual < 1e-12


def test_generator_norm_bound(rng):
    for _ in range(200):
        A = random_hermitian(8, rng, unit_norm=False)
        B = random_hermitian(8, rng) * rng.uniform(0, 1)
        beta = rng.uniform(0.1, 2)
        phi = bp_generator(A, B, rng.uniform(), beta, method="spectral")
        assert operator_norm(phi) <= beta * operator_norm(B) / 2 + 1e-12


def test_single_qubit_generator_against_direct_integral():
    beta = 1.0
    phi = bp_generator(Z, X, 0.0, beta, FilterSpec(beta, "f", 1e-11), method="quadrature")
    # B(A, t) has off-diagonal entries exp(+-2it); the cosine part survives by parity
    ref = _f_integral(lambda t: filter_f(t, beta) * math.cos(2 * t), beta)
    assert phi[0, 1] == pytest.approx(0.5 * beta * ref, abs=1e-9)
    assert abs(phi[0, 0]) < 1e-12


def test_random_three_qubit_bp(rng):
    for _ in range(3):
        A = random_hermitian(8, rng, unit_norm=False)
        B = random_hermitian(8, rng) * rng.uniform(0.2, 1)
        beta = rng.uniform(0.5, 2.0)
        quad = FilterSpec(beta, "f", 1e-10)
        r1, r2, ratio = step_doubling(A, B, beta, 128, quad=quad, method="quadrature")
        assert r2 < 1e-7
        assert 3.0 < ratio < 5.0
        bp = bp_operator(A, B, beta, 256, quad=quad, method="quadrature")
        hs = bp_operator(A, B, beta, 256, quad=quad, method="quadrature", variant="hastings")
        eA = scipy.linalg.expm(beta * A)
        s1 = bp.conjugate(eA)
        s2 = hs.conjugate(eA)
        assert operator_norm(s1 - s2) / operator_norm(s1) < 1e-7
        assert operator_norm(bp.matrix.matrix) <= math.exp(beta * operator_norm(B) / 2) + 1e-9


def test_bp_identity_failure():
    rng = np.random.default_rng(5)
    A = random_hermitian(4, rng, unit_norm=False)
    B = random_hermitian(4, rng)
    with pytest.raises(NumericalError) as exc:
        bp_operator(A, B, 2.0, 16, tol=1e-14)
    assert exc.value.code == "bp-identity-failure"


def test_truncation_tfim_chain():
    lat = Lattice.chain(8)
    H = tfim(lat)
    L = [0, 1, 2, 3]
    A, B = split_hamiltonian(H, L)
    bp = bp_operator(A, B, 1.0, 64, keep_trace=True)
    errs = []
    log_errs = []
    for r in range(0, 5):
        rep = bp_truncate(bp, lat, L, r)
        errs.append(rep.generator_error)
        log_errs.append(bp_log_error(A, B, bp.matrix, rep.operator.matrix, 1.0)[0])
    assert all(a > b for a, b in zip(errs[:4], errs[1:4]))
    assert all(a >= b - 1e-12 for a, b in zip(log_errs, log_errs[1:]))
    full = bp_truncate(bp, lat, L, lat.diameter)
    assert full.generator_error == 0 and full.state_error < 1e-12
    assert bp_log_error(A, B, bp.matrix, bp.matrix, 1.0)[0] < 1e-12


def test_truncation_needs_trace():
    lat = Lattice.chain(4)
    A, B = split_hamiltonian(tfim(lat), [0, 1])
    with pytest.raises(NumericalError):
        bp_truncate(bp_operator(A, B, 1.0, 16), lat, [0, 1], 1)


def test_commuting_log_error_is_beta_norm_of_dropped_part():
    lat = Lattice.chain(6)
    L = [0, 1, 2]
    A, B = split_hamiltonian(ising(lat, h=0.3), L)
    beta = 1.3
    bp = bp_operator(A, B, beta, 32, keep_trace=True)
    for r, expected in ((0, beta * operator_norm(B.matrix)), (1, 0.0)):
        rep = bp_truncate(bp, lat, L, r)
        err, _ = bp_log_error(A, B, bp.matrix, rep.operator.matrix, beta)
        assert err == pytest.approx(expected, abs=1e-10)

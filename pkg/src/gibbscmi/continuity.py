"""Relative error between states and continuity of the operator logarithm."""

import math
from dataclasses import astuple, dataclass

import numpy as np

from .errors import NumericalError
from .spectral import DenseOperator, EIG_FLOOR, logm_pd, operator_norm


def _mat(O):
    return O.matrix if isinstance(O, DenseOperator) else np.asarray(O)


def _eigh_pd(M):
    M = 0.5 * (M + M.conj().T)
    w, V = np.linalg.eigh(M)
    if w.min() <= EIG_FLOOR:
        raise NumericalError("not-positive-definite", f"lambda_min={w.min():.3e}", lambda_min=float(w.min()))
    return w, V


def relative_error(rho, sigma):
    """sup_psi |<psi|rho - sigma|psi>| / <psi|rho|psi>.

    Substituting phi = rho^{1/2} psi turns this into the largest-magnitude
    eigenvalue of rho^{-1/2} (sigma - rho) rho^{-1/2}.
    """
    R, S = _mat(rho), _mat(sigma)
    w, V = _eigh_pd(R)
    isq = (V / np.sqrt(w)) @ V.conj().T
    M = isq @ (S - R) @ isq
    return float(np.abs(np.linalg.eigvalsh(0.5 * (M + M.conj().T))).max())


def relative_error_sampled(rho, sigma, n_samples, rng):
    """Direct maximization over random pure states (a lower estimate of relative_error)."""
    R, S = _mat(rho), _mat(sigma)
    d = R.shape[0]
    psi = rng.normal(size=(d, n_samples)) + 1j * rng.normal(size=(d, n_samples))
    num = np.abs(np.einsum("in,ij,jn->n", psi.conj(), R - S, psi).real)
    den = np.einsum("in,ij,jn->n", psi.conj(), R, psi).real
    return float((num / den).max())


def continuity_bound(eps, lam_min):
    """eps [ (4 l / pi) log(e l / (2 pi)) + 23 ] with l = log(2 / lam_min)."""
    if eps > 0.5:
        raise NumericalError("out-of-regime", f"relative error {eps} exceeds 1/2")
    if not 0 < lam_min <= 1:
        raise ValueError("lam_min must lie in (0, 1]")
    ell = math.log(2 / lam_min)
    return eps * (4 * ell / math.pi * math.log(math.e * ell / (2 * math.pi)) + 23)


def log_gap(rho, sigma):
    return operator_norm(logm_pd(_mat(sigma)) - logm_pd(_mat(rho)))


def _divided_log(w):
    """Matrix of (log w_m - log w_n) / (w_m - w_n), with 1/w on the diagonal."""
    a, b = w[:, None], w[None, :]
    diff = a - b
    close = np.abs(diff) < 1e-10 * w.max()
    mid = 0.5 * (a + b)
    x = diff / mid
    series = (1 + x * x / 12) / mid
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (np.log(a) - np.log(b)) / diff
    return np.where(close, series, exact)


def log_derivative_oracle(rho, Delta):
    """d/dx log(rho + x Delta) at x = 0, i.e. int_0^inf (rho+z)^-1 Delta (rho+z)^-1 dz."""
    w, V = _eigh_pd(_mat(rho))
    D = V.conj().T @ _mat(Delta) @ V
    out = V @ (D * _divided_log(w)) @ V.conj().T
    return rho.like(out) if isinstance(rho, DenseOperator) else out


def log_derivative_fd(rho, Delta, h=1e-5):
    R, D = _mat(rho), _mat(Delta)
    return (logm_pd(R + h * D) - logm_pd(R - h * D)) / (2 * h)


@dataclass(frozen=True)
class RelErrReport:
    delta_rs: float
    delta_sr: float
    lam_min: float
    log_gap: float
    bound: float

    CSV_HEADER = ("delta_rho_sigma", "delta_sigma_rho", "lambda_min", "log_gap", "bound")

    def csv_row(self):
        return astuple(self)


def relerr_report(rho, sigma):
    """All continuity quantities for a pair; ``bound`` is nan outside the eps <= 1/2 regime."""
    d_rs = relative_error(rho, sigma)
    d_sr = relative_error(sigma, rho)
    lam = float(np.linalg.eigvalsh(_mat(rho)).min())
    eps = max(d_rs, d_sr)
    bound = continuity_bound(eps, lam) if eps <= 0.5 else math.nan
    return RelErrReport(d_rs, d_sr, lam, log_gap(rho, sigma), bound)


def random_state(dim, rng, rank_boost=0.0):
    G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    M = G @ G.conj().T + rank_boost * np.eye(dim)
    return M / np.trace(M).real


def perturbed_pair(dim, rng, scale=0.2, max_eps=0.5, max_tries=100):
    """(rho, sigma) with sigma = rho^{1/2} (1 + E) rho^{1/2} / tr and relative error <= max_eps."""
    for _ in range(max_tries):
        rho = random_state(dim, rng, rank_boost=rng.uniform(0.0, 1.0) * dim)
        w, V = np.linalg.eigh(rho)
        sq = (V * np.sqrt(w)) @ V.conj().T
        G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        E = 0.5 * (G + G.conj().T)
        E *= rng.uniform(0, scale) / operator_norm(E)
        sigma = sq @ (np.eye(dim) + E) @ sq
        sigma = 0.5 * (sigma + sigma.conj().T) / np.trace(sigma).real
        if max(relative_error(rho, sigma), relative_error(sigma, rho)) <= max_eps:
            return rho, sigma
    raise NumericalError("sampling-failure", "no pair within the relative-error regime")

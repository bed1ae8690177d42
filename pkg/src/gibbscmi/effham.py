"""Entanglement Hamiltonians, the connected-exponential logarithm, partial-trace
projection and quasi-locality profiles."""

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .beliefprop import FilterSpec, filtered_integral
from .errors import NumericalError, RegionError
from .hamiltonian import subset_hamiltonian
from .lattice import Region, extend_region
from .spectral import (
    DenseOperator,
    embed_matrix,
    imaginary_conjugate,
    logm_pd,
    normalized_partial_trace,
    operator_norm,
    pauli_coefficients,
    reduce_to,
    time_evolve,
    trace_norm,
)


def _mat(O):
    return O.matrix if isinstance(O, DenseOperator) else np.asarray(O)


def _herm(M):
    M = 0.5 * (M + M.conj().T)
    if np.iscomplexobj(M) and not np.any(M.imag):
        M = M.real
    return M


# -- entanglement Hamiltonian ------------------------------------------------


class EntanglementHamiltonian(NamedTuple):
    Hstar: DenseOperator
    Vstar: DenseOperator


def entanglement_hamiltonian(rho, L, beta, H=None):
    """H*_L = log(rho_L)/beta and, when ``H`` is given, V*_L = H*_L - H_L."""
    L = Region(L)
    red = reduce_to(rho, L)
    Hs = red.like(logm_pd(red.matrix) / beta)
    Vs = None
    if H is not None:
        HL = subset_hamiltonian(H, L).to_dense(L)
        Vs = Hs - HL.matrix
    return EntanglementHamiltonian(Hs, Vs)


def min_eigenvalue_bound(beta, J0bar, size, dim):
    """Upper bound beta J0 |L| + log(16 J0 |L| D_L) on ||beta H*_L|| for k-local models."""
    return beta * J0bar * size + math.log(16 * J0bar * size * dim)


# -- connected-exponential logarithm ------------------------------------------


@dataclass
class EffLogState:
    U: np.ndarray
    Vhat: np.ndarray
    tau: float
    history: list = field(default=None, repr=False)

    def hamiltonian(self, A, beta):
        """U (beta A + Vhat) U^dagger."""
        return self.U @ (beta * _mat(A) + self.Vhat) @ self.U.conj().T


class EffLogResult(NamedTuple):
    state: EffLogState
    error: float
    oracle: np.ndarray


def connected_log_generator(Hhat, V, beta, method="auto", quad_tol=1e-10):
    """C = (2/beta) int g(t) V(Hhat/beta, t) dt for Hermitian Hhat."""
    x, W = np.linalg.eigh(_herm(Hhat))
    spec = FilterSpec(beta, "g", quad_tol)
    C = (2 / beta) * filtered_integral(_mat(V), x, W, spec, method, omega_scale=1 / beta)
    return 0.5 * (C + C.conj().T)


def _unitary_step(C, h):
    """exp(-i h C) for Hermitian C."""
    w, Q = np.linalg.eigh(C)
    return (Q * np.exp(-1j * h * w)) @ Q.conj().T


def _polar(U):
    W, _, Zh = np.linalg.svd(U)
    return W @ Zh


def connected_log_oracle(A, V, beta, tau):
    """Dense log(e^{tau V} e^{beta A} e^{tau V})."""
    Am, Vm = _herm(_mat(A)), _herm(_mat(V))
    wa, Va = np.linalg.eigh(Am)
    wv, Vv = np.linalg.eigh(Vm)
    shift = beta * wa.max() + 2 * tau * wv.max()
    eA = (Va * np.exp(beta * wa - beta * wa.max())) @ Va.conj().T
    eV = (Vv * np.exp(tau * (wv - wv.max()))) @ Vv.conj().T
    return logm_pd(eV @ eA @ eV) + shift * np.eye(len(wa))


def connected_log_ode(A, V, beta, tau_max=1.0, n_steps=512, method="auto", quad_tol=1e-10,
                      keep_history=False, tol=None, project_every=32):
    """Integrate U' = -i C U, Vhat' = 2 U^dagger V U from U = 1, Vhat = 0.

    C is evaluated from the ODE state itself (never from a dense logarithm);
    explicit midpoint steps, with U re-projected onto the unitaries every
    ``project_every`` steps.  The endpoint is compared against the dense log.
    """
    Am, Vm = _herm(_mat(A)), _herm(_mat(V))
    D = Am.shape[0]
    U = np.eye(D, dtype=complex)
    Vhat = np.zeros((D, D), dtype=complex)
    h = tau_max / n_steps
    hist = [] if keep_history else None

    def C_of(U, Vhat):
        return connected_log_generator(U @ (beta * Am + Vhat) @ U.conj().T, Vm, beta, method, quad_tol)

    for step in range(n_steps):
        C0 = C_of(U, Vhat)
        U_half = _unitary_step(C0, h / 2) @ U
        V_half = Vhat + h * (U.conj().T @ Vm @ U)
        C_half = C_of(U_half, V_half)
        Vhat = Vhat + 2 * h * (U_half.conj().T @ Vm @ U_half)
        U = _unitary_step(C_half, h) @ U
        if (step + 1) % project_every == 0:
            U = _polar(U)
        if hist is not None:
            hist.append(operator_norm(C_half))
        if not np.all(np.isfinite(U)):
            raise NumericalError("ode-diverged", f"non-finite state at step {step}")
    U = _polar(U)
    Vhat = 0.5 * (Vhat + Vhat.conj().T)
    state = EffLogState(U, Vhat, tau_max, hist)
    oracle = connected_log_oracle(Am, Vm, beta, tau_max)
    err = operator_norm(state.hamiltonian(Am, beta) - oracle)
    if tol is not None and err > tol:
        raise NumericalError("ode-diverged", f"reconstruction error {err:.3e} above {tol:.3e}", error=err)
    return EffLogResult(state, err, oracle)


def first_order_remainder(A, V, beta, eps, method="auto"):
    """|| log(e^{eps V} e^{beta A} e^{eps V}) - beta e^{-2i eps C} A e^{2i eps C} - 2 eps V ||.

    Here C = (1/beta) int g(t) V(A, t) dt; the remainder is O(eps^2).
    """
    Am, Vm = _herm(_mat(A)), _herm(_mat(V))
    w, W = np.linalg.eigh(Am)
    spec = FilterSpec(beta, "g")
    C = filtered_integral(Vm, w, W, spec, method) / beta
    C = 0.5 * (C + C.conj().T)
    R = _unitary_step(C, 2 * eps)  # e^{-2i eps C}
    approx = beta * R @ Am @ R.conj().T + 2 * eps * Vm
    return operator_norm(connected_log_oracle(Am, Vm, beta, eps) - approx)


class TruncatedLogRow(NamedTuple):
    r: int
    region: Region
    unitary_error: float
    log_error: float


def truncated_connected_log(H, V, support, radii, beta, tau_max=1.0, n_steps=256, method="auto"):
    """Compare the connected-log ODE for H with the one for H restricted to support[r].

    ``V`` is a DenseOperator whose sites lie inside ``support``.
    """
    lat = H.lattice
    sites = lat.sites
    dims = lat.local_dims
    Hfull = H.to_dense()
    Vfull = embed_matrix(V.matrix, V.sites, V.dims, sites, dims)
    full = connected_log_ode(Hfull, Vfull, beta, tau_max, n_steps, method)
    ref = full.state.hamiltonian(Hfull.matrix, beta)
    rows = []
    for r in radii:
        region = extend_region(lat, support, r)
        rdims = tuple(dims[s] for s in region)
        Hs = subset_hamiltonian(H, region).to_dense(region).matrix
        Vs = embed_matrix(V.matrix, V.sites, V.dims, region, rdims)
        sub = connected_log_ode(Hs, Vs, beta, tau_max, n_steps, method)
        U = embed_matrix(sub.state.U, region, rdims, sites, dims)
        Vh = embed_matrix(sub.state.Vhat, region, rdims, sites, dims)
        u_err = operator_norm(full.state.U - U)
        approx = U @ (beta * Hfull.matrix + Vh) @ U.conj().T
        # against the full ODE state, so the row isolates the truncation error
        rows.append(TruncatedLogRow(r, region, u_err, operator_norm(ref - approx)))
    return full, rows


# -- partial-trace projection -------------------------------------------------


@dataclass(frozen=True)
class PtpOperators:
    L: Region
    ancilla: Region
    sites: Region
    dims: tuple
    vector: np.ndarray
    P: np.ndarray
    Q: np.ndarray

    @property
    def D_L(self):
        return len(self.vector) ** 0.5

    def P_tau(self, tau):
        return self.P + math.exp(-tau) * self.Q

    def P_tau_expm(self, tau):
        """exp(-tau Q) from the spectrum of Q."""
        w, V = np.linalg.eigh(self.Q)
        return (V * np.exp(-tau * w)) @ V.conj().T

    def lift(self, rho):
        """rho (x) 1_{L_a} / D_L, a unit-trace state on the doubled space."""
        D_L = int(round(self.D_L))
        return np.kron(_mat(rho), np.eye(D_L)) / D_L

    def contract(self, X):
        """<P_L| X |P_L> as an operator on the complement of L."""
        n = len(self.sites)
        Lset = self.L | self.ancilla
        keep = [s for s in self.sites if s not in Lset]
        dims = dict(zip(self.sites, self.dims))
        T = _mat(X).reshape(self.dims + self.dims)
        pos = {s: k for k, s in enumerate(self.sites)}
        dl = [dims[s] for s in self.L]
        vec = self.vector.reshape(dl + dl)
        row = list(range(n))
        col = list(range(n, 2 * n))
        vr = [pos[s] for s in self.L] + [pos[s] for s in self.ancilla]
        vc = [n + pos[s] for s in self.L] + [n + pos[s] for s in self.ancilla]
        out_idx = [pos[s] for s in keep] + [n + pos[s] for s in keep]
        R = np.einsum(vec.conj(), vr, T, row + col, vec, vc, out_idx)
        d = int(np.prod([dims[s] for s in keep], dtype=np.int64))
        return DenseOperator(keep, tuple(dims[s] for s in keep), R.reshape(d, d))


def ptp_build(lat, L):
    """Maximally entangled projector between L and an ancilla copy appended after the lattice."""
    L = lat.region(L)
    if not L:
        raise RegionError("empty-region")
    n = lat.n_sites
    anc = Region(range(n, n + len(L)))
    sites = lat.sites | anc
    dims = tuple(lat.local_dims) + tuple(lat.local_dims[s] for s in L)
    D_L = lat.hilbert_dim(L)
    from .spectral import dense_cap

    total = int(np.prod(dims, dtype=np.int64))
    if total > dense_cap():
        raise NumericalError("too-large", f"doubled dimension {total} exceeds dense cap")
    vec = np.eye(D_L).ravel() / math.sqrt(D_L)
    proj = np.outer(vec, vec)
    sub_sites = L | anc
    sub_dims = tuple(dims[k] for k in [list(sites).index(s) for s in sub_sites])
    P = embed_matrix(proj, sub_sites, sub_dims, sites, dims)
    Q = np.eye(total) - P
    return PtpOperators(L, anc, sites, dims, vec, P, Q)


class PtpError(NamedTuple):
    raw_error: float
    raw_bound: float
    normalized_error: float
    normalized_bound: float


def ptp_error(ptp, rho, tau):
    """Trace-norm errors of the smooth projector exp(-tau Q_L) against P_L.

    The state is lifted as rho (x) 1/D_L so that it has unit trace.
    """
    R = ptp.lift(rho)
    Pt = ptp.P_tau(tau)
    P = ptp.P
    smooth = Pt @ R @ Pt
    raw = trace_norm(smooth - P @ R @ P)
    # rho_{Lc} (x) P_L on the doubled space
    Lc = Region(s for s in rho.sites if s not in ptp.L)
    red = reduce_to(rho, Lc) if Lc else None
    target = P.copy()
    if red is not None:
        target = embed_matrix(red.matrix, red.sites, red.dims, ptp.sites, ptp.dims) @ P
    norm = trace_norm(smooth / np.real(np.trace(smooth)) - target)
    D_L = ptp.D_L
    return PtpError(raw, 2 * math.exp(-tau), norm, 4 * D_L * math.exp(-tau))


# -- quasi-locality profiles --------------------------------------------------


@dataclass
class LocalityProfile:
    center: Region
    radii: list
    values: list
    amplitude: float = math.nan
    rate: float = math.nan
    residual: float = math.nan
    fit_points: int = 0

    def csv_rows(self):
        return [(r, v) for r, v in zip(self.radii, self.values)]

    def fit_record(self):
        return {"amplitude": self.amplitude, "rate": self.rate, "residual": self.residual}


def exponential_fit(radii, values, floor=1e-13):
    """Least-squares fit of log(value) = log(a) - rate * r over the decaying tail.

    The tail starts at the largest value; points below ``floor`` times that
    maximum are dropped.  Returns (amplitude, rate, rms log residual, n points);
    rate is +inf when every value is zero.
    """
    radii = np.asarray(radii, dtype=float)
    values = np.asarray(values, dtype=float)
    vmax = values.max(initial=0.0)
    if vmax <= 0:
        return 0.0, math.inf, 0.0, 0
    start = int(np.argmax(values))
    r, v = radii[start:], values[start:]
    keep = v > floor * max(vmax, 1.0)
    r, v = r[keep], v[keep]
    if len(r) < 2:
        return float(vmax), math.inf, 0.0, len(r)
    slope, icpt = np.polyfit(r, np.log(v), 1)
    resid = np.log(v) - (icpt + slope * r)
    return float(math.exp(icpt)), float(-slope), float(np.sqrt(np.mean(resid**2))), len(r)


def _random_unitary(d, rng):
    Z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def locality_profile(O, center, radii, lat, randomized=False, n_unitaries=64, seed=0):
    """Per radius r, ||O - tr~_{outside center[r]}(O)||.

    With ``randomized=True`` the value is instead the largest ||[O, U]|| over
    random products of single-site Haar unitaries outside center[r].
    """
    center = Region(center)
    sites = Region(O.sites)
    rng = np.random.default_rng(seed)
    vals = []
    for r in radii:
        inner = extend_region(lat, center, r) & sites
        outside = sites - inner
        if not outside:
            vals.append(0.0)
            continue
        if randomized:
            best = 0.0
            for _ in range(n_unitaries):
                Um = np.ones((1, 1))
                for s in outside:
                    Um = np.kron(Um, _random_unitary(O.dim_map[s], rng))
                Ue = embed_matrix(Um, outside, [O.dim_map[s] for s in outside], sites, O.dims)
                best = max(best, operator_norm(O.matrix @ Ue - Ue @ O.matrix))
            vals.append(best)
        else:
            vals.append(operator_norm(O.matrix - normalized_partial_trace(O, outside).matrix))
    amp, rate, res, npts = exponential_fit(radii, vals)
    return LocalityProfile(center, list(radii), vals, amp, rate, res, npts)


def imaginary_locality_profile(H, O_X, beta, t, radii):
    """Profile of e^{-beta H/2} (O_X(t) - tr~_{Lc} O_X(t)) e^{beta H/2} with L = X[r]."""
    lat = H.lattice
    Hd = H.to_dense()
    O = O_X.extend(lat.sites, lat.local_dims) if Region(O_X.sites) != lat.sites else O_X
    Ot = time_evolve(O, Hd, t)
    X = Region(O_X.sites)
    vals = []
    for r in radii:
        L = extend_region(lat, X, r)
        Lc = lat.complement(L)
        if not Lc:
            vals.append(0.0)
            continue
        diff = Ot - normalized_partial_trace(Ot, Lc)
        vals.append(imaginary_conjugate(diff, Hd, beta / 2).norm)
    amp, rate, res, npts = exponential_fit(radii, vals)
    return LocalityProfile(X, list(radii), vals, amp, rate, res, npts)


# -- exponential enhancement demo ----------------------------------------------


_SX = np.array([[0.0, 1.0], [1.0, 0.0]])
_SZ = np.diag([1.0, -1.0])
_I2 = np.eye(2)


def enhancement_coefficient(v0, eps):
    """sigma_x sigma_x coefficient of log(e^V e^{H0} e^V) for H0 = -2 v0 Z1 + 4 v0 eps X1 X2, V = v0 Z1."""
    H0 = -2 * v0 * np.kron(_SZ, _I2) + 4 * v0 * eps * np.kron(_SX, _SX)
    V = v0 * np.kron(_SZ, _I2)
    log = connected_log_oracle(H0, V, 1.0, 1.0)
    C = pauli_coefficients(DenseOperator((0, 1), (2, 2), log))
    return float(C[1, 1].real)


def enhancement_scan(v0_grid, eps=1e-3):
    """Coefficients over ``v0_grid`` and the fitted exponent k in coef ~ exp(k v0)."""
    v0_grid = np.asarray(v0_grid, dtype=float)
    coef = np.array([enhancement_coefficient(v, eps) for v in v0_grid])
    k, _ = np.polyfit(v0_grid, np.log(np.abs(coef)), 1)
    return coef, float(k)

"""Quantum belief propagation: filter functions, generators, BP operators and truncation.

Heisenberg evolution under a Hermitian A is diagonal in A's eigenbasis,
B(A, t)_mn = B_mn exp(i w_mn t), so every filtered time integral reduces to
an elementwise kernel K(w) = int F(t) exp(i w t) dt.  Kernels are obtained
either from composite Gauss-Legendre quadrature ("quadrature") or from their
closed forms ("spectral"); "auto" picks quadrature for small spaces.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .hamiltonian import boundary_interaction, subset_hamiltonian
from .lattice import Region, boundary, extend_region
from .spectral import DenseOperator, normalized_partial_trace, operator_norm, trace_norm

GL_ORDER = 16
AUTO_QUADRATURE_MAX_DIM = 64


@dataclass(frozen=True)
class FilterSpec:
    beta: float
    kind: str = "f"  # "f" or "g"
    abs_tol: float = 1e-10
    node_budget: int = 20000
    t_max: float = None

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.kind not in ("f", "g"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        if self.t_max is None:
            object.__setattr__(self, "t_max", default_t_max(self.beta, self.kind, self.abs_tol))


def default_t_max(beta, kind, tol):
    """Cutoff past which the filter's tail integral is below ``tol``."""
    if kind == "f":
        return beta / math.pi * math.log(4 / tol)
    # tail of 1/expm1(2 pi t / beta) integrates to about (beta / 2 pi) exp(-2 pi T / beta)
    return beta / (2 * math.pi) * math.log(max(beta, 1.0) / tol)


def filter_f(t, beta):
    x = math.pi * np.abs(np.asarray(t, dtype=float)) / beta
    with np.errstate(divide="ignore", over="ignore"):
        return 2 / (beta * math.pi) * np.log1p(2 / np.expm1(x))


def _g_tilde(t, beta):
    """exp(-2 pi t/beta) / (1 - exp(-2 pi t/beta)) for t > 0."""
    return 1.0 / np.expm1(2 * math.pi * np.asarray(t, dtype=float) / beta)


def filter_eval(spec, t):
    t = np.asarray(t, dtype=float)
    if spec.kind == "f":
        return filter_f(t, spec.beta)
    if np.any(t == 0):
        raise NumericalError("singular-point", "g filter diverges at t = 0")
    return -np.sign(t) * _g_tilde(np.abs(t), spec.beta)


def kernel_f_exact(omega, beta):
    """Fourier transform tanh(beta w/2)/(beta w/2) of f."""
    x = 0.5 * beta * np.asarray(omega, dtype=float)
    small = np.abs(x) < 1e-4
    xs = np.where(small, 1.0, x)
    return np.where(small, 1 - x * x / 3 + 2 * x**4 / 15, np.tanh(xs) / xs)


def langevin(x):
    """coth(x) - 1/x with a series near zero."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)
    return np.where(small, x / 3 - x**3 / 45, 1 / np.tanh(xs) - 1 / xs)


def kernel_g_exact(omega, beta):
    """int g(t) exp(i w t) dt = -i (beta/2) (coth(beta w/2) - 2/(beta w))."""
    return -0.5j * beta * langevin(0.5 * beta * np.asarray(omega, dtype=float))


def _gl_panels(a, b, width, order=GL_ORDER):
    m = max(1, math.ceil((b - a) / width))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, m + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@dataclass(frozen=True)
class QuadRule:
    kind: str
    beta: float
    nodes: np.ndarray
    weights: np.ndarray
    head: float  # analytic piece near t = 0 (f only)
    error_estimate: float

    @cached_property
    def mass(self):
        """The rule's value of int f dt (exactly 1 in infinite precision); nan for g."""
        if self.kind != "f":
            return math.nan
        return float(2 * (self.head + self.weights @ filter_f(self.nodes, self.beta)))

    def kernel(self, omega):
        """K(w) for an array of frequencies (evaluated once per distinct |w|).

        The f kernel is divided by the rule's mass so K(0) = 1 holds exactly;
        commuting inputs then reproduce beta B / 2 to rounding.
        """
        omega = np.asarray(omega, dtype=float)
        absom, inv = np.unique(np.abs(omega), return_inverse=True)
        if self.kind == "f":
            F = self.weights * filter_f(self.nodes, self.beta)
            vals = 2 * (self.head + np.cos(np.outer(absom, self.nodes)) @ F) / self.mass
            return vals[inv].reshape(omega.shape)
        G = self.weights * _g_tilde(self.nodes, self.beta)
        vals = -2j * (np.sin(np.outer(absom, self.nodes)) @ G)
        return np.sign(omega) * vals[inv].reshape(omega.shape)

    @property
    def n_nodes(self):
        return len(self.nodes)


def _graded_panels(a, b, level, order=GL_ORDER):
    """Panels doubling in width from ``a`` to ``b`` (for the logarithmic singularity at 0)."""
    edges = [a]
    while edges[-1] < b:
        edges.append(min(2 * edges[-1], b))
    parts = [_gl_panels(lo, hi, (hi - lo) / 2**level, order) for lo, hi in zip(edges[:-1], edges[1:])]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _f_rule(beta, t_max, tol, omega_max, level):
    t_min = beta * tol / 100
    t_split = beta / math.pi
    t_a = min(t_split, 1.0 / max(omega_max, 1e-300))
    # u = log t on [t_min, t_a], where cos(w t) is not yet oscillating
    u, wu = _gl_panels(math.log(t_min), math.log(t_a), 1.0 / 2**level)
    t1, w1 = _graded_panels(t_a, t_split, level) if t_a < t_split else (np.empty(0), np.empty(0))
    width_t = min(t_split, math.pi / max(omega_max, 1e-300)) / 2**level
    t2, w2 = _gl_panels(t_split, t_max, width_t)
    nodes = np.concatenate([np.exp(u), t1, t2])
    weights = np.concatenate([wu * np.exp(u), w1, w2])
    # f ~ (2/(beta pi)) log(2 beta/(pi t)) on [0, t_min]
    head = 2 / (beta * math.pi) * t_min * (math.log(2 * beta / (math.pi * t_min)) + 1)
    return nodes, weights, head


def _g_rule(beta, t_max, omega_max, level):
    width = min(beta / (2 * math.pi), math.pi / max(omega_max, 1e-300)) / 2**level
    nodes, weights = _gl_panels(0.0, t_max, width)
    return nodes, weights, 0.0


@lru_cache(maxsize=256)
def _build_rule(kind, beta, abs_tol, node_budget, t_max, omega_max):
    probe = np.linspace(0.0, omega_max, 17)
    prev = None
    for level in range(12):
        if kind == "f":
            parts = _f_rule(beta, t_max, abs_tol, omega_max, level)
        else:
            parts = _g_rule(beta, t_max, omega_max, level)
        rule = QuadRule(kind, beta, *parts, error_estimate=math.inf)
        if rule.n_nodes > node_budget:
            break
        vals = rule.kernel(probe)
        if prev is not None:
            # doubling estimate of the coarser rule's error
            err = float(np.abs(vals - prev).max())
            if err <= abs_tol:
                return QuadRule(kind, beta, *prev_parts, error_estimate=err)
        prev, prev_parts = vals, parts
    err = float(np.abs(vals - prev).max()) if prev is not None else math.inf
    raise NumericalError("quadrature-failure", f"node budget {node_budget} exhausted", achieved_error=err)


def quadrature_rule(spec, omega_max):
    """Composite Gauss-Legendre rule for ``spec`` accurate up to frequency ``omega_max``.

    The frequency is rounded up to a power of two so rules are shared across
    nearby generators.
    """
    om = 2.0 ** math.ceil(math.log2(max(omega_max, 1e-3)))
    return _build_rule(spec.kind, spec.beta, spec.abs_tol, spec.node_budget, spec.t_max, om)


def _matrix(O):
    return O.matrix if isinstance(O, DenseOperator) else np.asarray(O)


def _resolve_method(method, dim):
    if method == "auto":
        return "quadrature" if dim <= AUTO_QUADRATURE_MAX_DIM else "spectral"
    if method not in ("quadrature", "spectral"):
        raise ValueError(f"unknown method {method!r}")
    return method


def filtered_integral(Bm, w, V, spec, method="auto", omega_scale=1.0):
    """int F(t) B(A, t) dt where A has eigenpairs (w, V); frequencies scaled by ``omega_scale``."""
    Bt = V.conj().T @ Bm @ V
    omega = omega_scale * (w[:, None] - w[None, :])
    if _resolve_method(method, len(w)) == "spectral":
        K = kernel_f_exact(omega, spec.beta) if spec.kind == "f" else kernel_g_exact(omega, spec.beta)
    else:
        rule = quadrature_rule(spec, float(np.abs(omega).max(initial=0.0)))
        K = rule.kernel(omega)
    return V @ (Bt * K) @ V.conj().T


def _eigh(M):
    M = 0.5 * (M + M.conj().T)
    if np.iscomplexobj(M) and not np.any(M.imag):
        M = M.real
    return np.linalg.eigh(M)


def bp_generator(A, B, tau, beta, quad=None, method="auto", variant="f"):
    """phi_tau = (beta/2) int f(t) B(A + tau B, t) dt.

    ``variant="hastings"`` gives beta B/2 + i int g(t) B(A + tau B, t) dt
    instead, which is not Hermitian.
    """
    Am, Bm = _matrix(A), _matrix(B)
    w, V = _eigh(Am + tau * Bm)
    tol = quad.abs_tol if quad is not None else 1e-10
    budget = quad.node_budget if quad is not None else 20000
    if variant == "f":
        spec = FilterSpec(beta, "f", tol, budget)
        phi = 0.5 * beta * filtered_integral(Bm, w, V, spec, method)
        phi = 0.5 * (phi + phi.conj().T)
    elif variant == "hastings":
        spec = FilterSpec(beta, "g", tol, budget)
        phi = 0.5 * beta * Bm + 1j * filtered_integral(Bm, w, V, spec, method)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return A.like(phi) if isinstance(A, DenseOperator) else phi


def _expm_gen(phi, hermitian):
    if hermitian:
        w, V = _eigh(phi)
        return (V * np.exp(w)) @ V.conj().T
    return scipy.linalg.expm(phi)


def ordered_exponential(generators, dtau, hermitian=True):
    """T exp(int phi dtau) by the midpoint rule; later steps multiply on the left."""
    out = None
    for phi in generators:
        E = _expm_gen(phi, hermitian)
        out = E if out is None else E @ out
    return out


def _shifted_exps(Am, Bm, beta):
    """exp(beta A) and exp(beta (A+B)) sharing one scale factor."""
    wa, Va = _eigh(Am)
    wt, Vt = _eigh(Am + Bm)
    shift = beta * max(wa.max(), wt.max())
    eA = (Va * np.exp(beta * wa - shift)) @ Va.conj().T
    eT = (Vt * np.exp(beta * wt - shift)) @ Vt.conj().T
    return eA, eT


@dataclass
class BpOperator:
    matrix: DenseOperator
    n_tau_steps: int
    beta: float
    residual: float
    variant: str = "f"
    generator_trace: list = field(default=None, repr=False)
    A: np.ndarray = field(default=None, repr=False)
    B: np.ndarray = field(default=None, repr=False)

    def conjugate(self, X):
        P = self.matrix.matrix
        return P @ _matrix(X) @ P.conj().T


def bp_residual(Phi, Am, Bm, beta):
    eA, eT = _shifted_exps(Am, Bm, beta)
    return operator_norm(Phi @ eA @ Phi.conj().T - eT) / operator_norm(eT)


def bp_operator(A, B, beta, n_steps=256, quad=None, method="auto", variant="f", keep_trace=False, tol=None):
    """Belief-propagation operator Phi with exp(beta (A+B)) = Phi exp(beta A) Phi^dagger."""
    if n_steps < 16:
        raise ValueError("n_steps must be at least 16")
    Am, Bm = _matrix(A), _matrix(B)
    dtau = 1.0 / n_steps
    gens = [bp_generator(Am, Bm, (j + 0.5) * dtau, beta, quad, method, variant) for j in range(n_steps)]
    Phi = ordered_exponential([dtau * g for g in gens], dtau, hermitian=(variant == "f"))
    res = bp_residual(Phi, Am, Bm, beta)
    if tol is not None and res > tol:
        raise NumericalError("bp-identity-failure", f"residual {res:.3e} above {tol:.3e}", residual=res)
    sites, dims = (A.sites, A.dims) if isinstance(A, DenseOperator) else (Region(range(1)), (Am.shape[0],))
    return BpOperator(
        DenseOperator(sites, dims, Phi),
        n_steps,
        beta,
        res,
        variant,
        gens if keep_trace else None,
        Am,
        Bm,
    )


def step_doubling(A, B, beta, n_steps=256, **kw):
    """Residuals at ``n_steps`` and ``2 n_steps`` and their ratio."""
    r1 = bp_operator(A, B, beta, n_steps, **kw).residual
    r2 = bp_operator(A, B, beta, 2 * n_steps, **kw).residual
    return r1, r2, r1 / r2 if r2 > 0 else math.inf


def split_hamiltonian(H, L):
    """(A, B) = (H_L + H_Lc, boundary interaction of L) as dense operators on the full lattice."""
    lat = H.lattice
    Lc = lat.complement(L)
    A = subset_hamiltonian(H, L).to_dense().matrix + subset_hamiltonian(H, Lc).to_dense().matrix
    Bop = boundary_interaction(H, L).to_dense()
    return Bop.like(A), Bop


def kappa_beta(mu, v, beta):
    return min(math.pi * mu / (2 * v * beta), mu / 4)


def phi_bar(beta, gamma, J0bar, mu, C, v, n_boundary, D=1):
    """Amplitude of the generator truncation bound (reporting only)."""
    kb = kappa_beta(mu, v, beta)
    J0t = J0bar * gamma * math.exp(mu) * (2 / mu) ** D * math.factorial(D) / (math.exp(mu / 2) - 1)
    inner = (
        1
        + 2 * beta * gamma * C * v * n_boundary / 7 * (4 * D / (math.e * mu)) ** D
        + 8 / math.pi**2 * math.log(math.e + math.e / kb) * math.exp(kb) / math.expm1(kb)
    )
    return 4 * beta * gamma * J0t * n_boundary * math.exp(mu / 2) * inner


@dataclass
class TruncationReport:
    r: int
    region: Region
    operator: BpOperator
    generator_error: float
    state_error: float
    soft_bound: float = math.nan


def bp_truncate(bp, lat, L, r, H=None, lr_constants=None):
    """Replace each retained generator by its normalized partial trace outside (boundary of L)[r]."""
    if bp.generator_trace is None:
        raise NumericalError("trace-not-retained", "build the BP operator with keep_trace=True")
    L = Region(L)
    region = extend_region(lat, boundary(lat, L), r)
    full = bp.matrix
    drop = lat.complement(region)
    n = bp.n_tau_steps
    dtau = 1.0 / n
    gen_err = 0.0
    trunc = []
    for phi in bp.generator_trace:
        op = full.like(phi)
        t = normalized_partial_trace(op, drop).matrix if drop else phi
        gen_err = max(gen_err, operator_norm(phi - t))
        trunc.append(t)
    Phi_t = ordered_exponential([dtau * g for g in trunc], dtau, hermitian=(bp.variant == "f"))
    # compared with the untruncated Phi, so only the truncation is measured
    eA, _ = _shifted_exps(bp.A, bp.B, bp.beta)
    ref = full.matrix @ eA @ full.matrix.conj().T
    state_err = trace_norm(ref - Phi_t @ eA @ Phi_t.conj().T) / float(np.real(np.trace(ref)))
    res = bp_residual(Phi_t, bp.A, bp.B, bp.beta)
    op = BpOperator(full.like(Phi_t), n, bp.beta, res, bp.variant, trunc if drop else bp.generator_trace, bp.A, bp.B)
    soft = math.nan
    if H is not None and lr_constants is not None:
        C, v = lr_constants
        meta = H.decay_meta
        dh = operator_norm(bp.B)
        pb = phi_bar(bp.beta, lat.measured_gamma(), meta.J0bar, meta.mu, C, v, len(boundary(lat, L)), lat.dimension)
        soft = 13 * pb * math.exp(2 * bp.beta * dh - kappa_beta(meta.mu, v, bp.beta) * r)
    return TruncationReport(r, region, op, gen_err, state_err, soft)


def log_error_shape(normA, normB, beta, delta):
    N = max(4 * math.pi, beta * normA + beta * normB)
    nu1 = 4 * normB * math.log(N)
    nu2 = normB * (14 * math.log(N) + 1)
    return 3 * N * (beta * nu1 + 1) * math.exp(beta * nu2) * delta


def _logm(M):
    w, V = _eigh(M)
    if w.min() <= 0:
        raise NumericalError("not-positive-definite", f"lambda_min={w.min():.3e}", lambda_min=float(w.min()))
    return (V * np.log(w)) @ V.conj().T


def bp_log_error(A, B, Phi, Phi_t, beta, generator_error=None):
    """||log(Phi e^{bA} Phi^+) - log(Phi~ e^{bA} Phi~^+)|| and the matching refined-bound shape.

    Logarithms are taken of the unshifted products so scalar offsets cancel.
    """
    Am, Bm = _matrix(A), _matrix(B)
    P, Pt = _matrix(Phi), _matrix(Phi_t)
    wa, Va = _eigh(Am)
    eA = (Va * np.exp(beta * (wa - wa.max()))) @ Va.conj().T
    err = operator_norm(_logm(P @ eA @ P.conj().T) - _logm(Pt @ eA @ Pt.conj().T))
    shape = math.nan
    if generator_error is not None:
        nB = operator_norm(Bm)
        delta = 2 * generator_error / nB if nB > 0 else 0.0
        shape = log_error_shape(operator_norm(Am), nB, beta, delta)
    return err, shape

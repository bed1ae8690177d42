"""Simulated Gibbs-state tomography on sliding windows and 1D Hamiltonian learning."""

import json
import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import NumericalError
from .lattice import Region
from .spectral import (
    DenseOperator,
    PAULI_LABELS,
    gibbs_state,
    logm_pd,
    operator_norm,
    pauli_coefficients,
    pauli_synthesize,
    reduce_to,
)


@dataclass(frozen=True)
class ShotPlan:
    windows: tuple
    shots_per_basis: int = None  # None means exact expectations
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(Region(w) for w in self.windows))
        if self.shots_per_basis is not None and self.shots_per_basis < 1:
            raise ValueError("shots_per_basis must be at least 1")

    @property
    def exact(self):
        return self.shots_per_basis is None

    @classmethod
    def sliding(cls, n_sites, size, shots=None, seed=0):
        if size > n_sites:
            raise NumericalError("window-too-small", "window longer than the chain")
        return cls(tuple(Region(range(a, a + size)) for a in range(n_sites - size + 1)), shots, seed)


@dataclass
class WindowEstimate:
    window: Region
    expectations: np.ndarray  # <P> indexed like pauli_coefficients, shape (4,)*|window|
    shots: int = None


def _string_rng(seed, window, index):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(*window, 1 << 20, index)))


def sample_window_expectations(rho, plan):
    """Per window, an estimate of <P> for every Pauli string P on the window.

    Each non-identity string gets ``shots_per_basis`` independent +-1 outcomes
    from its own random stream keyed by (seed, window, string index).
    """
    out = []
    for win in plan.windows:
        red = reduce_to(rho, win)
        exact = (pauli_coefficients(red) * red.dim).real
        if plan.exact:
            out.append(WindowEstimate(win, exact, None))
            continue
        N = plan.shots_per_basis
        flat = exact.ravel()
        est = np.empty_like(flat)
        est[0] = 1.0
        p = np.clip((1 + flat) / 2, 0.0, 1.0)
        for k in range(1, len(flat)):
            est[k] = 2 * _string_rng(plan.seed, win, k).binomial(N, p[k]) / N - 1
        out.append(WindowEstimate(win, est.reshape(exact.shape), N))
    return out


def reconstruct_marginal(estimate, project=True):
    """sum_P <P> P / D, clipped to the PSD cone and renormalized.

    ``meta`` records the clipped weight and the raw (pre-projection) matrix.
    """
    n = len(estimate.window)
    D = 2**n
    raw = pauli_synthesize(estimate.expectations / D, estimate.window).matrix
    raw = 0.5 * (raw + raw.conj().T)
    if not project:
        return DenseOperator(estimate.window, (2,) * n, raw, {"clipped": 0.0, "raw": raw})
    w, V = np.linalg.eigh(raw)
    clipped = float(-w[w < 0].sum()) + 0.0
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise NumericalError("degenerate-estimate", "every eigenvalue was clipped")
    w = w / w.sum()
    M = (V * w) @ V.conj().T
    return DenseOperator(estimate.window, (2,) * n, M, {"clipped": clipped, "raw": raw})


@dataclass
class LearnedHamiltonian:
    Hstar: DenseOperator
    lam_min: float
    log_error: float = math.nan


def learn_entanglement_hamiltonian(estimate, beta, rho_true=None):
    """log(rho~)/beta for the window, with ||log rho~ - log rho_window|| when the truth is known."""
    marg = reconstruct_marginal(estimate)
    w = np.linalg.eigvalsh(marg.matrix)
    logm = logm_pd(marg.matrix)
    err = math.nan
    if rho_true is not None:
        true = reduce_to(rho_true, estimate.window)
        err = operator_norm(logm - logm_pd(true.matrix))
    return LearnedHamiltonian(marg.like(logm / beta), float(w.min()), err)


def _strings_on(support, window):
    """Index tuples of Pauli strings acting nontrivially on exactly ``support`` inside ``window``."""
    pos = [window.index(s) for s in support]
    for letters in product(range(1, 4), repeat=len(support)):
        idx = [0] * len(window)
        for p, a in zip(pos, letters):
            idx[p] = a
        yield tuple(idx), "".join(PAULI_LABELS[a] for a in letters)


def _term_coefficients(H):
    """Pauli coefficients of H grouped by support: {support: {label: coeff}}."""
    out = {}
    for t in H.terms:
        n = len(t.support)
        c = pauli_coefficients(DenseOperator(t.support, (2,) * n, t.block))
        d = out.setdefault(t.support, {})
        for idx, label in _strings_on(t.support, t.support):
            d[label] = d.get(label, 0.0) + float(c[idx].real)
    return out


def _block(coeffs, support):
    n = len(support)
    C = np.zeros((4,) * n)
    for label, v in coeffs.items():
        C[tuple(PAULI_LABELS.index(ch) for ch in label)] = v
    return pauli_synthesize(C, support).matrix


def _cut_distance(support, window, n_sites):
    """Distance from ``support`` to the nearest window edge that cuts the chain (inf if none)."""
    d = math.inf
    if window[0] > 0:
        d = min(d, support[0] - window[0])
    if window[-1] < n_sites - 1:
        d = min(d, window[-1] - support[-1])
    return d


@dataclass
class LearnReport:
    per_coupling: list
    max_err: float
    shots: int
    window_size: int
    core: int
    config: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({
            "config": self.config,
            "per_coupling": self.per_coupling,
            "max_err": self.max_err,
            "shots": self.shots,
            "window_size": self.window_size,
            "core": self.core,
        }, indent=2)

    def errors(self):
        return np.array([c["abs_err"] for c in self.per_coupling])


def learn_couplings_1d(H_true, beta, plan, core=2, rho=None):
    """Read couplings off beta^-1 log(rho~_window) for every term support of ``H_true``.

    A support is accepted from a window only when it sits at least
    (window - core)/2 sites away from every window edge that cuts the chain;
    among accepting windows the one with the largest margin is used.
    """
    lat = H_true.lattice
    if lat.dimension != 1:
        raise ValueError("learning is implemented for chains only")
    n = lat.n_sites
    size = len(plan.windows[0])
    k = max(1, int(H_true.decay_meta.k))
    margin = (size - core) // 2
    if margin < k or core < k + 1:
        raise NumericalError("window-too-small", f"window {size} with core {core} cannot isolate range {k}")
    if rho is None:
        rho = gibbs_state(H_true, beta)
    estimates = sample_window_expectations(rho, plan)
    logs = {}
    truth = _term_coefficients(H_true)
    rows = []
    for support, true in sorted(truth.items()):
        best = None
        for i, est in enumerate(plan.windows):
            if not set(support) <= set(est):
                continue
            d = _cut_distance(support, est, n)
            if d >= margin and (best is None or d > best[0]):
                best = (d, i)
        if best is None:
            continue
        i = best[1]
        if i not in logs:
            learned = learn_entanglement_hamiltonian(estimates[i], beta)
            logs[i] = pauli_coefficients(learned.Hstar).real
        C = logs[i]
        win = plan.windows[i]
        est = {label: float(C[idx]) for idx, label in _strings_on(support, win)}
        keep = {lab for lab in est if abs(est[lab]) > 1e-12 or abs(true.get(lab, 0.0)) > 1e-12}
        err = operator_norm(_block(est, support) - _block(true, support))
        rows.append({
            "sites": list(support),
            "window": list(win),
            "true": {lab: true.get(lab, 0.0) for lab in sorted(keep)},
            "est": {lab: est[lab] for lab in sorted(keep)},
            "abs_err": err,
        })
    max_err = max((r["abs_err"] for r in rows), default=math.nan)
    return LearnReport(rows, max_err, plan.shots_per_basis, size, core)

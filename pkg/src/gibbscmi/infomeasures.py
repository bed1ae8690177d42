"""Entropic functionals, EoF for two qubits and Petz recovery. All quantities in nats."""

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import NumericalError, RegionError
from .lattice import Region, distance
from .spectral import (
    DenseOperator,
    embed_matrix,
    logm_pd,
    reduce_to,
    trace_norm,
)

EIG_FLOOR = 1e-14
NEG_TOL = 1e-8


def _eigvals(rho):
    M = rho.matrix if isinstance(rho, DenseOperator) else np.asarray(rho)
    return np.linalg.eigvalsh(0.5 * (M + M.conj().T))


def entropy(rho):
    """von Neumann entropy -tr(rho log rho)."""
    w = _eigvals(rho)
    if w.min(initial=0.0) < -NEG_TOL:
        raise NumericalError("not-a-state", f"negative eigenvalue {w.min():.3e}")
    tr = w.sum()
    if abs(tr - 1.0) > NEG_TOL:
        raise NumericalError("not-a-state", f"trace {tr:.12g}")
    w = w[w > EIG_FLOOR]
    return float(-(w * np.log(w)).sum())


def relative_entropy(rho, sigma):
    """tr[rho log rho - rho log sigma]; infinite support mismatches raise."""
    R = rho.matrix if isinstance(rho, DenseOperator) else np.asarray(rho)
    S = sigma.matrix if isinstance(sigma, DenseOperator) else np.asarray(sigma)
    ws, Vs = np.linalg.eigh(0.5 * (S + S.conj().T))
    keep = ws > EIG_FLOOR
    if not keep.all():
        kernel = Vs[:, ~keep]
        leak = float(np.real(np.trace(kernel.conj().T @ R @ kernel)))
        if leak > 1e-12:
            raise NumericalError("infinite-relative-entropy", f"weight {leak:.3e} outside supp(sigma)")
    log_s = (Vs[:, keep] * np.log(ws[keep])) @ Vs[:, keep].conj().T
    wr, Vr = np.linalg.eigh(0.5 * (R + R.conj().T))
    pos = wr > EIG_FLOOR
    term1 = float((wr[pos] * np.log(wr[pos])).sum())
    term2 = float(np.real(np.trace(R @ log_s)))
    return term1 - term2


def _S(rho, X):
    if not X:
        return 0.0
    if Region(X) == Region(rho.sites) and "spectrum" in rho.__dict__:
        # Gibbs states carry their eigenvalues already
        return entropy_from_eigenvalues(rho.spectrum.eigenvalues)
    return entropy(reduce_to(rho, X))


def entropy_from_eigenvalues(w):
    w = np.asarray(w, dtype=float)
    w = w[w > EIG_FLOOR]
    return float(-(w * np.log(w)).sum())


@dataclass(frozen=True)
class Tripartition:
    A: Region
    B: Region
    C: Region
    exhaustive: bool = False

    def __post_init__(self):
        A, B, C = Region(self.A), Region(self.B), Region(self.C)
        if not A or not C:
            raise RegionError("empty-region", "A and C must be nonempty")
        if set(A) & set(B) or set(B) & set(C) or set(A) & set(C):
            raise RegionError("overlapping-regions", "tripartition parts must be disjoint")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def union(self):
        return self.A | self.B | self.C

    def validate(self, sites):
        sites = Region(sites)
        if not self.union.issubset(sites):
            raise RegionError("out-of-range", f"{list(self.union)} not within {list(sites)}")
        if self.exhaustive and self.union != sites:
            raise RegionError("not-exhaustive", "A, B, C must cover every site")


CMI_CSV_HEADER = ("R", "size_A", "size_B", "size_C", "beta", "cmi", "S_AB", "S_BC", "S_ABC", "S_B")


@dataclass(frozen=True)
class CmiRecord:
    part: Tripartition
    R: float
    cmi: float
    S_AB: float
    S_BC: float
    S_ABC: float
    S_B: float
    cmi_alt: float = math.nan
    beta: float = math.nan

    def csv_row(self):
        p = self.part
        return (self.R, len(p.A), len(p.B), len(p.C), self.beta, self.cmi, self.S_AB, self.S_BC, self.S_ABC, self.S_B)


def cmi(rho, part, lattice=None, beta=math.nan):
    """I(A:C|B) = S(AB) + S(BC) - S(ABC) - S(B), cross-checked against I(A:BC) - I(A:B)."""
    part.validate(rho.sites)
    A, B, C = part.A, part.B, part.C
    S_AB, S_BC, S_ABC, S_B = _S(rho, A | B), _S(rho, B | C), _S(rho, A | B | C), _S(rho, B)
    value = S_AB + S_BC - S_ABC - S_B
    S_A = _S(rho, A)
    alt = (S_A + S_BC - S_ABC) - (S_A + S_B - S_AB)
    if abs(alt - value) > 1e-9:
        raise NumericalError("cmi-inconsistent", f"{value} vs {alt}")
    R = distance(lattice, A, C) if lattice is not None else math.nan
    return CmiRecord(part, R, value, S_AB, S_BC, S_ABC, S_B, alt, beta)


def _log_embedded(rho, X):
    red = reduce_to(rho, X)
    return embed_matrix(logm_pd(red.matrix), red.sites, red.dims, rho.sites, rho.dims)


def cmi_hamiltonian(rho, beta, part):
    """-beta (H*_AB + H*_BC - H*_ABC - H*_B) with H*_X = log(rho_X) / beta.

    H*_ABC is taken as log(rho)/beta, i.e. H up to the log-partition constant,
    so that tr[rho * result] equals the CMI exactly.
    """
    part.validate(rho.sites)
    if not part.exhaustive and part.union != Region(rho.sites):
        raise RegionError("not-exhaustive", "cmi_hamiltonian needs A, B, C to cover every site")
    A, B, C = part.A, part.B, part.C
    out = _log_embedded(rho, A | B) + _log_embedded(rho, B | C) - logm_pd(rho.matrix)
    if B:
        out = out - _log_embedded(rho, B)
    return rho.like(-out)


def mutual_information(rho, A, B):
    A, B = Region(A), Region(B)
    if set(A) & set(B):
        raise RegionError("overlapping-regions")
    return _S(rho, A) + _S(rho, B) - _S(rho, A | B)


class SquashedBound(NamedTuple):
    bound: float
    cmi: float
    separability_bound: float


def squashed_bound(rho, A, B):
    """Half of I(A:B|E) with E the rest of the system, an upper bound on E_sq(rho_AB)."""
    A, B = Region(A), Region(B)
    E = Region(rho.sites) - A - B
    value = cmi(rho, Tripartition(A, E, B)).cmi
    dmap = rho.dim_map
    dA = math.prod(dmap[s] for s in A)
    dB = math.prod(dmap[s] for s in B)
    sep = 2 * min(dA, dB) * math.sqrt(2 * max(value, 0.0))
    return SquashedBound(0.5 * value, value, sep)


_SYSY = np.array([[0, 0, 0, -1], [0, 0, 1, 0], [0, 1, 0, 0], [-1, 0, 0, 0]], dtype=float)


def concurrence(rho):
    """Wootters concurrence of a two-qubit state."""
    M = rho.matrix if isinstance(rho, DenseOperator) else np.asarray(rho)
    dims = rho.dims if isinstance(rho, DenseOperator) else None
    if M.shape != (4, 4) or (dims is not None and dims != (2, 2)):
        raise NumericalError("two-qubit-only", f"got shape {M.shape}")
    M = 0.5 * (M + M.conj().T)
    tilde = _SYSY @ M.conj() @ _SYSY
    w, V = np.linalg.eigh(M)
    sq = (V * np.sqrt(np.clip(w, 0, None))) @ V.conj().T
    K = sq @ tilde @ sq
    lam = np.sqrt(np.clip(np.linalg.eigvalsh(0.5 * (K + K.conj().T)), 0, None))[::-1]
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def _binary_entropy(p):
    return float(-sum(x * math.log(x) for x in (p, 1 - p) if 0 < x < 1)) + 0.0


def eof_two_qubit(rho):
    """Entanglement of formation (nats) from the concurrence closed form."""
    C = concurrence(rho)
    return _binary_entropy((1 + math.sqrt(max(0.0, 1 - C * C))) / 2)


def is_ppt(rho, tol=1e-12):
    """Peres-Horodecki test on a two-qubit state (partial transpose of the second qubit)."""
    M = np.asarray(rho.matrix).reshape(2, 2, 2, 2).transpose(0, 3, 2, 1).reshape(4, 4)
    return bool(np.linalg.eigvalsh(0.5 * (M + M.conj().T)).min() >= -tol)


class PetzResult(NamedTuple):
    state: DenseOperator
    trace_deviation: float
    error: float  # trace-norm distance to the input state


def _tanh_sinh(n, h=None):
    k = np.arange(n) - (n - 1) / 2
    if h is None:
        h = 3.0 / ((n - 1) / 2)
    x = k * h
    s = 0.5 * math.pi * np.sinh(x)
    weights = h * 0.5 * math.pi * np.cosh(x) / np.cosh(s) ** 2
    return s, weights


def tanh_sinh_rule(n=41, h=None):
    """Nodes and weights of the tanh-sinh rule on (-1, 1)."""
    s, w = _tanh_sinh(n, h)
    return np.tanh(s), w


def rotation_grid(n=41):
    """Times t and weights for the (pi/2)/(cosh(pi t)+1) density.

    With u = tanh(pi t / 2) the density becomes du/2 on (-1, 1), which is then
    handled by the tanh-sinh rule.
    """
    s, w = _tanh_sinh(n)
    return (2 / math.pi) * s, w / 2


def _power_embedded(red, z, sites, dims):
    """red**z embedded; only negative real parts demand positive definiteness."""
    w, V = np.linalg.eigh(0.5 * (red.matrix + red.matrix.conj().T))
    if z.real < 0:
        if w.min() <= EIG_FLOOR:
            raise NumericalError("not-positive-definite", f"lambda_min={w.min():.3e}", lambda_min=float(w.min()))
        f = w.astype(complex) ** z
    else:
        f = np.where(w > 0, np.clip(w, 0, None).astype(complex) ** z, 0.0)
    M = (V * f) @ V.conj().T
    return embed_matrix(M, red.sites, red.dims, sites, dims)


def petz_recover(rho, B, C, variant="plain", n_rot=41):
    """Apply the Petz map B -> BC to rho_{AB} and compare with rho.

    ``variant="rotated"`` averages the rotated maps over t with the
    (pi/2)/(cosh(pi t)+1) weight.
    """
    B, C = Region(B), Region(C)
    sites, dims = rho.sites, rho.dims
    rho_AB = reduce_to(rho, Region(sites) - C)
    X = embed_matrix(rho_AB.matrix, rho_AB.sites, rho_AB.dims, sites, dims) / math.prod(rho.dim_map[s] for s in C)
    rho_BC = reduce_to(rho, B | C)
    rho_B = reduce_to(rho, B) if B else None

    def branch(t):
        z = (1 + 1j * t) / 2
        left = _power_embedded(rho_BC, z, sites, dims)
        if rho_B is not None:
            left = left @ _power_embedded(rho_B, -z, sites, dims)
        return left @ X @ left.conj().T

    if variant == "plain":
        out = branch(0.0)
    elif variant == "rotated":
        ts, ws = rotation_grid(n_rot)
        out = sum(w * branch(t) for t, w in zip(ts, ws))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    # undo the 1/d_C used to lift rho_AB; the Petz map acts on rho_AB itself
    out = out * math.prod(rho.dim_map[s] for s in C)
    tr = float(np.real(np.trace(out)))
    out = out / tr
    out = 0.5 * (out + out.conj().T)
    return PetzResult(rho.like(out), abs(tr - 1.0), trace_norm(out - rho.matrix))

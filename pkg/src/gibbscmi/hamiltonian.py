"""Local Hamiltonians built from terms with explicit supports.

The Gibbs weight used throughout the package is ``exp(+beta * H)``; physical
(ferromagnetic) conventions are recovered by negating the couplings.
"""

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, ModelError
from .lattice import Lattice, Region, distance

HERMITIAN_TOL = 1e-12
DECAY_RTOL = 1e-12

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
# real two-site products; sigma_y x sigma_y is real
_REAL_PAIRS = ("XX", "XZ", "ZX", "ZZ", "YY")


def pauli_matrix(label):
    out = np.ones((1, 1))
    for ch in label:
        out = np.kron(out, PAULI[ch])
    if np.allclose(out.imag, 0.0):
        out = out.real
    return out


@dataclass(frozen=True, eq=False)
class LocalTerm:
    support: Region
    block: np.ndarray

    def __post_init__(self):
        support = Region(self.support)
        if not support:
            raise ModelError("empty-support")
        block = np.asarray(self.block)
        if not np.iscomplexobj(block):
            block = block.astype(float)
        elif np.allclose(block.imag, 0.0, atol=0.0):
            block = block.real.copy()
        if block.ndim != 2 or block.shape[0] != block.shape[1]:
            raise ModelError("bad-block", "term block must be square")
        if np.max(np.abs(block - block.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise ModelError("not-hermitian", f"term on {list(support)} is not Hermitian")
        block.setflags(write=False)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "block", block)

    @property
    def norm(self):
        return float(np.linalg.norm(self.block, 2))


@dataclass(frozen=True)
class DecayMeta:
    J0bar: float
    mu: float
    k: float  # max support diameter; math.inf when undeclared


class InteractionSum(NamedTuple):
    value: float
    bound: float


@dataclass(frozen=True, eq=False)
class LocalHamiltonian:
    lattice: Lattice
    terms: tuple
    decay_meta: DecayMeta = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        terms = tuple(self.terms)
        for t in terms:
            if t.support and t.support[-1] >= self.lattice.n_sites:
                raise ModelError("out-of-range", f"term support {list(t.support)} outside lattice")
            dims = [self.lattice.local_dims[i] for i in t.support]
            if t.block.shape[0] != int(np.prod(dims)):
                raise ModelError("bad-block", f"block dimension mismatch on {list(t.support)}")
        object.__setattr__(self, "terms", terms)
        meta = self.decay_meta or measured_decay(self.lattice, terms)
        object.__setattr__(self, "decay_meta", meta)
        check_decay(self.lattice, terms, meta)

    def __len__(self):
        return len(self.terms)

    @property
    def is_real(self):
        return all(not np.iscomplexobj(t.block) for t in self.terms)

    @property
    def locality(self):
        """Largest support size (the ``k`` of a k-local Hamiltonian)."""
        return max((len(t.support) for t in self.terms), default=0)

    def site_strengths(self):
        s = np.zeros(self.lattice.n_sites)
        for t in self.terms:
            s[list(t.support)] += t.norm
        return s

    def pair_strengths(self):
        """Matrix of J_{i,i'}: summed norms of terms containing both sites."""
        n = self.lattice.n_sites
        J = np.zeros((n, n))
        for t in self.terms:
            idx = list(t.support)
            J[np.ix_(idx, idx)] += t.norm
        return J

    def total_norm(self):
        return float(sum(t.norm for t in self.terms))

    def to_dense(self, sites=None):
        from .spectral import hamiltonian_matrix

        return hamiltonian_matrix(self, sites)

    def with_terms(self, terms, name=None):
        return LocalHamiltonian(self.lattice, tuple(terms), self.decay_meta, name or self.name, self.params)


def support_diameter(lat, support):
    if len(support) < 2:
        return 0
    return max(lat.site_distance(a, b) for a, b in combinations(support, 2))


def measured_decay(lat, terms):
    """Tightest (J0bar, mu, k) consistent with the given terms."""
    H = LocalHamiltonian.__new__(LocalHamiltonian)
    object.__setattr__(H, "lattice", lat)
    object.__setattr__(H, "terms", tuple(terms))
    J = H.pair_strengths()
    J0 = float(J.diagonal().max(initial=0.0))
    mu = math.inf
    dist = lat._dist
    off = np.argwhere(np.triu(J, 1) > 0)
    for i, j in off:
        mu = min(mu, math.log(J0 / J[i, j]) / dist[i, j])
    k = max((support_diameter(lat, t.support) for t in terms), default=0)
    return DecayMeta(J0, mu, k)


def check_decay(lat, terms, meta):
    H = LocalHamiltonian.__new__(LocalHamiltonian)
    object.__setattr__(H, "lattice", lat)
    object.__setattr__(H, "terms", tuple(terms))
    J = H.pair_strengths()
    with np.errstate(over="ignore", invalid="ignore"):
        envelope = meta.J0bar * np.exp(-meta.mu * lat._dist)
    np.fill_diagonal(envelope, meta.J0bar)
    slack = DECAY_RTOL * max(meta.J0bar, 1.0)
    bad = np.argwhere(J > envelope + slack)
    if len(bad):
        i, j = bad[0]
        raise ModelError(
            "decay-violation",
            f"J[{i},{j}]={J[i, j]:.6g} exceeds {envelope[i, j]:.6g}",
        )
    for t in terms:
        if support_diameter(lat, t.support) > meta.k:
            raise ModelError("decay-violation", f"term on {list(t.support)} exceeds range k={meta.k}")


def _term(lat, sites, label, coeff):
    return LocalTerm(Region(sites), coeff * pauli_matrix(label))


def _nn_pairs(lat):
    return sorted(tuple(sorted(e)) for e in lat.edges)


def tfim(lat, J=1.0, g=1.0):
    terms = [_term(lat, e, "ZZ", J) for e in _nn_pairs(lat)]
    terms += [_term(lat, (i,), "X", g) for i in range(lat.n_sites)]
    return LocalHamiltonian(lat, terms, name="tfim", params={"J": J, "g": g})


def ising(lat, J=1.0, h=0.0):
    """Classical (commuting) Ising chain; every term is diagonal."""
    terms = [_term(lat, e, "ZZ", J) for e in _nn_pairs(lat)]
    if h:
        terms += [_term(lat, (i,), "Z", h) for i in range(lat.n_sites)]
    return LocalHamiltonian(lat, terms, name="ising", params={"J": J, "h": h})


def heisenberg(lat, J=1.0, h=0.0):
    xyz = pauli_matrix("XX") + pauli_matrix("YY").real + pauli_matrix("ZZ")
    terms = [LocalTerm(Region(e), J * xyz) for e in _nn_pairs(lat)]
    if h:
        terms += [_term(lat, (i,), "Z", h) for i in range(lat.n_sites)]
    return LocalHamiltonian(lat, terms, name="heisenberg", params={"J": J, "h": h})


def random_expdecay(lat, J0bar=1.0, mu=1.0, seed=0):
    """Random two-body Hamiltonian with |h_{ii'}| <= J0bar * exp(-mu * d(i, i')).

    ``mu = inf`` gives a nearest-neighbour model.  All blocks are real.
    """
    rng = np.random.default_rng(seed)
    n = lat.n_sites
    terms = []
    for i, j in combinations(range(n), 2):
        d = lat.site_distance(i, j)
        if math.isinf(mu):
            if d != 1:
                continue
            cap = J0bar / 2
        else:
            cap = J0bar * math.exp(-mu * d)
        coeffs = rng.normal(size=len(_REAL_PAIRS))
        block = sum(c * pauli_matrix(p).real for c, p in zip(coeffs, _REAL_PAIRS))
        block *= rng.uniform(0.2, 1.0) * cap / np.linalg.norm(block, 2)
        terms.append(LocalTerm(Region((i, j)), block))
    for i in range(n):
        hx, hz = rng.normal(size=2)
        block = hx * PAULI["X"] + hz * PAULI["Z"]
        block *= rng.uniform(0.2, 1.0) * J0bar / 4 / np.linalg.norm(block, 2)
        terms.append(LocalTerm(Region((i,)), block))
    strengths = np.zeros(n)
    for t in terms:
        strengths[list(t.support)] += t.norm
    scale = min(1.0, J0bar / strengths.max())
    terms = [LocalTerm(t.support, scale * t.block) for t in terms]
    meta = measured_decay(lat, terms)
    if not math.isinf(mu):
        meta = DecayMeta(J0bar, mu, meta.k)
    return LocalHamiltonian(lat, terms, meta, "random_expdecay", {"J0bar": J0bar, "mu": mu, "seed": seed})


def load_custom_terms(source):
    """Parse ``[{sites, real, imag?}, ...]`` from a JSON string, path, or already-loaded list."""
    if isinstance(source, str):
        text = source
        if not source.lstrip().startswith("["):
            with open(source) as fh:
                text = fh.read()
        source = json.loads(text)
    terms = []
    for entry in source:
        block = np.asarray(entry["real"], dtype=float)
        if "imag" in entry:
            block = block + 1j * np.asarray(entry["imag"], dtype=float)
        terms.append(LocalTerm(Region(entry["sites"]), block))
    return terms


def build_model(lat, model):
    """Instantiate a model from a spec dict such as ``{"model": "tfim", "J": 1, "g": 1}``."""
    model = dict(model)
    kind = model.pop("model", None)
    builders = {"tfim": tfim, "ising": ising, "heisenberg": heisenberg, "random_expdecay": random_expdecay}
    if kind in builders:
        try:
            return builders[kind](lat, **model)
        except TypeError as exc:
            raise ConfigError("bad-model", str(exc)) from exc
    if kind == "custom":
        terms = load_custom_terms(model["terms"])
        meta = None
        if "J0bar" in model:
            meta = DecayMeta(float(model["J0bar"]), float(model.get("mu", math.inf)), float(model.get("k", math.inf)))
        return LocalHamiltonian(lat, terms, meta, "custom")
    raise ConfigError("bad-model", f"unknown model {kind!r}")


def subset_hamiltonian(H, L):
    """Sum of the terms supported entirely inside ``L``."""
    L = set(Region(L))
    return H.with_terms([t for t in H.terms if set(t.support) <= L])


def boundary_interaction(H, L):
    """Terms straddling ``L`` and its complement."""
    L = Region(L)
    if not H.lattice.complement(L):
        from .errors import RegionError

        raise RegionError("no-complement")
    Ls = set(L)
    return H.with_terms([t for t in H.terms if set(t.support) & Ls and set(t.support) - Ls])


def interaction_sum(H, X, Y):
    """Summed norms of terms touching both ``X`` and ``Y``, with the |X||Y| J0 e^{-mu d} bound."""
    X, Y = Region(X), Region(Y)
    Xs, Ys = set(X), set(Y)
    value = sum(t.norm for t in H.terms if set(t.support) & Xs and set(t.support) & Ys)
    d = distance(H.lattice, X, Y)
    meta = H.decay_meta
    bound = len(X) * len(Y) * meta.J0bar * (math.exp(-meta.mu * d) if d or not math.isinf(meta.mu) else 1.0)
    return InteractionSum(float(value), float(bound))

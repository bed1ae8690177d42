"""Dense operator engine on tensor-product Hilbert spaces.

Tensor ordering is site-index-major: the lowest site index is the most
significant factor of the Kronecker product.
"""

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.optimize
import scipy.sparse

from .errors import NumericalError, RegionError
from .lattice import Region

HARD_DIM_LIMIT = 2**16
_dense_cap = 2**12
EIG_FLOOR = 1e-14
HERMITIAN_RTOL = 1e-10


def set_dense_cap(dim):
    """Change the dense dimension cap (default 2**12)."""
    global _dense_cap
    if dim > HARD_DIM_LIMIT:
        raise ValueError(f"cap may not exceed {HARD_DIM_LIMIT}")
    _dense_cap = int(dim)


def dense_cap():
    return _dense_cap


def _check_dim(dim):
    if dim > _dense_cap:
        raise NumericalError("too-large", f"dimension {dim} exceeds dense cap {_dense_cap}")


class Spectrum(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.conj().T

    def apply(self, fn):
        V = self.eigenvectors
        return (V * fn(self.eigenvalues)) @ V.conj().T


@dataclass(frozen=True, eq=False)
class DenseOperator:
    sites: Region
    dims: tuple
    matrix: np.ndarray
    meta: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        sites = Region(self.sites)
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != len(sites):
            raise ValueError("one local dimension per site required")
        M = np.asarray(self.matrix)
        dim = int(np.prod(dims, dtype=np.int64))
        if M.shape != (dim, dim):
            raise ValueError(f"matrix shape {M.shape} does not match dimension {dim}")
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def identity(cls, sites, dims):
        return cls(sites, dims, np.eye(int(np.prod(dims, dtype=np.int64))))

    @property
    def dim(self):
        return self.matrix.shape[0]

    @property
    def dim_map(self):
        return dict(zip(self.sites, self.dims))

    def like(self, matrix, **meta):
        return DenseOperator(self.sites, self.dims, matrix, meta)

    def _coerce(self, other):
        if isinstance(other, DenseOperator):
            if other.sites != self.sites:
                raise RegionError("site-mismatch", f"{list(self.sites)} vs {list(other.sites)}")
            return other.matrix
        return other

    def __add__(self, other):
        if np.isscalar(other):
            return self.like(self.matrix + other * np.eye(self.dim))
        return self.like(self.matrix + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return self.like(self.matrix - other * np.eye(self.dim))
        return self.like(self.matrix - self._coerce(other))

    def __neg__(self):
        return self.like(-self.matrix)

    def __mul__(self, scalar):
        return self.like(self.matrix * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.like(self.matrix / scalar)

    def __matmul__(self, other):
        return self.like(self.matrix @ self._coerce(other))

    def dag(self):
        return self.like(self.matrix.conj().T)

    def trace(self):
        return complex(np.trace(self.matrix))

    def norm(self, ord=2):
        """Operator norm by default; ``ord=1`` gives the trace norm."""
        return operator_norm(self.matrix) if ord == 2 else trace_norm(self.matrix) if ord == 1 else float(np.linalg.norm(self.matrix, ord))

    def is_hermitian(self, rtol=HERMITIAN_RTOL):
        M = self.matrix
        scale = max(np.abs(M).max(initial=0.0), 1e-300)
        return np.abs(M - M.conj().T).max(initial=0.0) <= rtol * scale

    def hermitian_part(self):
        M = 0.5 * (self.matrix + self.matrix.conj().T)
        if np.iscomplexobj(M) and not np.any(M.imag):
            M = M.real
        return self.like(M)

    @cached_property
    def spectrum(self):
        """Eigendecomposition of the Hermitian part."""
        M = 0.5 * (self.matrix + self.matrix.conj().T)
        if np.iscomplexobj(M) and np.abs(M.imag).max(initial=0.0) == 0.0:
            M = M.real
        w, V = np.linalg.eigh(M)
        return Spectrum(w, V)

    def extend(self, sites, dims=None):
        """Tensor with the identity on the extra sites of ``sites``."""
        sites = Region(sites)
        dmap = dict(zip(sites, dims)) if dims is not None else {}
        dmap.update(self.dim_map)
        full_dims = tuple(dmap[s] for s in sites)
        M = embed_matrix(self.matrix, self.sites, self.dims, sites, full_dims)
        return DenseOperator(sites, full_dims, M)

    def to_json(self):
        M = np.asarray(self.matrix, dtype=complex)
        return json.dumps({
            "sites": list(self.sites),
            "dims": list(self.dims),
            "real": M.real.tolist(),
            "imag": M.imag.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        M = np.asarray(d["real"], float) + 1j * np.asarray(d.get("imag", 0.0), float)
        return cls(d["sites"], d["dims"], M)

    _MAGIC = b"GCOP"

    def to_bytes(self):
        """Binary container: magic, version, n, sites, dims, row-major complex128 entries."""
        n = len(self.sites)
        head = self._MAGIC + struct.pack("<II", 1, n)
        head += struct.pack(f"<{n}i", *self.sites) + struct.pack(f"<{n}i", *self.dims)
        return head + np.ascontiguousarray(self.matrix, dtype="<c16").tobytes()

    @classmethod
    def from_bytes(cls, blob):
        if blob[:4] != cls._MAGIC:
            raise ValueError("not a dense operator container")
        version, n = struct.unpack_from("<II", blob, 4)
        if version != 1:
            raise ValueError(f"unsupported container version {version}")
        off = 12
        sites = struct.unpack_from(f"<{n}i", blob, off)
        dims = struct.unpack_from(f"<{n}i", blob, off + 4 * n)
        off += 8 * n
        dim = int(np.prod(dims, dtype=np.int64))
        M = np.frombuffer(blob, dtype="<c16", offset=off, count=dim * dim).reshape(dim, dim).copy()
        return cls(sites, dims, M)


def operator_norm(M):
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    if np.allclose(M, M.conj().T, rtol=0, atol=1e-13 * max(np.abs(M).max(), 1e-300)):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (M + M.conj().T))).max())
    return float(np.linalg.norm(M, 2))


def trace_norm(M):
    M = np.asarray(M)
    if np.allclose(M, M.conj().T, rtol=0, atol=1e-13 * max(np.abs(M).max(initial=0.0), 1e-300)):
        return float(np.abs(np.linalg.eigvalsh(0.5 * (M + M.conj().T))).sum())
    return float(np.linalg.svd(M, compute_uv=False).sum())


def _positions(sub, full):
    index = {s: k for k, s in enumerate(full)}
    try:
        return [index[s] for s in sub]
    except KeyError as exc:
        raise RegionError("not-a-subset", f"site {exc.args[0]} not in {list(full)}") from None


def embed_matrix(mat, sub_sites, sub_dims, full_sites, full_dims):
    """Place ``mat`` (acting on ``sub_sites``) into the space of ``full_sites``."""
    sub_sites, full_sites = Region(sub_sites), Region(full_sites)
    pos = _positions(sub_sites, full_sites)
    full_dims = tuple(full_dims)
    D = int(np.prod(full_dims, dtype=np.int64))
    if len(sub_sites) == len(full_sites):
        return np.array(mat, copy=True)
    if pos == list(range(pos[0], pos[0] + len(pos))) if pos else False:
        left = int(np.prod(full_dims[: pos[0]], dtype=np.int64))
        right = int(np.prod(full_dims[pos[-1] + 1:], dtype=np.int64))
        out = np.kron(np.eye(left), np.kron(mat, np.eye(right))) if (left > 1 or right > 1) else np.array(mat)
        return out
    rest = [k for k in range(len(full_sites)) if k not in pos]
    d_rest = int(np.prod([full_dims[k] for k in rest], dtype=np.int64))
    big = np.kron(mat, np.eye(d_rest))
    order = pos + rest  # current axis -> site position
    n = len(full_sites)
    cur_dims = [full_dims[k] for k in order]
    T = big.reshape(cur_dims + cur_dims)
    inv = np.argsort(order)
    T = T.transpose(list(inv) + [n + k for k in inv])
    return T.reshape(D, D)


def embed(term, lat, sites=None):
    """Embed a local term into the Hilbert space of ``sites`` (default: the whole lattice)."""
    sites = lat.sites if sites is None else Region(sites)
    dims = tuple(lat.local_dims[s] for s in sites)
    D = int(np.prod(dims, dtype=np.int64))
    _check_dim(D)
    sub_dims = tuple(lat.local_dims[s] for s in term.support)
    return DenseOperator(sites, dims, embed_matrix(term.block, term.support, sub_dims, sites, dims))


def hamiltonian_matrix(H, sites=None):
    """Dense matrix of the terms of ``H`` supported inside ``sites``."""
    lat = H.lattice
    sites = lat.sites if sites is None else Region(sites)
    dims = tuple(lat.local_dims[s] for s in sites)
    D = int(np.prod(dims, dtype=np.int64))
    _check_dim(D)
    sset = set(sites)
    dtype = float if H.is_real else complex
    acc = scipy.sparse.csr_matrix((D, D), dtype=dtype)
    dense = np.zeros((D, D), dtype=dtype)
    for t in H.terms:
        if not set(t.support) <= sset:
            continue
        pos = _positions(t.support, sites)
        if pos == list(range(pos[0], pos[0] + len(pos))):
            left = int(np.prod(dims[: pos[0]], dtype=np.int64))
            right = int(np.prod(dims[pos[-1] + 1:], dtype=np.int64))
            acc = acc + scipy.sparse.kron(
                scipy.sparse.identity(left, format="csr"),
                scipy.sparse.kron(scipy.sparse.csr_matrix(t.block), scipy.sparse.identity(right, format="csr")),
                format="csr",
            )
        else:
            sub_dims = tuple(lat.local_dims[s] for s in t.support)
            dense += embed_matrix(t.block, t.support, sub_dims, sites, dims)
    return DenseOperator(sites, dims, dense + acc.toarray())


def spectrum(O):
    return O.spectrum if isinstance(O, DenseOperator) else DenseOperator(range(1), (O.shape[0],), O).spectrum


def _shifted_exp(w, beta):
    x = beta * w
    shift = x.max()
    return np.exp(x - shift), shift


def gibbs_state(H, beta, spec=None):
    """Normalized exp(+beta H) / Z; ``meta`` carries ``logZ`` and ``beta``.

    ``H`` may be a LocalHamiltonian or a Hermitian DenseOperator.  Passing a
    precomputed ``spec`` reuses one diagonalization across a beta scan.
    """
    if beta < 0:
        raise ValueError("beta must be non-negative")
    Hd = H if isinstance(H, DenseOperator) else H.to_dense()
    spec = spec or Hd.spectrum
    p, shift = _shifted_exp(spec.eigenvalues, beta)
    total = p.sum()
    if not np.isfinite(total) or total <= 0:
        raise NumericalError("numeric-overflow", f"Gibbs weights not finite at beta={beta}")
    p = p / total
    V = spec.eigenvectors
    rho = (V * p) @ V.conj().T
    rho = 0.5 * (rho + rho.conj().T)
    out = DenseOperator(Hd.sites, Hd.dims, rho, {"beta": beta, "logZ": float(shift + math.log(total))})
    out.__dict__["spectrum"] = Spectrum(p, V)
    return out


def _require_pd(w, what):
    lam = float(w.min())
    if lam <= EIG_FLOOR:
        raise NumericalError("not-positive-definite", f"{what}: lambda_min={lam:.3e}", lambda_min=lam)


def mat_fn(O, fn):
    """Spectral function of an operator: ``'exp'``, ``'log'``, ``'sqrt'``, ``'inv-sqrt'`` or ``('power', z)``."""
    if not isinstance(O, DenseOperator):
        O = DenseOperator(range(1), (np.asarray(O).shape[0],), O)
    if fn == "exp" and not O.is_hermitian():
        return O.like(scipy.linalg.expm(O.matrix))
    if not O.is_hermitian():
        raise NumericalError("not-hermitian", f"{fn} requires a Hermitian operator")
    w, V = O.spectrum
    if fn == "exp":
        return O.like((V * np.exp(w)) @ V.conj().T)
    if isinstance(fn, tuple) and fn[0] == "power":
        z = fn[1]
        _require_pd(w, "power")
        return O.like((V * np.power(w.astype(complex) if np.iscomplexobj(z) else w, z)) @ V.conj().T)
    _require_pd(w, fn)
    funcs = {"log": np.log, "sqrt": np.sqrt, "inv-sqrt": lambda x: 1.0 / np.sqrt(x)}
    try:
        f = funcs[fn]
    except KeyError:
        raise ValueError(f"unknown matrix function {fn!r}") from None
    return O.like((V * f(w)) @ V.conj().T)


def logm_pd(M):
    """Logarithm of a Hermitian positive-definite array."""
    M = 0.5 * (M + np.conj(M).T)
    w, V = np.linalg.eigh(M)
    _require_pd(w, "log")
    return (V * np.log(w)) @ V.conj().T


def time_evolve(O, H, t):
    """O(H, t) = exp(iHt) O exp(-iHt)."""
    if t == 0:
        return O
    w, V = spectrum(H)
    M = O.matrix if isinstance(O, DenseOperator) else O
    Ot = V.conj().T @ M @ V
    phase = np.exp(1j * w * t)
    Ot = (phase[:, None] * Ot) * phase.conj()[None, :]
    out = V @ Ot @ V.conj().T
    return O.like(out) if isinstance(O, DenseOperator) else out


class ImaginaryConjugate(NamedTuple):
    operator: DenseOperator
    norm: float


def imaginary_conjugate(O, H, tau):
    """exp(-tau H) O exp(tau H) and its operator norm."""
    w, V = spectrum(H)
    spread = abs(tau) * (w.max() - w.min())
    if spread > 700:
        raise NumericalError("numeric-overflow", f"tau * spectral width = {spread:.1f}")
    M = O.matrix if isinstance(O, DenseOperator) else O
    Ot = V.conj().T @ M @ V
    scale = np.exp(-tau * (w - w.mean()))
    Ot = (scale[:, None] * Ot) / scale[None, :]
    out = V @ Ot @ V.conj().T
    op = O.like(out) if isinstance(O, DenseOperator) else out
    return ImaginaryConjugate(op, operator_norm(out))


def partial_trace(O, L):
    """Trace out the sites ``L``; returns an operator on the remaining sites."""
    L = Region(L)
    pos = _positions(L, O.sites)
    n = len(O.sites)
    keep = [k for k in range(n) if k not in pos]
    T = O.matrix.reshape(O.dims + O.dims)
    rows = list(range(n))
    cols = [k if k in pos else n + k for k in range(n)]
    out_idx = [k for k in keep] + [n + k for k in keep]
    R = np.einsum(T, rows + cols, out_idx)
    kd = tuple(O.dims[k] for k in keep)
    d = int(np.prod(kd, dtype=np.int64))
    return DenseOperator([O.sites[k] for k in keep], kd, np.asarray(R).reshape(d, d))


def reduce_to(O, keep):
    """Reduced operator on ``keep`` (trace over everything else)."""
    keep = Region(keep)
    return partial_trace(O, Region(O.sites) - keep)


def normalized_partial_trace(O, X):
    """tr_X(O) / tr_X(1), tensored back with the identity on ``X``."""
    X = Region(X)
    if not X:
        return O
    R = partial_trace(O, X)
    dX = int(np.prod([O.dim_map[s] for s in X], dtype=np.int64))
    R = R / dX
    return DenseOperator(O.sites, O.dims, embed_matrix(R.matrix, R.sites, R.dims, O.sites, O.dims))


PAULI_LABELS = "IXYZ"
_PAULI_STACK = np.array([
    [[1, 0], [0, 1]],
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


def pauli_coefficients(O):
    """Array ``c[a1, ..., an]`` with c_P = tr(P O) / D, axes ordered like ``O.sites``."""
    if any(d != 2 for d in O.dims):
        raise NumericalError("qubit-only", "Pauli decomposition needs qubit sites")
    n = len(O.dims)
    T = np.asarray(O.matrix, dtype=complex).reshape((2,) * (2 * n))
    # interleave (i_k, j_k) so each site owns one axis of length 4
    T = T.transpose([x for k in range(n) for x in (k, n + k)]).reshape((4,) * n)
    # c_a = sum_ij P_a[j, i] O[i, j] / 2, applied site by site
    W = _PAULI_STACK.transpose(0, 2, 1).reshape(4, 4) / 2
    for k in range(n):
        T = np.moveaxis(np.tensordot(W, T, axes=([1], [k])), 0, k)
    return T


def pauli_synthesize(C, sites):
    """Inverse of ``pauli_coefficients``: sum_P c_P P as a DenseOperator."""
    C = np.asarray(C, dtype=complex)
    n = C.ndim
    W = _PAULI_STACK.reshape(4, 4).T  # (i, j) pair index <- Pauli index
    T = C
    for k in range(n):
        T = np.moveaxis(np.tensordot(W, T, axes=([1], [k])), 0, k)
    T = T.reshape((2,) * (2 * n))
    T = T.transpose([2 * k for k in range(n)] + [2 * k + 1 for k in range(n)])
    return DenseOperator(sites, (2,) * n, T.reshape(2**n, 2**n))


def _pauli_coefficients_reference(O):
    n = len(O.dims)
    out = np.zeros((4,) * n, dtype=complex)
    for idx in product(range(4), repeat=n):
        P = np.ones((1, 1))
        for a in idx:
            P = np.kron(P, _PAULI_STACK[a])
        out[idx] = np.trace(P @ O.matrix) / 2**n
    return out


def pauli_decompose(O, tol=0.0):
    """Map Pauli strings (e.g. ``"XIZ"``) to coefficients tr(P O)/D."""
    C = pauli_coefficients(O)
    out = {}
    for idx in zip(*np.nonzero(np.abs(C) > tol)):
        out["".join(PAULI_LABELS[a] for a in idx)] = complex(C[idx])
    return out


def pauli_reconstruct(coeffs, sites):
    sites = Region(sites)
    n = len(sites)
    M = np.zeros((2**n, 2**n), dtype=complex)
    for label, c in coeffs.items():
        P = np.ones((1, 1))
        for ch in label:
            P = np.kron(P, _PAULI_STACK[PAULI_LABELS.index(ch)])
        M += c * P
    return DenseOperator(sites, (2,) * n, M)


def random_hermitian(dim, rng, unit_norm=True):
    G = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    A = 0.5 * (G + G.conj().T)
    return A / operator_norm(A) if unit_norm else A


@dataclass
class LiebRobinsonProfile:
    times: np.ndarray
    distances: np.ndarray
    norms: np.ndarray  # shape (len(times), len(distances))
    C: float
    v: float
    mu: float
    residual: float


def lieb_robinson_profile(H, X, Ys, t_grid, seed=0, n_samples=4):
    """Max of ||[O_X(t), O_Y]|| over random unit-norm local operators, per time and distance.

    ``Ys`` is a list of regions disjoint from ``X``.  The table is fitted to
    C (exp(v|t|) - 1) exp(-mu d) by least squares on the logarithm.
    """
    from .lattice import distance

    lat = H.lattice
    X = Region(X)
    Ys = [Region(Y) for Y in Ys]
    for Y in Ys:
        if not X.isdisjoint(Y):
            raise RegionError("overlapping-regions", "X and Y must be disjoint")
    rng = np.random.default_rng(seed)
    Hd = H.to_dense()
    sites, dims = Hd.sites, Hd.dims
    dist = np.array([distance(lat, X, Y) for Y in Ys])

    def local(R):
        d = lat.hilbert_dim(R)
        return embed_matrix(random_hermitian(d, rng), R, [lat.local_dims[s] for s in R], sites, dims)

    OX = [local(X) for _ in range(n_samples)]
    OY = [[local(Y) for _ in range(n_samples)] for Y in Ys]
    t_grid = np.asarray(t_grid, dtype=float)
    table = np.zeros((len(t_grid), len(Ys)))
    for a, t in enumerate(t_grid):
        for ox in OX:
            oxt = time_evolve(ox, Hd, t)
            for b in range(len(Ys)):
                for oy in OY[b]:
                    comm = oxt @ oy - oy @ oxt
                    table[a, b] = max(table[a, b], operator_norm(1j * comm))
    C, v, mu, res = _fit_lr(t_grid, dist, table)
    return LiebRobinsonProfile(t_grid, dist, table, C, v, mu, res)


def _fit_lr(t, d, table):
    T, Dd = np.meshgrid(np.abs(t), d, indexing="ij")
    mask = (table > 1e-12) & (T > 0)
    if mask.sum() < 3:
        return math.nan, math.nan, math.nan, math.nan
    y = np.log(table[mask])
    tt, dd = T[mask], Dd[mask]

    def resid(p):
        logC, logv, mu = p
        v = math.exp(logv)
        return logC + np.log(np.expm1(v * tt)) - mu * dd - y

    sol = scipy.optimize.least_squares(resid, x0=[0.0, 0.0, 1.0])
    logC, logv, mu = sol.x
    return float(math.exp(logC)), float(math.exp(logv)), float(mu), float(np.sqrt(np.mean(sol.fun**2)))

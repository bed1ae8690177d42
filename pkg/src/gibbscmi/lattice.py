"""Finite lattice geometry: sites, graph distance and region calculus."""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, RegionError

GEOMETRIES = ("chain-open", "chain-periodic", "grid-2d")


class Region(tuple):
    """Canonical (sorted, deduplicated) tuple of site indices."""

    def __new__(cls, sites=()):
        if isinstance(sites, (int, np.integer)):
            sites = (sites,)
        return super().__new__(cls, sorted({int(s) for s in sites}))

    def __repr__(self):
        return f"Region({list(self)})"

    def __or__(self, other):
        return Region(set(self) | set(other))

    def __and__(self, other):
        return Region(set(self) & set(other))

    def __sub__(self, other):
        return Region(set(self) - set(other))

    def issubset(self, other):
        return set(self) <= set(other)

    def isdisjoint(self, other):
        return set(self).isdisjoint(other)


@dataclass(frozen=True, eq=False)
class Lattice:
    n_sites: int
    edges: frozenset
    local_dims: tuple = None
    geometry_tag: str = "chain-open"
    shape: tuple = None
    _dist: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n_sites < 1:
            raise ConfigError("bad-lattice", "n_sites must be positive")
        dims = self.local_dims
        if dims is None:
            dims = (2,) * self.n_sites
        elif isinstance(dims, (int, np.integer)):
            dims = (int(dims),) * self.n_sites
        dims = tuple(int(d) for d in dims)
        if len(dims) != self.n_sites or min(dims) < 2:
            raise ConfigError("bad-lattice", "local_dims must be >= 2 for every site")
        edges = frozenset(frozenset((int(a), int(b))) for a, b in map(tuple, self.edges) if a != b)
        for e in edges:
            if max(e) >= self.n_sites:
                raise ConfigError("bad-lattice", f"edge {sorted(e)} out of range")
        object.__setattr__(self, "local_dims", dims)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "_dist", self._bfs_all())
        if np.any(self._dist < 0):
            raise ConfigError("bad-lattice", "lattice graph is not connected")

    @classmethod
    def chain(cls, n, periodic=False, local_dim=2):
        edges = {(i, i + 1) for i in range(n - 1)}
        if periodic and n > 2:
            edges.add((n - 1, 0))
        tag = "chain-periodic" if periodic else "chain-open"
        return cls(n, edges, local_dim, tag, (n,))

    @classmethod
    def grid(cls, rows, cols, local_dim=2):
        if rows * cols > 12 or rows > 4 or cols > 4:
            raise ConfigError("bad-lattice", "2D grids limited to rectangles of at most 4x3 sites")
        idx = lambda r, c: r * cols + c  # noqa: E731
        edges = set()
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    edges.add((idx(r, c), idx(r, c + 1)))
                if r + 1 < rows:
                    edges.add((idx(r, c), idx(r + 1, c)))
        return cls(rows * cols, edges, local_dim, "grid-2d", (rows, cols))

    @classmethod
    def from_config(cls, cfg):
        """Build from ``{type, n | (rows, cols), periodic, local_dim}``."""
        kind = cfg.get("type", "chain")
        local_dim = cfg.get("local_dim", 2)
        if kind == "chain":
            return cls.chain(int(cfg["n"]), bool(cfg.get("periodic", False)), local_dim)
        if kind == "grid":
            return cls.grid(int(cfg["rows"]), int(cfg["cols"]), local_dim)
        raise ConfigError("bad-lattice", f"unknown lattice type {kind!r}")

    def _bfs_all(self):
        n = self.n_sites
        adj = [[] for _ in range(n)]
        for e in self.edges:
            a, b = tuple(e)
            adj[a].append(b)
            adj[b].append(a)
        dist = -np.ones((n, n), dtype=int)
        for s in range(n):
            dist[s, s] = 0
            queue = deque([s])
            while queue:
                u = queue.popleft()
                for w in adj[u]:
                    if dist[s, w] < 0:
                        dist[s, w] = dist[s, u] + 1
                        queue.append(w)
        return dist

    @property
    def sites(self):
        return Region(range(self.n_sites))

    @property
    def dimension(self):
        return 2 if self.geometry_tag == "grid-2d" else 1

    @property
    def diameter(self):
        return int(self._dist.max())

    def site_distance(self, i, j):
        return int(self._dist[i, j])

    def region(self, sites):
        reg = Region(sites)
        if reg and reg[-1] >= self.n_sites:
            raise RegionError("out-of-range", f"{reg} not within {self.n_sites} sites")
        return reg

    def complement(self, X):
        return Region(set(range(self.n_sites)) - set(X))

    def hilbert_dim(self, X=None):
        X = self.sites if X is None else X
        return int(np.prod([self.local_dims[i] for i in X], dtype=np.int64))

    def measured_gamma(self):
        """Smallest gamma with |boundary(i[r])| <= gamma * r**(D-1) over all sites and radii."""
        gamma = 0.0
        for i in range(self.n_sites):
            for r in range(1, self.diameter + 1):
                ball = extend_region(self, Region(i), r)
                if len(ball) == self.n_sites:
                    break
                gamma = max(gamma, len(boundary(self, ball)) / r ** (self.dimension - 1))
        return gamma


def distance(lat, X, Y):
    """Graph distance between two regions, 0 when they overlap."""
    X, Y = Region(X), Region(Y)
    if not X or not Y:
        raise RegionError("empty-region")
    return int(lat._dist[np.ix_(list(X), list(Y))].min())


def extend_region(lat, X, r):
    """All sites within distance ``r`` of ``X``."""
    X = Region(X)
    if not X:
        raise RegionError("empty-region")
    d = lat._dist[list(X)].min(axis=0)
    return Region(np.flatnonzero(d <= r))


def boundary(lat, X):
    """Sites of ``X`` adjacent to the complement of ``X``."""
    X = lat.region(X)
    if not X:
        raise RegionError("empty-region")
    comp = lat.complement(X)
    if not comp:
        raise RegionError("no-complement")
    d = lat._dist[np.ix_(list(X), list(comp))].min(axis=1)
    return Region(np.asarray(X)[d == 1])

"""Discrete domains ``D ∩ εZ^d``: vertices, edges, boundary and plaquettes.

Vertices are indexed in row-major lexicographic order of their integer
coordinates.  Each unordered nearest-neighbour pair is stored once as a
*canonical* edge ``(x, x + ε e_l)``; directed edge ``j`` with ``j < m`` is
canonical edge ``j`` and ``j >= m`` is the reversal of canonical edge
``j - m``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


class DomainError(ValueError):
    """Invalid domain construction request."""


class LoopError(ValueError):
    """Vertex sequence that is not a closed nearest-neighbour loop."""


@dataclass(frozen=True, eq=False)
class LatticeDomain:
    d: int
    eps: float
    coords: np.ndarray  # (n, d) integer lattice coordinates
    boundary: np.ndarray  # (n,) bool
    tail: np.ndarray  # (m,) canonical edge tails
    head: np.ndarray  # (m,) canonical edge heads
    axis: np.ndarray  # (m,) coordinate direction of each canonical edge
    nbr: np.ndarray  # (n, 2d) neighbour in direction +e_l (2l) / -e_l (2l+1), -1 if absent
    nbr_edge: np.ndarray  # (n, 2d) canonical edge joining x to that neighbour
    nbr_sign: np.ndarray  # (n, 2d) +1 if x is the tail of that canonical edge
    plaq_vertices: np.ndarray  # (P, 4) counterclockwise vertex cycle
    plaq_edges: np.ndarray  # (P, 4) directed edge ids
    plaq_planes: np.ndarray  # (P, 2) the (alpha, beta) plane
    box_lo: tuple | None = None
    box_hi: tuple | None = None
    _index: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.coords)

    @property
    def n_edges(self) -> int:
        """Number of canonical (undirected) edges."""
        return len(self.tail)

    @property
    def n_directed(self) -> int:
        return 2 * len(self.tail)

    @property
    def n_plaquettes(self) -> int:
        return len(self.plaq_vertices)

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    @property
    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def positions(self) -> np.ndarray:
        return self.coords * self.eps

    @property
    def is_rect(self) -> bool:
        return self.box_lo is not None

    @property
    def shape(self) -> tuple:
        """Grid shape for rectangular domains (vertex arrays reshape to it)."""
        if not self.is_rect:
            raise DomainError("shape is only defined for rectangular domains")
        span = self.coords.max(axis=0) - self.coords.min(axis=0) + 1
        return tuple(int(s) for s in span)

    def vertex_index(self, coord: Sequence[int]) -> int:
        """Index of the vertex with integer coordinates ``coord`` (or -1)."""
        return self._index.get(tuple(int(c) for c in coord), -1)

    def directed_edges(self) -> np.ndarray:
        """(2m, 2) array of (tail, head) for every directed edge."""
        fwd = np.stack([self.tail, self.head], axis=1)
        return np.concatenate([fwd, fwd[:, ::-1]], axis=0)

    def directed_edge(self, i: int, j: int) -> int:
        """Directed edge id of ``(i, j)``; raises if not nearest neighbours."""
        for s in range(2 * self.d):
            if self.nbr[i, s] == j:
                e = int(self.nbr_edge[i, s])
                return e if self.nbr_sign[i, s] > 0 else e + self.n_edges
        raise LoopError(f"vertices {i} and {j} are not nearest neighbours")

    def split_directed(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """Map directed ids to (canonical id, orientation sign)."""
        ids = np.asarray(ids, dtype=np.int64)
        m = self.n_edges
        return np.where(ids < m, ids, ids - m), np.where(ids < m, 1.0, -1.0)

    def descriptor(self) -> dict:
        if not self.is_rect:
            raise DomainError("only rectangular domains have a config descriptor")
        return {"d": self.d, "eps": self.eps, "box_lo": list(self.box_lo),
                "box_hi": list(self.box_hi)}


def _lattice_range(lo: float, hi: float, eps: float) -> np.ndarray:
    tol = 1e-9
    k0 = int(np.ceil(lo / eps - tol))
    k1 = int(np.floor(hi / eps + tol))
    return np.arange(k0, k1 + 1)


def _assemble(d: int, eps: float, coords: np.ndarray, box=None) -> LatticeDomain:
    n = len(coords)
    index = {tuple(int(v) for v in c): i for i, c in enumerate(coords)}
    nbr = -np.ones((n, 2 * d), dtype=np.int64)
    boundary = np.zeros(n, dtype=bool)
    tails, heads, axes = [], [], []
    for i, c in enumerate(coords):
        for l in range(d):
            for s, step in ((0, 1), (1, -1)):
                cc = list(c)
                cc[l] += step
                j = index.get(tuple(int(v) for v in cc), -1)
                nbr[i, 2 * l + s] = j
                if j < 0:
                    boundary[i] = True
                elif step == 1:
                    tails.append(i)
                    heads.append(j)
                    axes.append(l)
    tail = np.asarray(tails, dtype=np.int64)
    head = np.asarray(heads, dtype=np.int64)
    axis = np.asarray(axes, dtype=np.int64)
    m = len(tail)
    edge_of = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(tail, head))}

    nbr_edge = -np.ones_like(nbr)
    nbr_sign = np.zeros_like(nbr)
    for i in range(n):
        for s in range(2 * d):
            j = nbr[i, s]
            if j < 0:
                continue
            if s % 2 == 0:
                nbr_edge[i, s], nbr_sign[i, s] = edge_of[(i, int(j))], 1
            else:
                nbr_edge[i, s], nbr_sign[i, s] = edge_of[(int(j), i)], -1

    pv, pe, pp = [], [], []
    for i, c in enumerate(coords):
        for a in range(d):
            for b in range(a + 1, d):
                ja = nbr[i, 2 * a]
                jb = nbr[i, 2 * b]
                if ja < 0 or jb < 0:
                    continue
                jab = nbr[ja, 2 * b]
                if jab < 0:
                    continue
                pv.append((i, ja, jab, jb))
                pe.append((edge_of[(i, int(ja))], edge_of[(int(ja), int(jab))],
                           edge_of[(int(jb), int(jab))] + m, edge_of[(i, int(jb))] + m))
                pp.append((a, b))
    plaq_vertices = np.asarray(pv, dtype=np.int64).reshape(-1, 4)
    plaq_edges = np.asarray(pe, dtype=np.int64).reshape(-1, 4)
    plaq_planes = np.asarray(pp, dtype=np.int64).reshape(-1, 2)
    lo, hi = (None, None) if box is None else box
    return LatticeDomain(d=d, eps=float(eps), coords=coords, boundary=boundary,
                         tail=tail, head=head, axis=axis, nbr=nbr, nbr_edge=nbr_edge,
                         nbr_sign=nbr_sign, plaq_vertices=plaq_vertices,
                         plaq_edges=plaq_edges, plaq_planes=plaq_planes,
                         box_lo=lo, box_hi=hi, _index=index)


def build_rect_domain(d: int, eps: float, lo: Sequence[float], hi: Sequence[float]) -> LatticeDomain:
    """Lattice points of the box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``.

    >>> dom = build_rect_domain(2, 1.0, (0, 0), (2, 2))
    >>> dom.n_vertices, dom.n_edges, dom.n_plaquettes, int(dom.boundary.sum())
    (9, 12, 4, 8)
    """
    if d < 2:
        raise DomainError(f"dimension must be >= 2, got {d}")
    if eps <= 0:
        raise DomainError("lattice spacing must be positive")
    lo = tuple(float(v) for v in lo)
    hi = tuple(float(v) for v in hi)
    if len(lo) != d or len(hi) != d:
        raise DomainError("box corners must have d coordinates")
    if any(a >= b for a, b in zip(lo, hi)):
        raise DomainError(f"empty box: need lo < hi componentwise, got {lo}, {hi}")
    ranges = [_lattice_range(a, b, eps) for a, b in zip(lo, hi)]
    if any(len(r) == 0 for r in ranges):
        raise DomainError("box contains no lattice vertex at this spacing")
    grid = np.meshgrid(*ranges, indexing="ij")
    coords = np.stack([g.reshape(-1) for g in grid], axis=1).astype(np.int64)
    return _assemble(d, eps, coords, box=(lo, hi))


def build_domain(d: int, eps: float, contains: Callable[[np.ndarray], bool],
                 lo: Sequence[float], hi: Sequence[float]) -> LatticeDomain:
    """Lattice points inside ``[lo, hi]`` accepted by the membership predicate.

    Simple connectivity is not assumed for such domains; call
    :func:`check_simply_connected`.
    """
    if d < 2:
        raise DomainError(f"dimension must be >= 2, got {d}")
    full = build_rect_domain(d, eps, lo, hi)
    keep = np.array([bool(contains(p)) for p in full.positions])
    if not keep.any():
        raise DomainError("predicate selects no lattice vertex")
    return _assemble(d, eps, full.coords[keep])


def plaquette_matrix(dom: LatticeDomain) -> np.ndarray:
    """Dense (P, m) oriented incidence of plaquettes on canonical edges."""
    B = np.zeros((dom.n_plaquettes, dom.n_edges))
    for p, ids in enumerate(dom.plaq_edges):
        can, sgn = dom.split_directed(ids)
        np.add.at(B[p], can, sgn)
    return B


def check_simply_connected(dom: LatticeDomain) -> bool:
    """True iff every cycle of the edge graph is a sum of plaquette boundaries."""
    n, m = dom.n_vertices, dom.n_edges
    adj = coo_matrix((np.ones(m), (dom.tail, dom.head)), shape=(n, n))
    n_comp, _ = connected_components(adj, directed=False)
    cycle_rank = m - n + n_comp
    if cycle_rank == 0:
        return True
    if dom.n_plaquettes == 0:
        return False
    return int(np.linalg.matrix_rank(plaquette_matrix(dom))) == cycle_rank


def loop_edges(dom: LatticeDomain, vertex_cycle: Sequence[int]) -> np.ndarray:
    """Directed edge ids traced by a closed vertex sequence (first == last)."""
    cyc = [int(v) for v in vertex_cycle]
    if len(cyc) < 3 or cyc[0] != cyc[-1]:
        raise LoopError("vertex cycle must close (first vertex repeated at the end)")
    return np.array([dom.directed_edge(a, b) for a, b in zip(cyc[:-1], cyc[1:])],
                    dtype=np.int64)


def dirichlet_laplacian(dom: LatticeDomain) -> np.ndarray:
    """Graph Laplacian restricted to interior vertices (dense).

    Row ``k`` corresponds to ``dom.interior_indices[k]``.
    """
    inner = dom.interior_indices
    pos = -np.ones(dom.n_vertices, dtype=np.int64)
    pos[inner] = np.arange(len(inner))
    L = np.zeros((len(inner), len(inner)))
    for a, b in zip(dom.tail, dom.head):
        ia, ib = pos[a], pos[b]
        if ia >= 0:
            L[ia, ia] += 1.0
        if ib >= 0:
            L[ib, ib] += 1.0
        if ia >= 0 and ib >= 0:
            L[ia, ib] -= 1.0
            L[ib, ia] -= 1.0
    return L

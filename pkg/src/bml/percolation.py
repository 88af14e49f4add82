"""Oriented bond percolation on finite windows of Z^2 and on skew tori.

Every vertex has two outgoing edges, ``+e0`` and ``+e1``.  The skew torus
``T(r a, r b)`` identifies ``x`` and ``y`` whenever ``x - y`` lies in the
lattice spanned by ``r a`` and ``r b``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .lattice import ParameterError, RngSeed, as_seed


def ext_gcd(a: int, b: int) -> tuple[int, int, int]:
    """``(g, u, w)`` with ``g = u a + w b = gcd(a, b) >= 0``."""
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_s, s = s, old_s - q * s
        old_t, t = t, old_t - q * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


@dataclass(frozen=True)
class SkewTorusSpec:
    """Quotient of Z^2 by the lattice spanned by ``r a`` and ``r b``.

    The lattice is brought to the triangular basis ``(g, h), (0, c)`` with
    ``g, c > 0``; every coset then has a unique representative
    ``(x1, x2)`` with ``0 <= x1 < g`` and ``0 <= x2 < c``.
    """

    a: tuple[int, int]
    b: tuple[int, int]
    r: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", (int(self.a[0]), int(self.a[1])))
        object.__setattr__(self, "b", (int(self.b[0]), int(self.b[1])))
        if self.r < 1:
            raise ParameterError("scale r must be a positive integer")
        if self.a[0] * self.b[1] - self.a[1] * self.b[0] == 0:
            raise ParameterError(f"vectors {self.a} and {self.b} are linearly dependent")

    @property
    def basis(self) -> tuple[tuple[int, int], tuple[int, int]]:
        a1, a2 = self.r * self.a[0], self.r * self.a[1]
        b1, b2 = self.r * self.b[0], self.r * self.b[1]
        g, u, w = ext_gcd(a1, b1)
        det = abs(a1 * b2 - a2 * b1)
        c = det // g
        h = (u * a2 + w * b2) % c
        return (g, h), (0, c)

    @property
    def n_vertices(self) -> int:
        return abs(self.a[0] * self.b[1] - self.a[1] * self.b[0]) * self.r**2

    def reduce(self, x: Sequence[int]) -> tuple[int, int]:
        (g, h), (_, c) = self.basis
        t = int(x[0]) // g
        return int(x[0]) - t * g, (int(x[1]) - t * h) % c

    def canonicalize(self, x: Sequence[int]) -> int:
        """Vertex id of ``x``; equal ids exactly for lattice-equivalent points."""
        x1, x2 = self.reduce(x)
        return x1 * self.basis[1][1] + x2

    def vertex(self, vid: int) -> tuple[int, int]:
        c = self.basis[1][1]
        return divmod(int(vid), c)

    def vertices(self) -> np.ndarray:
        """Representatives of all vertices, in id order, shape ``(V, 2)``."""
        (g, _), (_, c) = self.basis
        x1, x2 = np.divmod(np.arange(g * c), c)
        return np.stack([x1, x2], axis=1)

    def neighbor_ids(self) -> np.ndarray:
        """``out[v, a]`` is the id of ``v + e_a``."""
        (g, h), (_, c) = self.basis
        reps = self.vertices()
        out = np.empty((len(reps), 2), dtype=np.int64)
        for a in range(2):
            x = reps.copy()
            x[:, a] += 1
            t = np.floor_divide(x[:, 0], g)
            x1 = x[:, 0] - t * g
            x2 = np.mod(x[:, 1] - t * h, c)
            out[:, a] = x1 * c + x2
        return out


def canonicalize(x: Sequence[int], spec: SkewTorusSpec) -> int:
    return spec.canonicalize(x)


def diag_ell(spec: SkewTorusSpec) -> int:
    """Smallest ``l > 0`` with ``(l, l)`` identified with the origin."""
    zero = spec.canonicalize((0, 0))
    for ell in range(1, spec.n_vertices + 1):
        if spec.canonicalize((ell, ell)) == zero:
            return ell
    raise AssertionError("the diagonal must close within the vertex count")


@dataclass(frozen=True)
class Window:
    """Rectangle ``[0, n0) x [0, n1)`` of Z^2 with oriented edges, no wrap."""

    n0: int
    n1: int

    @property
    def n_vertices(self) -> int:
        return self.n0 * self.n1

    def vid(self, x: Sequence[int]) -> int:
        if not (0 <= x[0] < self.n0 and 0 <= x[1] < self.n1):
            raise ParameterError(f"{tuple(x)} lies outside the window")
        return int(x[0]) * self.n1 + int(x[1])

    def vertex(self, vid: int) -> tuple[int, int]:
        return divmod(int(vid), self.n1)

    def neighbor_ids(self) -> np.ndarray:
        """Ids of ``v + e_a``, or ``-1`` where the edge leaves the window."""
        x1, x2 = np.divmod(np.arange(self.n_vertices), self.n1)
        out = np.empty((self.n_vertices, 2), dtype=np.int64)
        out[:, 0] = np.where(x1 + 1 < self.n0, (x1 + 1) * self.n1 + x2, -1)
        out[:, 1] = np.where(x2 + 1 < self.n1, x1 * self.n1 + x2 + 1, -1)
        return out


Graph = Union[Window, SkewTorusSpec]


@dataclass
class OrientedBondConfig:
    """Open/closed states of the two outgoing edges of every vertex."""

    graph: Graph
    q: float
    open: np.ndarray
    heads: np.ndarray

    def vid(self, x: Sequence[int]) -> int:
        if isinstance(self.graph, Window):
            return self.graph.vid(x)
        return self.graph.canonicalize(x)

    def vertex(self, vid: int) -> tuple[int, int]:
        return self.graph.vertex(vid)

    def digraph(self) -> sparse.csr_matrix:
        mask = self.open & (self.heads >= 0)
        src = np.repeat(np.arange(len(self.heads)), 2).reshape(-1, 2)[mask]
        dst = self.heads[mask]
        n = len(self.heads)
        # Duplicate (src, dst) pairs are harmless for reachability.
        return sparse.csr_matrix((np.ones(src.size, dtype=np.int8), (src, dst)), shape=(n, n))

    def open_fraction(self) -> float:
        valid = self.heads >= 0
        return float(self.open[valid].mean())


def sample_bonds(graph: Graph, q: float, seed: int | RngSeed = 0) -> OrientedBondConfig:
    """Open each edge independently with probability ``q``.

    Edges are opened by thresholding one uniform each, so configurations
    sampled from the same seed are monotonically coupled in ``q``.
    """
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"q must lie in [0, 1], got {q}")
    heads = graph.neighbor_ids()
    u = as_seed(seed).generator().random(heads.shape)
    is_open = (u < q) & (heads >= 0)
    return OrientedBondConfig(graph, q, is_open, heads)


def reach(config: OrientedBondConfig, x: Sequence[int], y: Sequence[int]) -> bool:
    """True iff an open oriented path leads from ``x`` to ``y``."""
    s, t = config.vid(x), config.vid(y)
    if s == t:
        return True
    order = csgraph.breadth_first_order(config.digraph(), s, directed=True, return_predecessors=False)
    return bool(np.isin(t, order))


def reach_path(config: OrientedBondConfig, x: Sequence[int], y: Sequence[int]) -> Optional[list[tuple[int, int]]]:
    """Representatives of the vertices of a shortest open path, or None."""
    s, t = config.vid(x), config.vid(y)
    if s == t:
        return [config.vertex(s)]
    _, pred = csgraph.breadth_first_order(config.digraph(), s, directed=True, return_predecessors=True)
    if pred[t] < 0:
        return None
    out = [t]
    while out[-1] != s:
        out.append(int(pred[out[-1]]))
    return [config.vertex(v) for v in out[::-1]]


@dataclass
class CycleCertificate:
    vertices: list[tuple[int, int]]
    ids: list[int]

    def to_json(self) -> dict:
        return {"vertices": [list(v) for v in self.vertices], "ids": self.ids}


def has_oriented_cycle(config: OrientedBondConfig) -> tuple[bool, Optional[CycleCertificate]]:
    """Detect an open oriented cycle through strongly connected components.

    The certificate lists the cycle's vertex ids in order; the last vertex
    has an open edge back to the first.
    """
    n = len(config.heads)
    mask = config.open & (config.heads >= 0)
    src = np.repeat(np.arange(n), 2).reshape(-1, 2)[mask]
    dst = config.heads[mask]
    loops = np.flatnonzero(src == dst)
    if loops.size:
        v = int(src[loops[0]])
        return True, CycleCertificate([config.vertex(v)], [v])
    g = config.digraph()
    _, labels = csgraph.connected_components(g, directed=True, connection="strong")
    internal = np.flatnonzero(labels[src] == labels[dst])
    if internal.size == 0:
        return False, None
    u, v = int(src[internal[0]]), int(dst[internal[0]])
    _, pred = csgraph.breadth_first_order(g, v, directed=True, return_predecessors=True)
    back = [u]
    while back[-1] != v:
        back.append(int(pred[back[-1]]))
    ids = [u] + back[::-1][:-1]
    return True, CycleCertificate([config.vertex(i) for i in ids], ids)


@dataclass
class CycleEstimate:
    spec: SkewTorusSpec
    q: float
    trials: int
    successes: int

    @property
    def estimate(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        p = self.estimate
        return float(np.sqrt(p * (1 - p) / self.trials))


def estimate_cycle_prob(spec: SkewTorusSpec, q: float, trials: int, seed: int | RngSeed = 0) -> CycleEstimate:
    root = as_seed(seed)
    wins = 0
    for t in range(trials):
        cfg = sample_bonds(spec, q, RngSeed(root.seed, root.stream * 1_000_003 + t + 1))
        wins += has_oriented_cycle(cfg)[0]
    return CycleEstimate(spec, q, trials, wins)


def write_cycle_csv(rows: Sequence[CycleEstimate], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["q", "r", "trials", "successes"])
        for e in rows:
            w.writerow([e.q, e.spec.r, e.trials, e.successes])
    return path


@dataclass
class ThetaEstimate:
    q: float
    n: int
    trials: int
    hits: int

    @property
    def estimate(self) -> float:
        return self.hits / self.trials

    @property
    def stderr(self) -> float:
        p = self.estimate
        return float(np.sqrt(p * (1 - p) / self.trials))


def estimate_theta(q: float, n: Union[int, Sequence[int]], trials: int, seed: int | RngSeed = 0):
    """Probability that the origin reaches the line ``z1 + z2 = n``.

    Edges leaving diagonal ``s`` in trial ``t`` are drawn from their own
    stream ``(seed, t, s)``, so the configuration seen at a smaller ``n`` is
    a prefix of the one at a larger ``n``; a sequence of ``n`` is evaluated
    on that shared configuration.  Returns one estimate, or a list for a
    sequence.
    """
    if not 0.0 <= q <= 1.0:
        raise ParameterError(f"q must lie in [0, 1], got {q}")
    ns = [int(n)] if np.isscalar(n) else [int(v) for v in n]
    if min(ns) < 0:
        raise ParameterError("n must be nonnegative")
    top = max(ns)
    root = as_seed(seed)
    hits = np.zeros(len(ns), dtype=np.int64)
    for t in range(trials):
        alive = np.ones(1, dtype=bool)  # vertices (x, s - x), x = 0..s
        depth = 0
        for s in range(top):
            if not alive.any():
                break
            u = root.generator(t, s).random((s + 1, 2))
            step = u < q
            nxt = np.zeros(s + 2, dtype=bool)
            nxt[1:] |= alive & step[:, 0]
            nxt[:-1] |= alive & step[:, 1]
            alive = nxt
            if alive.any():
                depth = s + 1
        hits += np.array([depth >= v for v in ns])
    out = [ThetaEstimate(q, v, trials, int(h)) for v, h in zip(ns, hits)]
    return out[0] if np.isscalar(n) else out

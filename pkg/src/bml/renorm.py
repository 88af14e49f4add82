"""Renormalized lattice of anti-diagonal segments and good-edge estimation.

Renormalized site ``u`` is the segment of ``2k + 1`` sites
``u1 (10M, 9M) + u2 (9M, 10M) + (s, -s)``, ``|s| <= k``.  An edge ``(u, v)``
with ``v - u`` a unit vector is good when every site of ``V_u`` has a
blocking path to some site of ``V_v``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .blocking import BlockingPath, greedy_construct, successors
from .lattice import InitialLaw, ParameterError, RngSeed, TorusGrid, as_seed, sample_cells

Coord = tuple[int, int]


@dataclass(frozen=True)
class RenormParams:
    M: int
    k: int

    def __post_init__(self) -> None:
        if not self.M > 2 * self.k > 0:
            raise ParameterError(f"need M > 2k > 0, got M={self.M}, k={self.k}")


@dataclass(frozen=True)
class Box:
    """Inclusive axis-aligned box of sites."""

    lo: Coord
    hi: Coord

    @property
    def shape(self) -> tuple[int, int]:
        return (self.hi[0] - self.lo[0] + 1, self.hi[1] - self.lo[1] + 1)

    def contains(self, z: Sequence[int]) -> bool:
        return all(l <= c <= h for c, l, h in zip(z, self.lo, self.hi))

    def disjoint(self, other: "Box") -> bool:
        return any(self.hi[a] < other.lo[a] or other.hi[a] < self.lo[a] for a in range(2))


def check_edge(edge) -> tuple[Coord, Coord]:
    u, v = (tuple(int(c) for c in edge[0]), tuple(int(c) for c in edge[1]))
    if (v[0] - u[0], v[1] - u[1]) not in ((1, 0), (0, 1)):
        raise ParameterError(f"edge {edge} is not a unit step in a positive direction")
    return u, v


def center(u: Sequence[int], M: int) -> Coord:
    return (u[0] * 10 * M + u[1] * 9 * M, u[0] * 9 * M + u[1] * 10 * M)


def renorm_site_coords(u: Sequence[int], params: RenormParams) -> list[Coord]:
    """The ``2k + 1`` sites of ``V_u``, ordered by increasing first coordinate."""
    cx, cy = center(u, params.M)
    return [(cx + s, cy - s) for s in range(-params.k, params.k + 1)]


def validate_params(M: int, k: int) -> tuple[bool, list[str]]:
    """Check ``M > 2k > 0`` and ``(10M + k) / (9M - k) <= 9/8``.

    Returns the verdict and the list of failed conditions.
    """
    problems = []
    if not M > 2 * k:
        problems.append(f"M={M} is not greater than 2k={2 * k}")
    if not k > 0:
        problems.append(f"k={k} is not positive")
    if 9 * M - k <= 0 or 8 * (10 * M + k) > 9 * (9 * M - k):
        problems.append(f"slope bound (10M+k)/(9M-k) = {(10 * M + k) / max(9 * M - k, 1):.4f} exceeds 9/8")
    return not problems, problems


def dependency_box(edge, params: RenormParams) -> Box:
    """Bounding box of ``V_u`` and ``V_v`` grown by one site on every side.

    Blocking paths from ``V_u`` to ``V_v`` are monotone and stay inside the
    bounding box; steps of type (iii)/(iv) read one site beyond it.
    """
    u, v = check_edge(edge)
    pts = renorm_site_coords(u, params) + renorm_site_coords(v, params)
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return Box((min(xs) - 1, min(ys) - 1), (max(xs) + 1, max(ys) + 1))


def edge_distance(e1, e2) -> int:
    """Graph distance between two renormalized edges (closest endpoints)."""
    return min(abs(a[0] - b[0]) + abs(a[1] - b[1]) for a in e1 for b in e2)


def _check_cover(grid: TorusGrid, box: Box) -> None:
    if grid.d != 2:
        raise ParameterError("good edges are defined in two dimensions")
    w, h = box.shape
    if grid.dims[0] < w or grid.dims[1] < h:
        raise ParameterError(f"grid {grid.dims} is smaller than the dependency box {box.shape}")


def coreachable(grid: TorusGrid, box: Box, targets: Sequence[Coord]) -> np.ndarray:
    """Boolean array over ``box``: sites with a blocking path into ``targets``."""
    mask = np.zeros(box.shape, dtype=np.bool_)
    for t in targets:
        if box.contains(t):
            mask[t[0] - box.lo[0], t[1] - box.lo[1]] = True
    return _kernels.coreach_box(grid.cells, box.lo[0], box.lo[1], mask)


def _witness(grid: TorusGrid, box: Box, R: np.ndarray, x: Coord, goal: set) -> BlockingPath:
    sites, kinds = [x], []
    z = x
    while z not in goal:
        for nz, kind in successors(grid, z):
            if box.contains(nz) and R[nz[0] - box.lo[0], nz[1] - box.lo[1]]:
                sites.append(nz)
                kinds.append(kind)
                z = nz
                break
    return BlockingPath(sites, kinds)


@dataclass
class EdgeVerdict:
    good: bool
    reached: list[bool]
    witnesses: Optional[list[Optional[BlockingPath]]] = None

    def __bool__(self) -> bool:
        return self.good


def is_good_edge(grid: TorusGrid, edge, params: RenormParams, *, mode: str = "full", witnesses: bool = False) -> EdgeVerdict:
    """Decide whether ``edge`` is good, searching only its dependency box.

    ``mode="endpoints"`` checks only the two end sites of ``V_u``; in two
    dimensions at ``p = 1`` blocking paths cannot cross without meeting, so
    it agrees with the full check there.
    """
    u, v = check_edge(edge)
    box = dependency_box(edge, params)
    _check_cover(grid, box)
    targets = renorm_site_coords(v, params)
    R = coreachable(grid, box, targets)
    sources = renorm_site_coords(u, params)
    if mode == "endpoints":
        sources = [sources[0], sources[-1]]
    elif mode != "full":
        raise ParameterError(f"unknown mode {mode!r}")
    reached = [bool(R[x[0] - box.lo[0], x[1] - box.lo[1]]) and grid[x] != 0 for x in sources]
    paths = None
    if witnesses:
        goal = set(targets)
        paths = [_witness(grid, box, R, x, goal) if ok else None for x, ok in zip(sources, reached)]
    return EdgeVerdict(all(reached), reached, paths)


@dataclass
class GoodEdgeSample:
    edge: tuple[Coord, Coord]
    p: float
    M: int
    k: int
    trials: int
    successes: int
    witnesses: list = field(default_factory=list, repr=False)

    @property
    def phat(self) -> float:
        return self.successes / self.trials

    @property
    def stderr(self) -> float:
        q = self.phat
        return float(np.sqrt(q * (1 - q) / self.trials))

    def row(self) -> list:
        return [self.p, self.M, self.k, self.trials, self.successes, self.phat, self.stderr]


CSV_HEADER = ["p", "M", "k", "trials", "successes", "phat", "stderr"]


def write_estimates_csv(samples: Sequence[GoodEdgeSample], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        w.writerows(s.row() for s in samples)
    return path


def estimate_good_prob(
    p: float,
    params: RenormParams,
    trials: int,
    seed: int | RngSeed = 0,
    *,
    edge=((0, 0), (1, 0)),
    mode: str = "full",
    theta: float = 0.5,
) -> GoodEdgeSample:
    """Fraction of fresh configurations on the dependency box making ``edge`` good.

    Trial ``t`` samples its box from stream ``(seed, t)``, so estimates at
    different ``p`` with the same seed are coupled.
    """
    if trials < 1:
        raise ParameterError("trials must be positive")
    law = InitialLaw(p, theta)
    edge = check_edge(edge)
    box = dependency_box(edge, params)
    root = as_seed(seed)
    wins = 0
    for t in range(trials):
        # A torus of exactly the box shape maps the box onto itself bijectively.
        grid = TorusGrid(sample_cells(root.generator(t), box.shape, law))
        wins += bool(is_good_edge(grid, edge, params, mode=mode))
    return GoodEdgeSample(edge, p, params.M, params.k, trials, wins)


# Target hitting at p = 1 ------------------------------------------------------


def in_cone(y: Sequence[int], lo: float = 8 / 9, hi: float = 9 / 8) -> bool:
    return y[0] > 0 and y[1] > 0 and lo <= y[0] / y[1] <= hi


@dataclass
class TargetHitEstimate:
    y: Coord
    k: int
    trials: int
    hits: int
    in_cone: bool
    method: str
    miss: list[int] = field(default_factory=list, repr=False)

    @property
    def estimate(self) -> float:
        return self.hits / self.trials

    @property
    def stderr(self) -> float:
        q = self.estimate
        return float(np.sqrt(q * (1 - q) / self.trials))


def estimate_target_hit(y: Sequence[int], k: int, trials: int, seed: int | RngSeed = 0, *, method: str = "search") -> TargetHitEstimate:
    """Estimate the chance that a blocking path from the origin lands within
    ``k`` anti-diagonal steps of ``y`` on a fully occupied grid.

    ``method="search"`` asks whether any blocking path does so;
    ``method="greedy"`` follows the greedy constructor and also records its
    miss distance ``|offset gap| / 2`` on the target line.  Targets outside
    the cone ``y1 / y2 in [8/9, 9/8]`` are flagged through ``in_cone``.
    """
    y = (int(y[0]), int(y[1]))
    if y[0] < 0 or y[1] < 0:
        raise ParameterError("target must lie in the positive quadrant")
    if method not in ("search", "greedy"):
        raise ParameterError(f"unknown method {method!r}")
    law = InitialLaw(1.0)
    line = y[0] + y[1]
    root = as_seed(seed)
    segment = [(y[0] + s, y[1] - s) for s in range(-k, k + 1)]
    box = Box((0, 0), (line, line))
    hits = 0
    miss = []
    for t in range(trials):
        # Two spare rows and columns keep wrapped licensing reads off the box.
        grid = TorusGrid(sample_cells(root.generator(t), (line + 3, line + 3), law))
        if method == "search":
            R = coreachable(grid, box, segment)
            hits += bool(R[0, 0])
        else:
            path, _ = greedy_construct(grid, y)
            gap = abs((path.end[0] - path.end[1]) - (y[0] - y[1])) // 2
            miss.append(gap)
            hits += gap <= k
    return TargetHitEstimate(y, k, trials, hits, in_cone(y), method, miss)

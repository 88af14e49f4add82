"""Blocking paths: the step relation, validation, search and construction.

A blocking path is a site sequence in which every car can move only after
the car at the next site has moved.  In two dimensions the admissible steps
from a car at ``z`` are

* ``i``   East car, next site ``z + (1, 0)``;
* ``ii``  North car, next site ``z + (0, 1)``;
* ``iii`` ``z`` and ``z + (1, 0)`` East, ``z + (1, -1)`` North, next ``z + (1, 1)``;
* ``iv``  ``z`` and ``z + (0, 1)`` North, ``z + (-1, 1)`` East, next ``z + (1, 1)``.

Sites are kept in unwrapped integer coordinates; grid lookups wrap.  In
``d > 2`` the steps are ``Df`` (straight ahead) and ``Dc<c>`` (refill of the
vacancy ahead by the car facing along axis ``c``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .lattice import EMPTY, ParameterError, RngSeed, Site, TorusGrid, as_seed

E, N = int(Site.EAST), int(Site.NORTH)

OFFSETS_2D = {"i": (1, 0), "ii": (0, 1), "iii": (1, 1), "iv": (1, 1)}
# Steps that advance the first and second coordinate respectively.
HORIZONTAL = frozenset({"i", "iii", "iv"})
VERTICAL = frozenset({"ii", "iii", "iv"})

Coord = tuple[int, ...]


class PreconditionError(ValueError):
    """Raised when an operation is applied at an empty site."""


class ConstructionError(RuntimeError):
    """The greedy constructor met an empty site.

    ``path`` and ``trace`` hold everything built up to that point.
    """

    def __init__(self, message: str, path: "BlockingPath", trace: "WTrace"):
        super().__init__(message)
        self.path = path
        self.trace = trace


def _add(z: Sequence[int], dz: Sequence[int]) -> Coord:
    return tuple(int(a) + int(b) for a, b in zip(z, dz))


def _unit(d: int, axis: int, sign: int = 1) -> Coord:
    return tuple(sign if k == axis else 0 for k in range(d))


class CoinField:
    """Lazily sampled fair coins, one per branch location.

    A location's coin is drawn on first query and fixed afterwards.
    """

    def __init__(self, seed: int | RngSeed = 0, *, constant: Optional[bool] = None):
        self._rng = as_seed(seed).generator() if constant is None else None
        self._constant = constant
        self._coins: dict[Coord, bool] = {}

    @classmethod
    def constant(cls, value: bool) -> "CoinField":
        return cls(constant=value)

    def __call__(self, site: Sequence[int]) -> bool:
        key = tuple(int(c) for c in site)
        if key not in self._coins:
            self._coins[key] = self._constant if self._rng is None else bool(self._rng.random() < 0.5)
        return self._coins[key]

    def __len__(self) -> int:
        return len(self._coins)


def successors(grid: TorusGrid, z: Sequence[int], coins: Optional[Callable[[Sequence[int]], bool]] = None) -> list[tuple[Coord, str]]:
    """Licensed next sites of a two-dimensional blocking path at ``z``.

    With ``coins`` given, a diagonal branch is offered only when the coin at
    ``z`` shows True.
    """
    if grid.d != 2:
        return ddim_successors(grid, z)
    z = (int(z[0]), int(z[1]))
    s = grid[z]
    if s == EMPTY:
        raise PreconditionError(f"site {z} is empty")
    x, y = z
    if s == E:
        out = [((x + 1, y), "i")]
        if grid[x + 1, y] == E and grid[x + 1, y - 1] == N and (coins is None or coins(z)):
            out.append(((x + 1, y + 1), "iii"))
    else:
        out = [((x, y + 1), "ii")]
        if grid[x, y + 1] == N and grid[x - 1, y + 1] == E and (coins is None or coins(z)):
            out.append(((x + 1, y + 1), "iv"))
    return out


def ddim_successors(grid: TorusGrid, z: Sequence[int]) -> list[tuple[Coord, str]]:
    """Blocking steps in ``d`` dimensions.

    The car at ``z`` faces axis ``a``.  ``Df`` goes to ``z + e_a``.  If the
    site ahead holds a car facing ``b``, the vacancy it leaves is contested
    by the car at ``z`` and the cars at ``z + e_a - e_c`` facing ``c``.  Every
    such contender whose axis comes before ``a`` in the schedule
    ``b + 1, b + 2, ... (mod d)`` passes through ``z + e_a`` before the car at
    ``z`` can, so the path may continue to ``z + e_a + e_c`` (kind ``Dc<c>``).
    """
    d = grid.d
    z = tuple(int(c) for c in z)
    s = grid[z]
    if s == EMPTY:
        raise PreconditionError(f"site {z} is empty")
    a = s - 1
    front = _add(z, _unit(d, a))
    out = [(front, "Df")]
    blocker = grid[front]
    if blocker == EMPTY:
        return out
    b = blocker - 1
    for r in range(1, d + 1):
        c = (b + r) % d
        if c == a:
            break
        if grid[_add(front, _unit(d, c, -1))] == c + 1:
            out.append((_add(front, _unit(d, c)), f"Dc{c}"))
    return out


def _label(kind: str) -> tuple[str, Optional[int]]:
    if kind.startswith("Dc"):
        return "Dc", int(kind[2:])
    return kind, None


@dataclass
class BlockingPath:
    """Sites ``z^0, z^1, ...`` with one step kind per step.

    For a cyclic path ``kinds`` has one entry per site and the last step
    leads from ``sites[-1]`` back to ``sites[0]`` modulo the torus.
    """

    sites: list[Coord]
    kinds: list[str] = field(default_factory=list)
    cyclic: bool = False

    def __post_init__(self) -> None:
        self.sites = [tuple(int(c) for c in z) for z in self.sites]
        expected = len(self.sites) if self.cyclic else len(self.sites) - 1
        if len(self.kinds) != max(expected, 0):
            raise ParameterError(f"{len(self.kinds)} kinds for {len(self.sites)} sites (cyclic={self.cyclic})")

    def __len__(self) -> int:
        return len(self.kinds)

    @property
    def end(self) -> Coord:
        return self.sites[-1]

    def steps(self) -> Iterable[tuple[Coord, Coord, str]]:
        for m, kind in enumerate(self.kinds):
            nxt = self.sites[m + 1] if m + 1 < len(self.sites) else None
            yield self.sites[m], nxt, kind

    def concat(self, other: "BlockingPath") -> "BlockingPath":
        if self.cyclic or other.cyclic:
            raise ParameterError("cannot concatenate cyclic paths")
        if self.end != other.sites[0]:
            raise ParameterError(f"paths do not meet: {self.end} != {other.sites[0]}")
        return BlockingPath(self.sites + other.sites[1:], self.kinds + other.kinds)

    def is_mixed(self) -> bool:
        """Uses at least one horizontally and one vertically advancing step."""
        kinds = set(self.kinds)
        return bool(kinds & HORIZONTAL) and bool(kinds & VERTICAL)

    def to_json(self) -> dict:
        labels = [_label(k) for k in self.kinds]
        return {
            "sites": [list(z) for z in self.sites],
            "kinds": [lab for lab, _ in labels],
            "axes": [ax for _, ax in labels],
            "cyclic": self.cyclic,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BlockingPath":
        axes = data.get("axes") or [None] * len(data["kinds"])
        kinds = [f"Dc{ax}" if lab == "Dc" else lab for lab, ax in zip(data["kinds"], axes)]
        return cls([tuple(z) for z in data["sites"]], kinds, bool(data.get("cyclic", False)))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json()))
        return path


def _licensed(grid: TorusGrid, z: Coord, nxt: Coord, kind: str) -> bool:
    if grid[z] == EMPTY:
        return False
    if grid.d == 2 and not kind.startswith("D"):
        return (nxt, kind) in successors(grid, z)
    return (nxt, kind) in ddim_successors(grid, z)


def validate_path(grid: TorusGrid, path: BlockingPath) -> bool:
    """True iff every step of ``path`` is licensed by ``grid``.

    A cyclic path must also close up on the torus and be mixed.
    """
    for m in range(len(path.sites) - 1):
        if not _licensed(grid, path.sites[m], path.sites[m + 1], path.kinds[m]):
            return False
    if not path.cyclic:
        return True
    last = path.sites[-1]
    for nxt, kind in (successors(grid, last) if grid[last] != EMPTY else []):
        if kind == path.kinds[-1] and grid.wrap(nxt) == grid.wrap(path.sites[0]):
            return path.is_mixed()
    return False


def _in_box(z: Coord, box: Optional[tuple[Coord, Coord]]) -> bool:
    if box is None:
        return True
    lo, hi = box
    return all(l <= c <= h for c, l, h in zip(z, lo, hi))


def reachable(
    grid: TorusGrid,
    start: Sequence[int],
    targets: Iterable[Sequence[int]],
    region: Optional[tuple[Sequence[int], Sequence[int]]] = None,
    coins: Optional[Callable[[Sequence[int]], bool]] = None,
) -> Optional[BlockingPath]:
    """Shortest blocking path from ``start`` to any target inside ``region``.

    ``region`` is an inclusive box ``(lo, hi)`` in unwrapped coordinates;
    without it the search covers one period of the torus ahead of
    ``start``.  Only car sites are expanded; a target is accepted whether or
    not it holds a car.  Ties are broken by smallest site, layer by layer.
    """
    start = tuple(int(c) for c in start)
    if region is None:
        region = (start, tuple(s + n - 1 for s, n in zip(start, grid.dims)))
    box = (tuple(int(c) for c in region[0]), tuple(int(c) for c in region[1]))
    goal = {grid.wrap(t) for t in targets}
    if grid[start] == EMPTY or not _in_box(start, box):
        return None
    parent: dict[Coord, tuple[Coord, str]] = {}
    seen = {start}
    layer = [start]
    while layer:
        hits = [z for z in layer if grid.wrap(z) in goal]
        if hits:
            return _trace_back(min(hits), parent)
        nxt_layer: list[Coord] = []
        for z in layer:
            if grid[z] == EMPTY:
                continue
            for nz, kind in sorted(successors(grid, z, coins)):
                if nz not in seen and _in_box(nz, box):
                    seen.add(nz)
                    parent[nz] = (z, kind)
                    nxt_layer.append(nz)
        layer = sorted(nxt_layer)
    return None


def random_walk_path(grid: TorusGrid, start: Sequence[int], max_steps: int, rng: np.random.Generator) -> BlockingPath:
    """Follow uniformly chosen licensed steps from ``start``.

    Stops after ``max_steps`` steps or before a step into an empty site, so
    every site of the result holds a car.
    """
    z = tuple(int(c) for c in start)
    if grid[z] == EMPTY:
        raise PreconditionError(f"site {z} is empty")
    sites, kinds = [z], []
    for _ in range(max_steps):
        options = successors(grid, z)
        nz, kind = options[int(rng.integers(len(options)))]
        if grid[nz] == EMPTY:
            break
        sites.append(nz)
        kinds.append(kind)
        z = nz
    return BlockingPath(sites, kinds)


def _trace_back(z: Coord, parent: dict[Coord, tuple[Coord, str]]) -> BlockingPath:
    sites, kinds = [z], []
    while z in parent:
        z, kind = parent[z]
        sites.append(z)
        kinds.append(kind)
    return BlockingPath(sites[::-1], kinds[::-1])


# Successor digraph on the torus ---------------------------------------------

_KIND_CODE = {"i": 1, "ii": 2, "iii": 3, "iv": 4}
_CODE_KIND = {v: k for k, v in _KIND_CODE.items()}


def successor_digraph(grid: TorusGrid) -> sparse.csr_matrix:
    """Blocking steps between car sites as a sparse digraph on flat indices.

    Entry ``(u, v)`` holds the kind code (1..4) of the step ``u -> v``.
    """
    if grid.d != 2:
        raise ParameterError("the successor digraph is built for d = 2")
    c = grid.cells
    idx = np.arange(c.size).reshape(c.shape)

    def at(dx: int, dy: int) -> np.ndarray:
        # at(dx, dy)[z] == c[z + (dx, dy)]
        return np.roll(c, (-dx, -dy), axis=(0, 1))

    def target(dx: int, dy: int) -> np.ndarray:
        return np.roll(idx, (-dx, -dy), axis=(0, 1))

    rows, cols, kinds = [], [], []
    masks = [
        (c == E, (1, 0), 1),
        (c == N, (0, 1), 2),
        ((c == E) & (at(1, 0) == E) & (at(1, -1) == N), (1, 1), 3),
        ((c == N) & (at(0, 1) == N) & (at(-1, 1) == E), (1, 1), 4),
    ]
    for mask, (dx, dy), code in masks:
        mask = mask & (at(dx, dy) != EMPTY)
        rows.append(idx[mask])
        cols.append(target(dx, dy)[mask])
        kinds.append(np.full(int(mask.sum()), code, dtype=np.int8))
    r = np.concatenate(rows)
    col = np.concatenate(cols)
    k = np.concatenate(kinds)
    # On tiny tori two kinds can share an endpoint pair; keep the first.
    _, keep = np.unique(r * c.size + col, return_index=True)
    return sparse.csr_matrix((k[keep], (r[keep], col[keep])), shape=(c.size, c.size))


def _edge_kind(g: sparse.csr_matrix, u: int, v: int) -> str:
    lo, hi = g.indptr[u], g.indptr[u + 1]
    row = g.indices[lo:hi]
    return _CODE_KIND[int(g.data[lo + int(np.flatnonzero(row == v)[0])])]


def _cycle_through(g: sparse.csr_matrix, u: int, v: int) -> list[int]:
    """Vertex cycle ``u, v, ..., u`` via a shortest return path ``v -> u``."""
    if u == v:
        return [u]
    order, pred = csgraph.breadth_first_order(g, v, directed=True, return_predecessors=True)
    back = [u]
    while back[-1] != v:
        back.append(int(pred[back[-1]]))
    return [u] + back[::-1][:-1]


def find_cyclic(grid: TorusGrid) -> Optional[BlockingPath]:
    """A cyclic blocking path that advances both horizontally and vertically.

    Works through the strongly connected components of the successor
    digraph.  A component holding a diagonal step yields a mixed cycle
    through that step.  Otherwise a cycle through a vertical step and one
    through a horizontal step are tried: both cannot be pure, since a pure
    horizontal cycle is a full row of East cars and a pure vertical one a
    full column of North cars, and those would share a site.
    """
    g = successor_digraph(grid)
    if g.nnz == 0:
        return None
    _, labels = csgraph.connected_components(g, directed=True, connection="strong")
    coo = g.tocoo()
    internal = labels[coo.row] == labels[coo.col]
    if not internal.any():
        return None
    er, ec, ek = coo.row[internal], coo.col[internal], coo.data[internal]
    order = np.lexsort((ec, er, labels[er]))
    er, ec, ek = er[order], ec[order], ek[order]
    comp = labels[er]
    for lab in np.unique(comp):
        sel = comp == lab
        r, cc, k = er[sel], ec[sel], ek[sel]
        tries = []
        diag = np.flatnonzero(k >= 3)
        if diag.size:
            tries.append(diag[0])
        else:
            for code in (2, 1):
                hit = np.flatnonzero(k == code)
                if hit.size:
                    tries.append(hit[0])
        for e in tries:
            verts = _cycle_through(g, int(r[e]), int(cc[e]))
            path = _lift_cycle(grid, g, verts)
            if path.is_mixed():
                return path
    return None


def _lift_cycle(grid: TorusGrid, g: sparse.csr_matrix, verts: list[int]) -> BlockingPath:
    z = tuple(int(c) for c in np.unravel_index(verts[0], grid.dims))
    sites, kinds = [z], []
    for m, u in enumerate(verts):
        v = verts[(m + 1) % len(verts)]
        kind = _edge_kind(g, u, v)
        kinds.append(kind)
        if m + 1 < len(verts):
            z = _add(z, OFFSETS_2D[kind])
            sites.append(z)
    return BlockingPath(sites, kinds, cyclic=True)


# Greedy target-seeking construction (p = 1) ---------------------------------


@dataclass
class WTrace:
    """Half the distance between the path's offset and the target's offset.

    ``values[n]`` is ``|(z1 - z2) - (y1 - y2)| / 2`` at ``sites[n]``, the
    path site on diagonal line ``lines[n]``.
    """

    target: Coord
    values: list[int] = field(default_factory=list)
    lines: list[int] = field(default_factory=list)
    sites: list[Coord] = field(default_factory=list)

    def record(self, z: Coord) -> None:
        gap = (z[0] - z[1]) - (self.target[0] - self.target[1])
        self.values.append(abs(gap) // 2)
        self.lines.append(z[0] + z[1])
        self.sites.append(z)

    def increments(self) -> np.ndarray:
        return np.diff(np.asarray(self.values, dtype=np.int64))


def w_from_path(path: BlockingPath, target: Sequence[int]) -> WTrace:
    """Recompute the W-trace from path sites on lines of the target's parity."""
    trace = WTrace(tuple(int(c) for c in target))
    parity = (trace.target[0] + trace.target[1]) % 2
    for z in path.sites:
        if (z[0] + z[1]) % 2 == parity:
            trace.record(z)
    return trace


def greedy_construct(
    grid: TorusGrid,
    y: Sequence[int],
    mode: str = "alternate",
    start: Sequence[int] = (0, 0),
) -> tuple[BlockingPath, WTrace]:
    """Build a blocking path from ``start`` aimed at ``y`` on a full grid.

    ``alternate`` extends the path line pair by line pair, choosing a type
    (iii)/(iv) step only when it does not move the path's offset
    ``z1 - z2`` away from ``y1 - y2``.  For odd ``y1 + y2`` it aims at
    ``y - (1, 0)`` and adds one forward step at the end.  ``all`` applies the
    same choice at every single step.  The path stops on the line
    ``y1 + y2``.  Raises :class:`ConstructionError` at an empty site.
    """
    if grid.d != 2:
        raise ParameterError("greedy_construct is two-dimensional")
    if mode not in ("alternate", "all"):
        raise ParameterError(f"unknown choice mode {mode!r}")
    y = (int(y[0]), int(y[1]))
    z = (int(start[0]), int(start[1]))
    sites, kinds = [z], []

    def fail(msg: str):
        return ConstructionError(msg, BlockingPath(list(sites), list(kinds)), trace)

    def push(site: Coord, kind: str) -> None:
        sites.append(site)
        kinds.append(kind)

    if mode == "all":
        trace = WTrace(y)
        line = y[0] + y[1]
        if (z[0] + z[1]) % 2 == line % 2:
            trace.record(z)
        while z[0] + z[1] < line:
            s = grid[z]
            x0, y0 = z
            gap = (x0 - y0) - (y[0] - y[1])
            last = z[0] + z[1] == line - 1
            if s == E:
                diag = grid[x0 + 1, y0] == E and grid[x0 + 1, y0 - 1] == N
                if diag and gap >= 0 and not last:
                    push((x0 + 1, y0 + 1), "iii")
                else:
                    push((x0 + 1, y0), "i")
            elif s == N:
                diag = grid[x0, y0 + 1] == N and grid[x0 - 1, y0 + 1] == E
                if diag and gap <= 0 and not last:
                    push((x0 + 1, y0 + 1), "iv")
                else:
                    push((x0, y0 + 1), "ii")
            else:
                raise fail(f"empty site at {z}")
            z = sites[-1]
            if (z[0] + z[1]) % 2 == line % 2:
                trace.record(z)
        return BlockingPath(sites, kinds), trace

    aim = y if (y[0] + y[1]) % 2 == 0 else (y[0] - 1, y[1])
    trace = WTrace(aim)
    trace.record(z)
    line = aim[0] + aim[1]
    while z[0] + z[1] < line:
        x0, y0 = z
        s = grid[z]
        gap = (x0 - y0) - (aim[0] - aim[1])
        if s == E:
            ahead, below = grid[x0 + 1, y0], grid[x0 + 1, y0 - 1]
            if ahead == N:
                push((x0 + 1, y0), "i")
                push((x0 + 1, y0 + 1), "ii")
            elif ahead == E and below in (E, N):
                if below == N and gap >= 0:
                    push((x0 + 1, y0 + 1), "iii")
                else:
                    push((x0 + 1, y0), "i")
                    push((x0 + 2, y0), "i")
            else:
                raise fail(f"empty site next to {z}")
        elif s == N:
            ahead, left = grid[x0, y0 + 1], grid[x0 - 1, y0 + 1]
            if ahead == E:
                push((x0, y0 + 1), "ii")
                push((x0 + 1, y0 + 1), "i")
            elif ahead == N and left in (E, N):
                if left == E and gap <= 0:
                    push((x0 + 1, y0 + 1), "iv")
                else:
                    push((x0, y0 + 1), "ii")
                    push((x0, y0 + 2), "ii")
            else:
                raise fail(f"empty site next to {z}")
        else:
            raise fail(f"empty site at {z}")
        z = sites[-1]
        trace.record(z)
    if aim != y:
        s = grid[z]
        if s == E:
            push((z[0] + 1, z[1]), "i")
        elif s == N:
            push((z[0], z[1] + 1), "ii")
        else:
            raise fail(f"empty site at {z}")
    return BlockingPath(sites, kinds), trace

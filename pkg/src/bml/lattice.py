"""Site states, toroidal grids and the random initial configuration.

Cells are stored as a dense ``int8`` array indexed by site coordinates
``(z_0, z_1, ...)``.  Code ``0`` is an empty site and code ``a + 1`` is a car
facing along axis ``a``.  In two dimensions axis 0 is East and axis 1 is
North, so ``cells[x, y]`` holds the state of site ``(x, y)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EMPTY = 0


class Site(IntEnum):
    """Two-dimensional site codes."""

    EMPTY = 0
    EAST = 1
    NORTH = 2


class ParameterError(ValueError):
    """Raised when a model parameter is out of its admissible range."""


def car(axis: int) -> int:
    """Cell code of a car facing along ``axis``."""
    return axis + 1


def axis_of(code: int) -> int:
    """Axis of a car code; ``-1`` for an empty site."""
    return int(code) - 1


@dataclass(frozen=True)
class RngSeed:
    """A (seed, stream) pair naming one reproducible random stream.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys and
    drive a counter-based Philox generator, so ``RngSeed(s, i)`` and
    ``RngSeed(s, j)`` are independent for ``i != j`` and every trial of a
    sweep can be regenerated on its own.
    """

    seed: int
    stream: int = 0

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed & (2**64 - 1), spawn_key=(self.stream, *key))
        return np.random.Generator(np.random.Philox(ss))

    def child(self, index: int) -> "RngSeed":
        # Child streams are spaced so that (seed, stream) pairs never collide with
        # direct integer streams used by callers.
        return RngSeed(self.seed, (self.stream + 1) * 1_000_003 + index)


def as_seed(seed: int | RngSeed) -> RngSeed:
    return seed if isinstance(seed, RngSeed) else RngSeed(int(seed))


@dataclass(frozen=True)
class InitialLaw:
    """Product law of the initial configuration.

    For ``d == 2`` a site is East with probability ``theta * p``, North with
    probability ``(1 - theta) * p`` and empty otherwise.  For ``d > 2`` every
    direction has probability ``p / d`` and ``theta`` is ignored.
    """

    p: float
    theta: float = 0.5
    d: int = 2

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ParameterError(f"p must lie in [0, 1], got {self.p}")
        if not 0.0 < self.theta < 1.0:
            raise ParameterError(f"theta must lie in (0, 1), got {self.theta}")
        if self.d < 2:
            raise ParameterError(f"dimension must be at least 2, got {self.d}")

    def probabilities(self) -> np.ndarray:
        """Probabilities of codes ``0, 1, ..., d``."""
        if self.d == 2:
            dirs = [self.theta * self.p, (1.0 - self.theta) * self.p]
        else:
            dirs = [self.p / self.d] * self.d
        return np.array([1.0 - self.p, *dirs])


@dataclass
class TorusGrid:
    """A configuration on a d-dimensional torus with wrap-around indexing."""

    cells: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim < 2:
            raise ParameterError("a torus grid needs at least two dimensions")
        if self.cells.min(initial=0) < 0 or self.cells.max(initial=0) > self.cells.ndim:
            raise ParameterError("cell codes must lie in [0, d]")

    @classmethod
    def empty(cls, dims: Sequence[int]) -> "TorusGrid":
        _check_dims(dims)
        return cls(np.zeros(tuple(dims), dtype=np.int8))

    @classmethod
    def from_sites(cls, dims: Sequence[int], sites: dict) -> "TorusGrid":
        """Build a grid from ``{site: code}``; unspecified sites are empty."""
        grid = cls.empty(dims)
        for z, code in sites.items():
            grid[z] = code
        return grid

    @property
    def dims(self) -> tuple[int, ...]:
        return self.cells.shape

    @property
    def d(self) -> int:
        return self.cells.ndim

    @property
    def size(self) -> int:
        return self.cells.size

    def wrap(self, z: Iterable[int]) -> tuple[int, ...]:
        return tuple(int(c) % n for c, n in zip(z, self.dims))

    def __getitem__(self, z) -> int:
        return int(self.cells[self.wrap(z)])

    def __setitem__(self, z, code: int) -> None:
        self.cells[self.wrap(z)] = code

    def copy(self) -> "TorusGrid":
        return TorusGrid(self.cells.copy(), dict(self.meta))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TorusGrid):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self.cells, other.cells))

    def occupied(self) -> np.ndarray:
        return self.cells != EMPTY

    def n_cars(self) -> int:
        return int(np.count_nonzero(self.cells))


def _check_dims(dims: Sequence[int]) -> None:
    if len(dims) < 2 or any(int(n) < 1 for n in dims):
        raise ParameterError(f"dims must be at least two positive integers, got {tuple(dims)}")


def sample_initial(dims: Sequence[int], law: InitialLaw, seed: int | RngSeed = 0) -> TorusGrid:
    """Sample an initial configuration, independently site by site."""
    _check_dims(dims)
    if len(dims) != law.d:
        raise ParameterError(f"law is for d={law.d} but dims has {len(dims)} entries")
    rng = as_seed(seed).generator()
    return TorusGrid(sample_cells(rng, tuple(int(n) for n in dims), law))


def sample_cells(rng: np.random.Generator, shape: tuple[int, ...], law: InitialLaw) -> np.ndarray:
    """Threshold one uniform per site against the cumulative law."""
    u = rng.random(shape)
    cuts = np.cumsum(law.probabilities()[1:])
    # above[z] counts cumulative cuts exceeding u[z]: d for the first
    # direction, down to 0 for an empty site.
    above = np.zeros(shape, dtype=np.int8)
    for c in cuts:
        above += u < c
    return np.where(above > 0, law.d + 1 - above, 0).astype(np.int8)


def car_census(grid: TorusGrid) -> dict[str, int]:
    """Count empty sites and cars per direction.

    Keys are ``"empty"`` and, in two dimensions, ``"E"`` and ``"N"``; for
    ``d > 2`` the car keys are the axis numbers as strings.
    """
    counts = np.bincount(grid.cells.ravel(), minlength=grid.d + 1)
    names = ["E", "N"] if grid.d == 2 else [str(a) for a in range(grid.d)]
    out = {"empty": int(counts[0])}
    out.update({name: int(c) for name, c in zip(names, counts[1:])})
    return out


# Snapshot file format: "BML d n_0 n_1 ...\n" followed by one byte per site
# in C order over the cell array.
def _symbol_table(d: int) -> np.ndarray:
    table = np.zeros(d + 1, dtype=np.uint8)
    table[0] = ord(".")
    if d == 2:
        table[1], table[2] = ord("E"), ord("N")
    else:
        if d > 10:
            raise ParameterError("snapshot format supports at most 10 directions")
        for a in range(d):
            table[a + 1] = ord(str(a))
    return table


def dumps_snapshot(grid: TorusGrid) -> bytes:
    header = "BML {} {}\n".format(grid.d, " ".join(str(n) for n in grid.dims)).encode()
    return header + _symbol_table(grid.d)[grid.cells.ravel()].tobytes()


def loads_snapshot(data: bytes) -> TorusGrid:
    head, sep, body = data.partition(b"\n")
    parts = head.decode("ascii").split()
    if not sep or len(parts) < 3 or parts[0] != "BML":
        raise ParameterError("not a BML snapshot")
    d = int(parts[1])
    dims = tuple(int(n) for n in parts[2:])
    if len(dims) != d:
        raise ParameterError(f"header declares d={d} but lists {len(dims)} extents")
    if len(body) != int(np.prod(dims)):
        raise ParameterError(f"expected {int(np.prod(dims))} site bytes, got {len(body)}")
    table = _symbol_table(d)
    lookup = np.full(256, -1, dtype=np.int16)
    lookup[table] = np.arange(d + 1)
    codes = lookup[np.frombuffer(body, dtype=np.uint8)]
    if (codes < 0).any():
        raise ParameterError("snapshot contains an unknown site symbol")
    return TorusGrid(codes.astype(np.int8).reshape(dims))


def save_snapshot(grid: TorusGrid, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(dumps_snapshot(grid))
    return path


def load_snapshot(path: str | Path) -> TorusGrid:
    return loads_snapshot(Path(path).read_bytes())

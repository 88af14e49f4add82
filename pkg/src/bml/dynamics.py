"""Time evolution: alternating sub-steps, the d-dimensional schedule and
Poisson clocks, plus mobility statistics.

Sub-steps are numbered ``t = 1, 2, ...`` and at sub-step ``t`` the cars
facing along axis ``t % d`` advance.  In two dimensions that is North on odd
sub-steps and East on even ones.

Cars receive ids ``0 .. n_cars - 1`` in C order of their initial sites.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import _kernels
from .lattice import ParameterError, RngSeed, TorusGrid, as_seed

ENGINES = ("deterministic", "ddim", "poisson")


def _shift(mask: np.ndarray, axis: int) -> np.ndarray:
    """``out[z] = mask[z - e_axis]`` on the torus, built by concatenation."""
    last = np.take(mask, [-1], axis=axis)
    rest = np.take(mask, np.arange(mask.shape[axis] - 1), axis=axis)
    return np.concatenate([last, rest], axis=axis)


def step_deterministic(grid: TorusGrid, t: int) -> int:
    """Apply sub-step ``t`` of the two-dimensional dynamics in place.

    Odd ``t`` moves North cars, even ``t`` moves East cars.  Eligibility is
    read from the configuration before the sub-step.  Returns the number of
    cars that moved.
    """
    if grid.d != 2:
        raise ParameterError("step_deterministic needs a two-dimensional grid")
    cells = grid.cells
    if t % 2 == 1:
        code, axis = 2, 1
    else:
        code, axis = 1, 0
    vacant = cells == 0
    # vacant_ahead[z] is True when z + e_axis is empty.
    vacant_ahead = np.roll(vacant, -1, axis=axis)
    movers = (cells == code) & vacant_ahead
    n = int(movers.sum())
    if n:
        cells[movers] = 0
        cells[_shift(movers, axis)] = code
    return n


def step_ddim(grid: TorusGrid, t: int) -> int:
    """Apply sub-step ``t`` of the d-dimensional schedule in place."""
    cells = grid.cells
    a = t % grid.d
    code = a + 1
    movers = (cells == code) & (np.roll(cells, -1, axis=a) == 0)
    n = int(np.count_nonzero(movers))
    if n:
        cells[movers] = 0
        cells[np.roll(movers, 1, axis=a)] = code
    return n


def is_frozen(grid: TorusGrid) -> bool:
    """True iff no car has a vacant site directly ahead of it."""
    cells = grid.cells
    for a in range(grid.d):
        if np.any((cells == a + 1) & (np.roll(cells, -1, axis=a) == 0)):
            return False
    return True


def movable_count(grid: TorusGrid) -> int:
    cells = grid.cells
    return int(sum(np.count_nonzero((cells == a + 1) & (np.roll(cells, -1, axis=a) == 0)) for a in range(grid.d)))


@dataclass
class SimStats:
    """Mobility record of a deterministic run.

    ``first_move`` is indexed by car id and holds the sub-step of the car's
    first move, or ``inf`` if it never moved within the run.
    """

    dims: tuple[int, ...]
    engine: str
    initial_sites: np.ndarray
    moves_per_substep: np.ndarray
    per_car_move_counts: np.ndarray
    first_move: np.ndarray
    frozen_at: Optional[int]
    final: TorusGrid = field(repr=False)
    t0: int = 0

    @property
    def n_cars(self) -> int:
        return int(self.initial_sites.size)

    @property
    def substeps(self) -> int:
        """Number of sub-steps actually simulated."""
        return int(self.moves_per_substep.size)

    @property
    def d(self) -> int:
        return len(self.dims)

    def car_id_at(self, z) -> int:
        """Id of the car initially at site ``z``; ``-1`` for an empty site."""
        flat = int(np.ravel_multi_index(tuple(int(c) % n for c, n in zip(z, self.dims)), self.dims))
        k = int(np.searchsorted(self.initial_sites, flat))
        if k < self.initial_sites.size and self.initial_sites[k] == flat:
            return k
        return -1

    def first_move_time(self, z) -> float:
        """Sub-step of the first move of the car initially at ``z``."""
        k = self.car_id_at(z)
        if k < 0:
            raise KeyError(f"no car initially at {tuple(z)}")
        return float(self.first_move[k])

    def first_move_map(self) -> dict[tuple[int, ...], float]:
        coords = np.unravel_index(self.initial_sites, self.dims)
        return {tuple(int(c[i]) for c in coords): float(self.first_move[i]) for i in range(self.n_cars)}

    def cumulative_moves(self) -> np.ndarray:
        return np.cumsum(self.moves_per_substep)

    def moves_in(self, start: int, end: int) -> int:
        """Moves during sub-steps ``start < t <= end`` (zero after freezing)."""
        lo = max(start - self.t0, 0)
        hi = end - self.t0
        if hi > self.substeps and self.frozen_at is None:
            raise ParameterError(f"window end {end} lies beyond the {self.substeps} recorded sub-steps")
        return int(self.moves_per_substep[lo:hi].sum())

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["substep", "moves", "cumulative_moves"])
            cum = 0
            for i, m in enumerate(self.moves_per_substep.tolist()):
                cum += m
                w.writerow([self.t0 + i + 1, m, cum])
        return path

    def metadata(self, **extra) -> dict:
        meta = {
            "dims": list(self.dims),
            "d": self.d,
            "engine": self.engine,
            "frozen_at": self.frozen_at,
            "substeps": self.substeps,
            "n_cars": self.n_cars,
        }
        meta.update(extra)
        return meta

    def write_json(self, path: str | Path, **extra) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.metadata(**extra), indent=2, sort_keys=True))
        return path


def _car_arrays(grid: TorusGrid) -> tuple[np.ndarray, np.ndarray]:
    flat = grid.cells.ravel()
    sites = np.flatnonzero(flat).astype(np.int64)
    return sites, (flat[sites].astype(np.int64) - 1)


def run(grid: TorusGrid, max_substeps: int, engine: str = "deterministic", *, fast: bool = True, t0: int = 0) -> SimStats:
    """Run a deterministic engine on a copy of ``grid``.

    The run halts early once ``d`` consecutive sub-steps are silent, in which
    case ``frozen_at`` is the last of those sub-steps.  ``fast=False`` runs
    the pure numpy sub-step functions instead of the compiled loop; both
    give identical statistics.
    """
    if max_substeps < 1:
        raise ParameterError("max_substeps must be at least 1")
    if engine == "poisson":
        raise ParameterError("use run_poisson for the Poisson engine")
    if engine not in ENGINES:
        raise ParameterError(f"unknown engine {engine!r}")
    if engine == "deterministic" and grid.d != 2:
        raise ParameterError("the deterministic engine is two-dimensional; use 'ddim'")

    work = grid.copy()
    sites, axes = _car_arrays(work)
    n = sites.size
    moves = np.zeros(max_substeps, dtype=np.int64)
    counts = np.zeros(n, dtype=np.int64)
    first = np.full(n, -1, dtype=np.int64)

    if fast:
        ahead, _ = _kernels.neighbor_tables(work.dims)
        flat = work.cells.reshape(-1)
        pos = sites.copy()
        done, frozen = _kernels.deterministic_run(flat, pos, axes, ahead, work.d, t0, max_substeps, moves, counts, first)
    else:
        done, frozen = _run_numpy(work, engine, t0, max_substeps, moves, counts, first)

    first_f = first.astype(float)
    first_f[first < 0] = np.inf
    return SimStats(
        dims=work.dims,
        engine=engine,
        initial_sites=sites,
        moves_per_substep=moves[:done],
        per_car_move_counts=counts,
        first_move=first_f,
        frozen_at=None if frozen < 0 else int(frozen),
        final=work,
        t0=t0,
    )


def _run_numpy(work, engine, t0, max_substeps, moves, counts, first):
    step = step_deterministic if engine == "deterministic" else step_ddim
    ids = np.full(work.dims, -1, dtype=np.int64)
    ids[work.cells != 0] = np.arange(int(np.count_nonzero(work.cells)))
    silent = 0
    for s in range(max_substeps):
        t = t0 + s + 1
        a = t % work.d
        before = work.cells.copy()
        moves[s] = step(work, t)
        movers = (before == a + 1) & (work.cells == 0)
        moved_ids = ids[movers]
        counts[moved_ids] += 1
        fresh = moved_ids[first[moved_ids] < 0]
        first[fresh] = t
        ids = np.where(np.roll(movers, 1, axis=a), np.roll(ids, 1, axis=a), np.where(movers, -1, ids))
        if moves[s] == 0:
            silent += 1
            if silent >= work.d:
                return s + 1, t
        else:
            silent = 0
    return max_substeps, -1


def speed(stats: SimStats, window: tuple[int, int]) -> float:
    """Moves per car per sub-step over sub-steps ``start < t <= end``.

    The free-flowing ceiling is ``1 / d``.
    """
    start, end = window
    if end <= start:
        raise ParameterError("empty speed window")
    if stats.n_cars == 0:
        raise ParameterError("speed is undefined without cars")
    return stats.moves_in(start, end) / (stats.n_cars * (end - start))


# Poisson clocks ------------------------------------------------------------


@dataclass
class PoissonEvent:
    tau: float
    car: int
    site: tuple[int, ...]
    moved: bool


@dataclass
class PoissonClock:
    """State of the Poisson engine: continuous time plus car positions."""

    grid: TorusGrid
    pos: np.ndarray
    car_axis: np.ndarray
    tau: float = 0.0
    events: int = 0
    moves: int = 0

    @classmethod
    def start(cls, grid: TorusGrid) -> "PoissonClock":
        """Attach a clock to ``grid``; the grid is updated in place."""
        sites, axes = _car_arrays(grid)
        return cls(grid, sites, axes)

    @property
    def n_cars(self) -> int:
        return int(self.pos.size)


def step_poisson(clock: PoissonClock, rng: np.random.Generator) -> Optional[PoissonEvent]:
    """One attempt of the superposed unit-rate clocks.

    The waiting time is exponential with rate equal to the car count and the
    attempting car is uniform among all cars; blocked attempts are recorded
    as no-ops.  Returns ``None`` when there are no cars.
    """
    n = clock.n_cars
    if n == 0:
        return None
    u = rng.random(2)
    clock.tau += -math.log1p(-u[0]) / n
    j = min(int(u[1] * n), n - 1)
    cells = clock.grid.cells
    dims = clock.grid.dims
    a = int(clock.car_axis[j])
    src = np.unravel_index(int(clock.pos[j]), dims)
    dst = list(src)
    dst[a] = (dst[a] + 1) % dims[a]
    dst = tuple(dst)
    moved = cells[dst] == 0
    if moved:
        cells[src] = 0
        cells[dst] = a + 1
        clock.pos[j] = np.ravel_multi_index(dst, dims)
        clock.moves += 1
    clock.events += 1
    return PoissonEvent(clock.tau, j, tuple(int(c) for c in src), bool(moved))


@dataclass
class PoissonStats:
    dims: tuple[int, ...]
    initial_sites: np.ndarray
    events: int
    moves: int
    tau: float
    frozen: bool
    per_car_move_counts: np.ndarray
    first_move: np.ndarray
    final: TorusGrid = field(repr=False)

    @property
    def n_cars(self) -> int:
        return int(self.initial_sites.size)


def run_poisson(grid: TorusGrid, max_events: int, seed: int | RngSeed = 0, *, chunk: int = 1 << 16) -> PoissonStats:
    """Run the Poisson engine on a copy of ``grid`` until frozen or ``max_events``.

    Consumes the random stream exactly like repeated :func:`step_poisson`
    calls, so the two produce the same trajectory.
    """
    rng = as_seed(seed).generator()
    work = grid.copy()
    clock = PoissonClock.start(work)
    n = clock.n_cars
    counts = np.zeros(n, dtype=np.int64)
    first = np.full(n, -1.0)
    ahead, behind = _kernels.neighbor_tables(work.dims)
    flat = work.cells.reshape(-1)
    movable = int(_kernels.count_movable(flat, clock.pos, clock.car_axis, ahead)) if n else 0
    tau = 0.0
    events = moves = 0
    while n and movable and events < max_events:
        m = min(chunk, max_events - events)
        u = rng.random((m, 2))
        used, moved, tau, movable = _kernels.poisson_run(flat, clock.pos, clock.car_axis, ahead, behind, u, tau, counts, first, movable)
        events += used
        moves += moved
    first[first < 0] = np.inf
    sites, _ = _car_arrays(grid)
    return PoissonStats(
        dims=work.dims,
        initial_sites=sites,
        events=events,
        moves=moves,
        tau=tau,
        frozen=movable == 0,
        per_car_move_counts=counts,
        first_move=first,
        final=work,
    )

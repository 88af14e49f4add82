"""Compiled inner loops.

Every kernel works on flattened C-order cell arrays.  ``ahead[a, i]`` is the
flat index of site ``i + e_a`` and ``behind[a, i]`` that of ``i - e_a``, both
with torus wrap-around.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def neighbor_tables(dims: tuple[int, ...]) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(int(np.prod(dims)), dtype=np.int64).reshape(dims)
    d = len(dims)
    ahead = np.empty((d, idx.size), dtype=np.int64)
    behind = np.empty((d, idx.size), dtype=np.int64)
    for a in range(d):
        ahead[a] = np.roll(idx, -1, axis=a).ravel()
        behind[a] = np.roll(idx, 1, axis=a).ravel()
    return ahead, behind


@njit(cache=True)
def deterministic_run(cells, pos, car_axis, ahead, d, t0, max_substeps, moves, counts, first):
    """Advance ``max_substeps`` sub-steps after sub-step ``t0``.

    Returns ``(completed, frozen_at)`` with ``frozen_at == -1`` when the run
    did not go silent for ``d`` consecutive sub-steps.
    """
    n_cars = pos.shape[0]
    # Group car ids by axis once; membership never changes.
    group_start = np.zeros(d + 1, dtype=np.int64)
    for j in range(n_cars):
        group_start[car_axis[j] + 1] += 1
    for a in range(d):
        group_start[a + 1] += group_start[a]
    fill = group_start[:d].copy()
    order = np.empty(n_cars, dtype=np.int64)
    for j in range(n_cars):
        a = car_axis[j]
        order[fill[a]] = j
        fill[a] += 1

    buf = np.empty(n_cars, dtype=np.int64)
    silent = 0
    for step in range(max_substeps):
        t = t0 + step + 1
        a = t % d
        code = a + 1
        nm = 0
        for g in range(group_start[a], group_start[a + 1]):
            j = order[g]
            if cells[ahead[a, pos[j]]] == 0:
                buf[nm] = j
                nm += 1
        # Distinct movers never share a target, so sequential writes match
        # the simultaneous update.
        for m in range(nm):
            j = buf[m]
            src = pos[j]
            dst = ahead[a, src]
            cells[src] = 0
            cells[dst] = code
            pos[j] = dst
            counts[j] += 1
            if first[j] < 0:
                first[j] = t
        moves[step] = nm
        if nm == 0:
            silent += 1
            if silent >= d:
                return step + 1, t
        else:
            silent = 0
    return max_substeps, -1


@njit(cache=True)
def count_movable(cells, pos, car_axis, ahead):
    n = 0
    for j in range(pos.shape[0]):
        if cells[ahead[car_axis[j], pos[j]]] == 0:
            n += 1
    return n


@njit(cache=True)
def poisson_run(cells, pos, car_axis, ahead, behind, uniforms, tau, counts, first, movable):
    """Consume uniform pairs until the batch ends or no car can move.

    ``uniforms[e, 0]`` drives the exponential waiting time and
    ``uniforms[e, 1]`` the uniformly chosen car.  ``movable`` holds the
    number of cars with a vacant forward site and is kept exact.  Returns
    ``(events_used, successful_moves, tau, movable)``.
    """
    n_cars = pos.shape[0]
    d = ahead.shape[0]
    moved = 0
    n_ev = uniforms.shape[0]
    for e in range(n_ev):
        if movable == 0:
            return e, moved, tau, movable
        tau += -np.log1p(-uniforms[e, 0]) / n_cars
        j = int(uniforms[e, 1] * n_cars)
        if j >= n_cars:
            j = n_cars - 1
        a = car_axis[j]
        src = pos[j]
        dst = ahead[a, src]
        if cells[dst] != 0:
            continue
        # Cars pointing into dst (other than j) lose their vacancy.
        for c in range(d):
            b = behind[c, dst]
            if b != src and cells[b] == c + 1:
                movable -= 1
        cells[src] = 0
        cells[dst] = a + 1
        pos[j] = dst
        moved += 1
        counts[j] += 1
        if first[j] < 0:
            first[j] = tau
        # j was movable; it stays movable only if the next site is free.
        if cells[ahead[a, dst]] != 0:
            movable -= 1
        # Cars pointing into src gain a vacancy.
        for c in range(d):
            b = behind[c, src]
            if b != dst and cells[b] == c + 1:
                movable += 1
    return n_ev, moved, tau, movable


@njit(cache=True)
def coreach_box(cells, x0, y0, target):
    """Sites of a box that have a blocking path to a target inside the box.

    ``cells`` is the full two-dimensional grid; box cell ``(i, j)`` is site
    ``(x0 + i, y0 + j)`` looked up modulo the grid.  Paths are confined to
    the box; licensing reads may fall one site outside it.  Every step raises
    ``i`` or keeps ``i`` and raises ``j``, so one reverse sweep suffices.
    """
    m, n = cells.shape
    w, h = target.shape
    R = np.zeros((w, h), dtype=np.bool_)
    for i in range(w - 1, -1, -1):
        x = (x0 + i) % m
        xe = (x + 1) % m
        xw = (x - 1) % m
        for j in range(h - 1, -1, -1):
            if target[i, j]:
                R[i, j] = True
                continue
            y = (y0 + j) % n
            s = cells[x, y]
            if s == 0:
                continue
            diag = i + 1 < w and j + 1 < h and R[i + 1, j + 1]
            if s == 1:
                if i + 1 < w and R[i + 1, j]:
                    R[i, j] = True
                elif diag and cells[xe, y] == 1 and cells[xe, (y - 1) % n] == 2:
                    R[i, j] = True
            elif s == 2:
                yn = (y + 1) % n
                if j + 1 < h and R[i, j + 1]:
                    R[i, j] = True
                elif diag and cells[x, yn] == 2 and cells[xw, yn] == 1:
                    R[i, j] = True
    return R

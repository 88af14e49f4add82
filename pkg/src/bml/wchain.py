"""The reflected random walk followed by the greedy constructor's offset.

From a state ``j >= 1`` the walk steps down with probability 1/4, stays with
probability 5/8 and steps up with probability 1/8; from 0 it stays with
probability 3/4 and steps up with probability 1/4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import ParameterError, RngSeed, as_seed

DOWN, STAY, UP = 1 / 4, 5 / 8, 1 / 8
STAY0, UP0 = 3 / 4, 1 / 4


def advance(w: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One transition of every walk in ``w`` driven by uniforms ``u``."""
    at0 = w == 0
    step = np.where(u < DOWN, -1, np.where(u < DOWN + STAY, 0, 1))
    step0 = (u >= STAY0).astype(w.dtype)
    return w + np.where(at0, step0, step)


def wchain_simulate(n_steps: int, w0: int = 0, seed: int | RngSeed = 0) -> np.ndarray:
    """Trajectory ``W_0 .. W_N`` of the abstract chain."""
    if n_steps < 0 or w0 < 0:
        raise ParameterError("n_steps and w0 must be nonnegative")
    u = as_seed(seed).generator().random(n_steps)
    out = np.empty(n_steps + 1, dtype=np.int64)
    out[0] = w = w0
    for n in range(n_steps):
        if w == 0:
            w += u[n] >= STAY0
        elif u[n] < DOWN:
            w -= 1
        elif u[n] >= DOWN + STAY:
            w += 1
        out[n + 1] = w
    return out


def wchain_stationary(n_terms: int = 64) -> np.ndarray:
    """First ``n_terms`` entries of the stationary law.

    Balance across each edge gives ``pi_1 = pi_0`` and
    ``pi_{j+1} = pi_j / 2`` for ``j >= 1``, so ``pi_0 = pi_1 = 1/3``.
    """
    pi = np.empty(n_terms)
    pi[0] = 1 / 3
    if n_terms > 1:
        pi[1:] = (1 / 3) * 0.5 ** np.arange(n_terms - 1)
    return pi


def transition_matrix(size: int) -> np.ndarray:
    """Transition matrix truncated to states ``0 .. size - 1``.

    The last row keeps its upward mass on the diagonal; callers choose
    ``size`` beyond any reachable state so the truncation is never felt.
    """
    P = np.zeros((size, size))
    P[0, 0], P[0, min(1, size - 1)] = STAY0, UP0
    for j in range(1, size):
        P[j, j - 1] += DOWN
        P[j, j] += STAY
        P[j, min(j + 1, size - 1)] += UP
    return P


def exact_tail(n_steps: int, r: int, k: int) -> float:
    """``P(W_N > k | W_0 = r)`` by matrix powering."""
    size = r + n_steps + 2
    dist = np.zeros(size)
    dist[r] = 1.0
    P = transition_matrix(size)
    for _ in range(n_steps):
        dist = dist @ P
    return float(dist[k + 1:].sum()) if k + 1 < size else 0.0


def empirical_transitions(values: np.ndarray, max_state: int | None = None) -> np.ndarray:
    """Row-normalised counts of ``j -> j'`` transitions in a trajectory."""
    values = np.asarray(values, dtype=np.int64)
    top = int(values.max()) + 1 if max_state is None else max_state + 1
    counts = np.zeros((top, top))
    src, dst = values[:-1], values[1:]
    keep = (src < top) & (dst < top)
    np.add.at(counts, (src[keep], dst[keep]), 1)
    rows = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, counts / rows, 0.0)


def increment_frequencies(values: np.ndarray) -> dict[str, np.ndarray]:
    """Frequencies of steps (-1, 0, +1) from states >= 1 and (0, +1) from 0.

    Also returns the sample counts behind each row.
    """
    values = np.asarray(values, dtype=np.int64)
    src, inc = values[:-1], np.diff(values)
    pos = inc[src >= 1]
    zero = inc[src == 0]
    return {
        "positive": np.array([np.mean(pos == -1), np.mean(pos == 0), np.mean(pos == 1)]) if pos.size else np.full(3, np.nan),
        "zero": np.array([np.mean(zero == 0), np.mean(zero == 1)]) if zero.size else np.full(2, np.nan),
        "n_positive": np.array(pos.size),
        "n_zero": np.array(zero.size),
    }


@dataclass
class TailEstimate:
    n_steps: int
    r: int
    k: int
    trials: int
    hits: int

    @property
    def estimate(self) -> float:
        return self.hits / self.trials

    @property
    def stderr(self) -> float:
        p = self.estimate
        return float(np.sqrt(p * (1 - p) / self.trials))


def tail_estimate(n_steps: int, r: int, k: int, trials: int, seed: int | RngSeed = 0, *, batch: int = 200_000) -> TailEstimate:
    """Monte Carlo estimate of ``P(W_N > k | W_0 = r)`` for ``N > 9r``."""
    if n_steps <= 9 * r:
        raise ParameterError(f"need N > 9r, got N={n_steps}, r={r}")
    # Increments are at most 1, so W_N <= r + N < 2N.
    if k > 2 * n_steps:
        return TailEstimate(n_steps, r, k, trials, 0)
    return tail_curve(n_steps, r, [k], trials, seed, batch=batch)[0]


def tail_curve(n_steps: int, r: int, ks, trials: int, seed: int | RngSeed = 0, *, batch: int = 200_000) -> list[TailEstimate]:
    """Tail estimates at several ``k`` from one shared set of walks."""
    if n_steps <= 9 * r:
        raise ParameterError(f"need N > 9r, got N={n_steps}, r={r}")
    if trials < 1:
        raise ParameterError("trials must be positive")
    ks = [int(k) for k in ks]
    rng = as_seed(seed).generator()
    hits = np.zeros(len(ks), dtype=np.int64)
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        w = np.full(m, r, dtype=np.int64)
        for _ in range(n_steps):
            w = advance(w, rng.random(m))
        hits += np.array([np.count_nonzero(w > k) for k in ks])
        done += m
    return [TailEstimate(n_steps, r, k, trials, int(h)) for k, h in zip(ks, hits)]

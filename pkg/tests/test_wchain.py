import numpy as np
import pytest

from bml.lattice import ParameterError
from bml.wchain import (
    empirical_transitions,
    exact_tail,
    increment_frequencies,
    tail_curve,
    tail_estimate,
    transition_matrix,
    wchain_simulate,
    wchain_stationary,
)


def test_stationary_law_solves_balance():
    pi = wchain_stationary(60)
    assert pi[:5] == pytest.approx([1 / 3, 1 / 3, 1 / 6, 1 / 12, 1 / 24])
    P = transition_matrix(60)
    assert np.abs(pi @ P - pi)[:-1].max() < 1e-12
    assert pi.sum() == pytest.approx(1.0, abs=1e-15)


def test_transition_matrix_rows():
    P = transition_matrix(10)
    assert P.sum(axis=1) == pytest.approx(np.ones(10))
    assert P[0, 0] == 0.75 and P[0, 1] == 0.25
    assert (P[3, 2], P[3, 3], P[3, 4]) == (0.25, 0.625, 0.125)


def test_trajectory_increments_bounded():
    w = wchain_simulate(100_000, 3, 1)
    assert w[0] == 3
    assert (w >= 0).all()
    assert np.abs(np.diff(w)).max() <= 1


def test_stay_at_zero_frequency():
    w = wchain_simulate(400_000, 0, 2)
    f = increment_frequencies(w)
    n0 = int(f["n_zero"])
    assert abs(f["zero"][0] - 0.75) <= 4 * np.sqrt(0.75 * 0.25 / n0)
    npos = int(f["n_positive"])
    for got, want in zip(f["positive"], (0.25, 0.625, 0.125)):
        assert abs(got - want) <= 4 * np.sqrt(want * (1 - want) / npos)


def test_long_run_law():
    w = wchain_simulate(1_000_000, 0, 3)
    occ = np.bincount(w) / w.size
    pi = wchain_stationary(occ.size)
    tv = 0.5 * (np.abs(occ - pi).sum() + 1 - pi.sum())
    assert tv <= 0.02


def test_empirical_transitions_match():
    w = wchain_simulate(1_000_000, 0, 4)
    emp = empirical_transitions(w, 4)
    exact = transition_matrix(6)[:5, :5]
    assert np.abs(emp[:4] - exact[:4]).max() <= 0.01


def test_tail_zero_beyond_reach():
    est = tail_estimate(200, 0, 401, 1000, 0)
    assert est.estimate == 0.0 and est.hits == 0
    assert exact_tail(200, 0, 401) == 0.0


def test_tail_near_stationary():
    est = tail_estimate(200, 0, 0, 100_000, 1)
    assert abs(est.estimate - exact_tail(200, 0, 0)) <= 4 * est.stderr
    assert exact_tail(200, 0, 0) == pytest.approx(2 / 3, abs=1e-3)


def test_tail_curve_against_matrix_power():
    ests = tail_curve(200, 0, [2, 5, 8], 200_000, 5)
    for e in ests:
        exact = exact_tail(200, 0, e.k)
        assert abs(e.estimate - exact) <= 4 * np.sqrt(exact * (1 - exact) / e.trials)
    assert ests[0].estimate > ests[1].estimate > ests[2].estimate


def test_tail_requires_long_horizon():
    with pytest.raises(ParameterError):
        tail_estimate(18, 2, 3, 10)
    with pytest.raises(ParameterError):
        wchain_simulate(10, -1)

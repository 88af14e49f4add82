import itertools

import numpy as np
import pytest

from bml.blocking import reachable, validate_path
from bml.lattice import InitialLaw, ParameterError, Site, TorusGrid, sample_initial
from bml.renorm import (
    Box,
    RenormParams,
    coreachable,
    dependency_box,
    edge_distance,
    estimate_good_prob,
    estimate_target_hit,
    in_cone,
    is_good_edge,
    renorm_site_coords,
    validate_params,
    write_estimates_csv,
)


def test_site_coords_examples():
    assert renorm_site_coords((0, 0), RenormParams(10, 2)) == [(-2, 2), (-1, 1), (0, 0), (1, -1), (2, -2)]
    assert renorm_site_coords((1, 0), RenormParams(10, 4)) == [(100 + s, 90 - s) for s in range(-4, 5)]


def test_degenerate_segment_formula():
    # k = 0 is outside the validated parameter range, so build the segment by hand.
    from bml.renorm import center

    assert center((0, 1), 10) == (90, 100)


def test_validate_params_examples():
    assert validate_params(50, 10)[0] is False
    assert validate_params(200, 10)[0] is True
    ok, problems = validate_params(3, 2)
    assert not ok and any("2k" in msg for msg in problems)
    with pytest.raises(ParameterError):
        RenormParams(3, 2)


def test_dependency_box_example():
    box = dependency_box(((0, 0), (1, 0)), RenormParams(10, 1))
    assert box == Box((-2, -2), (102, 92))


def test_far_edges_have_disjoint_boxes():
    params = RenormParams(200, 10)
    edges = [((i, j), (i + di, j + dj)) for i in range(-3, 4) for j in range(-3, 4) for di, dj in ((1, 0), (0, 1))]
    for e1, e2 in itertools.combinations(edges, 2):
        if edge_distance(e1, e2) >= 30:
            assert dependency_box(e1, params).disjoint(dependency_box(e2, params))
    e1, e2 = ((0, 0), (1, 0)), ((1, 0), (1, 1))
    assert not dependency_box(e1, params).disjoint(dependency_box(e2, params))


def test_edges_must_be_unit_steps():
    with pytest.raises(ParameterError):
        dependency_box(((0, 0), (1, 1)), RenormParams(10, 1))


def test_vacancy_in_source_segment_is_bad():
    params = RenormParams(10, 2)
    box = dependency_box(((0, 0), (1, 0)), params)
    g = TorusGrid(sample_cells_full(box.shape))
    g[renorm_site_coords((0, 0), params)[1]] = 0
    verdict = is_good_edge(g, ((0, 0), (1, 0)), params)
    assert not verdict and verdict.reached[1] is False


def sample_cells_full(shape):
    from bml.lattice import RngSeed, sample_cells

    return sample_cells(RngSeed(1).generator(), shape, InitialLaw(1.0))


def test_empty_box_is_bad():
    params = RenormParams(10, 2)
    box = dependency_box(((0, 0), (0, 1)), params)
    assert not is_good_edge(TorusGrid.empty(box.shape), ((0, 0), (0, 1)), params)


def test_good_edge_agrees_with_bfs():
    params = RenormParams(6, 2)
    edge = ((0, 0), (1, 0))
    box = dependency_box(edge, params)
    targets = renorm_site_coords((1, 0), params)
    region = (box.lo, box.hi)
    for s in range(25):
        g = sample_initial(box.shape, InitialLaw(0.97 if s % 2 else 1.0), s)
        verdict = is_good_edge(g, edge, params, witnesses=True)
        for x, ok, w in zip(renorm_site_coords((0, 0), params), verdict.reached, verdict.witnesses):
            bfs = reachable(g, x, targets, region=region) is not None
            assert ok == bfs
            if ok:
                assert validate_path(g, w) and w.end in targets


def test_endpoint_mode_matches_full_at_density_one():
    params = RenormParams(8, 3)
    edge = ((0, 0), (0, 1))
    box = dependency_box(edge, params)
    for s in range(30):
        g = sample_initial(box.shape, InitialLaw(1.0), s)
        assert bool(is_good_edge(g, edge, params)) == bool(is_good_edge(g, edge, params, mode="endpoints"))


def test_coreachable_marks_targets():
    g = TorusGrid(np.full((6, 6), Site.EAST, dtype=np.int8))
    box = Box((0, 0), (5, 5))
    R = coreachable(g, box, [(4, 2)])
    assert R[4, 2] and R[0, 2] and not R[0, 3]


def test_estimate_at_zero_density():
    assert estimate_good_prob(0.0, RenormParams(10, 2), 5, 0).phat == 0.0


def test_estimates_reproducible_and_csv(tmp_path):
    a = estimate_good_prob(0.98, RenormParams(10, 2), 20, 3)
    b = estimate_good_prob(0.98, RenormParams(10, 2), 20, 3)
    assert a.successes == b.successes
    text = write_estimates_csv([a], tmp_path / "g.csv").read_text().splitlines()
    assert text[0] == "p,M,k,trials,successes,phat,stderr"


def test_target_hit_whole_front():
    # A blocking path from the origin ends on line 40 within x in [0, 40].
    est = estimate_target_hit((20, 20), 20, 10, 0)
    assert est.estimate == 1.0 and est.in_cone


def test_target_hit_outside_cone_flagged():
    est = estimate_target_hit((60, 6), 3, 5, 0)
    assert not est.in_cone
    assert in_cone((100, 100)) and not in_cone((0, 5))


def test_greedy_miss_distance_is_tight():
    est = estimate_target_hit((60, 60), 2, 300, 1, method="greedy")
    miss = np.asarray(est.miss)
    tails = [np.mean(miss > k) for k in (2, 4, 8)]
    assert tails[0] >= tails[1] >= tails[2]
    assert est.estimate == np.mean(miss <= 2)

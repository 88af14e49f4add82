import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bml.lattice import (
    EMPTY,
    InitialLaw,
    ParameterError,
    RngSeed,
    Site,
    TorusGrid,
    car_census,
    dumps_snapshot,
    load_snapshot,
    loads_snapshot,
    sample_initial,
    save_snapshot,
)


def test_full_density_has_no_vacancy():
    g = sample_initial((4, 4), InitialLaw(1.0), 0)
    assert car_census(g)["empty"] == 0


def test_zero_density_is_empty():
    g = sample_initial((4, 4), InitialLaw(0.0), 0)
    assert not g.occupied().any()


def test_east_fraction_concentrates():
    g = sample_initial((1000, 1000), InitialLaw(0.5, 0.5), 7)
    n = g.size
    mean, sd = 0.25, np.sqrt(0.25 * 0.75 / n)
    frac = car_census(g)["E"] / n
    assert abs(frac - mean) <= 0.005
    assert abs(frac - mean) <= 3 * sd


def test_biased_law_marginals():
    g = sample_initial((500, 400), InitialLaw(0.6, 0.25), 3)
    c = car_census(g)
    n = g.size
    for key, prob in (("E", 0.15), ("N", 0.45), ("empty", 0.4)):
        assert abs(c[key] / n - prob) <= 4 * np.sqrt(prob * (1 - prob) / n)


def test_ddim_law_is_balanced():
    g = sample_initial((30, 30, 30), InitialLaw(0.9, d=3), 1)
    c = car_census(g)
    n = g.size
    for key in ("0", "1", "2"):
        assert abs(c[key] / n - 0.3) <= 4 * np.sqrt(0.3 * 0.7 / n)


def test_census_examples():
    assert car_census(TorusGrid.empty((2, 2))) == {"empty": 4, "E": 0, "N": 0}
    g = TorusGrid.from_sites((2, 2), {(0, 0): Site.EAST, (1, 1): Site.NORTH})
    assert car_census(g) == {"empty": 2, "E": 1, "N": 1}
    full = sample_initial((6, 5), InitialLaw(1.0), 2)
    c = car_census(full)
    assert c["empty"] == 0 and c["E"] + c["N"] == 30


def test_same_seed_same_grid_and_streams_differ():
    law = InitialLaw(0.5)
    a = sample_initial((50, 50), law, RngSeed(4, 0))
    b = sample_initial((50, 50), law, RngSeed(4, 0))
    c = sample_initial((50, 50), law, RngSeed(4, 1))
    assert a == b
    assert a != c


def test_wrap_indexing():
    g = TorusGrid.empty((3, 4))
    g[-1, 5] = Site.NORTH
    assert g[2, 1] == Site.NORTH
    assert g.cells[2, 1] == 2


@pytest.mark.parametrize(
    "kwargs",
    [dict(p=-0.1), dict(p=1.5), dict(p=0.5, theta=0.0), dict(p=0.5, theta=1.0), dict(p=0.5, d=1)],
)
def test_invalid_law(kwargs):
    with pytest.raises(ParameterError):
        InitialLaw(**kwargs)


def test_invalid_dims():
    with pytest.raises(ParameterError):
        sample_initial((5,), InitialLaw(0.5, d=2))
    with pytest.raises(ParameterError):
        sample_initial((0, 5), InitialLaw(0.5))
    with pytest.raises(ParameterError):
        sample_initial((5, 5, 5), InitialLaw(0.5))


def test_invalid_codes_rejected():
    with pytest.raises(ParameterError):
        TorusGrid(np.full((2, 2), 3))


@settings(max_examples=25, deadline=None)
@given(
    dims=st.lists(st.integers(1, 6), min_size=2, max_size=4),
    p=st.floats(0, 1),
    seed=st.integers(0, 2**32),
)
def test_snapshot_round_trip(dims, p, seed):
    g = sample_initial(dims, InitialLaw(p, d=len(dims)), seed)
    assert loads_snapshot(dumps_snapshot(g)) == g


def test_snapshot_file(tmp_path):
    g = sample_initial((7, 3), InitialLaw(0.7), 9)
    path = save_snapshot(g, tmp_path / "g.bml")
    assert path.read_bytes().startswith(b"BML 2 7 3\n")
    assert load_snapshot(path) == g


def test_snapshot_rejects_garbage():
    with pytest.raises(ParameterError):
        loads_snapshot(b"XYZ 2 2 2\n....")
    with pytest.raises(ParameterError):
        loads_snapshot(b"BML 2 2 2\n..")
    with pytest.raises(ParameterError):
        loads_snapshot(b"BML 2 2 2\n..Q.")


def test_empty_code():
    assert EMPTY == 0 and Site.EAST == 1 and Site.NORTH == 2

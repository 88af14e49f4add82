"""Biham-Middleton-Levine traffic model toolkit."""

__version__ = "0.1.0"

from .lattice import EMPTY, InitialLaw, ParameterError, RngSeed, Site, TorusGrid, car_census, load_snapshot, sample_initial, save_snapshot
from .dynamics import SimStats, is_frozen, run, run_poisson, speed, step_ddim, step_deterministic, step_poisson
from .blocking import BlockingPath, ConstructionError, PreconditionError, find_cyclic, greedy_construct, reachable, successors, validate_path
from .renorm import RenormParams, estimate_good_prob, estimate_target_hit, is_good_edge
from .percolation import SkewTorusSpec, diag_ell, estimate_cycle_prob, estimate_theta, has_oriented_cycle, reach, sample_bonds
from .wchain import tail_estimate, wchain_simulate, wchain_stationary

__all__ = [
    "EMPTY", "InitialLaw", "ParameterError", "RngSeed", "Site", "TorusGrid", "car_census", "load_snapshot",
    "sample_initial", "save_snapshot", "SimStats", "is_frozen", "run", "run_poisson", "speed", "step_ddim",
    "step_deterministic", "step_poisson", "BlockingPath", "ConstructionError", "PreconditionError", "find_cyclic",
    "greedy_construct", "reachable", "successors", "validate_path", "RenormParams", "estimate_good_prob",
    "estimate_target_hit", "is_good_edge", "SkewTorusSpec", "diag_ell", "estimate_cycle_prob", "estimate_theta",
    "has_oriented_cycle", "reach", "sample_bonds", "tail_estimate", "wchain_simulate", "wchain_stationary",
]

"""Reproducible experiment driver.

A run is described by an :class:`ExperimentConfig` (JSON, schema
``bml-config/1``).  :func:`run_experiment` executes it, writes its tables and
images under ``out_dir`` and returns a :class:`RunRecord` whose manifest lists
every written file with its SHA-256.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import __version__
from .blocking import find_cyclic
from .dynamics import ENGINES, SimStats, run, run_poisson, speed
from .lattice import InitialLaw, ParameterError, RngSeed, TorusGrid, car_census, load_snapshot, sample_initial, save_snapshot
from .percolation import SkewTorusSpec, diag_ell, estimate_cycle_prob
from .renorm import RenormParams, estimate_good_prob, estimate_target_hit, validate_params
from .render import render_snapshot
from .wchain import DOWN, STAY, STAY0, UP, UP0, empirical_transitions, increment_frequencies, transition_matrix, wchain_simulate, wchain_stationary

SCHEMA = "bml-config/1"
KINDS = ("simulate", "phase-scan", "blocking", "good-edge", "target-hit", "skew-cycle", "wchain", "render")
ALL_ENGINES = ENGINES

# Seed streams: grids and Poisson clocks never share a stream.
GRID_STREAM = 0
CLOCK_STREAM = 1


class ConfigError(ValueError):
    """Invalid configuration; ``fields`` maps each offending field to a reason."""

    def __init__(self, fields: dict[str, str]):
        self.fields = dict(fields)
        super().__init__("invalid config: " + "; ".join(f"{k}: {v}" for k, v in self.fields.items()))


@dataclass
class PhaseThresholds:
    """Absolute final-window speeds separating the three phases (ceiling 1/2)."""

    low: float = 0.01
    high: float = 0.45


@dataclass
class ExperimentConfig:
    kind: str
    dims: list[int] = field(default_factory=lambda: [200, 200])
    p: float = 0.8
    theta: float = 0.5
    d: Optional[int] = None
    engine: str = "deterministic"
    steps: int = 20_000
    seeds: list[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs"
    format: str = "csv"
    threads: int = 1
    window: Optional[int] = None
    thresholds: PhaseThresholds = field(default_factory=PhaseThresholds)
    ps: Optional[list[float]] = None
    M: int = 20
    k: int = 2
    y: list[int] = field(default_factory=lambda: [100, 100])
    method: str = "search"
    q: float = 0.8
    a: list[int] = field(default_factory=lambda: [6, -3])
    b: list[int] = field(default_factory=lambda: [-2, 4])
    rs: list[int] = field(default_factory=lambda: [1])
    trials: int = 100
    snapshot: Optional[str] = None
    overlay: Optional[str] = None
    image: str = "ppm"
    schema: str = SCHEMA

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError({k: "unknown field" for k in unknown})
        if "kind" not in data:
            raise ConfigError({"kind": "missing"})
        data = dict(data)
        if isinstance(data.get("thresholds"), dict):
            try:
                data["thresholds"] = PhaseThresholds(**data["thresholds"])
            except TypeError as exc:
                raise ConfigError({"thresholds": str(exc)}) from None
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError({"config": str(exc)}) from None
        if not isinstance(data, dict):
            raise ConfigError({"config": "top level must be an object"})
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def dim(self) -> int:
        return len(self.dims)

    @property
    def final_window(self) -> tuple[int, int]:
        w = self.window if self.window is not None else max(1, self.steps // 10)
        return self.steps - w, self.steps

    def law(self, p: Optional[float] = None) -> InitialLaw:
        return InitialLaw(self.p if p is None else p, self.theta, self.dim)

    def problems(self) -> dict[str, str]:
        bad: dict[str, str] = {}
        if self.schema != SCHEMA:
            bad["schema"] = f"expected {SCHEMA!r}"
        if self.kind not in KINDS:
            bad["kind"] = f"must be one of {', '.join(KINDS)}"
        if not self.dims or any(int(n) < 1 for n in self.dims) or len(self.dims) < 2:
            bad["dims"] = "need at least two positive extents"
        if self.d is not None and self.d != len(self.dims):
            bad["d"] = f"does not match dims of length {len(self.dims)}"
        if self.engine not in ALL_ENGINES:
            bad["engine"] = f"must be one of {', '.join(ALL_ENGINES)}"
        elif self.engine == "deterministic" and len(self.dims) != 2:
            bad["engine"] = "the deterministic engine is two-dimensional; use 'ddim'"
        if self.steps < 1:
            bad["steps"] = "must be positive"
        if not self.seeds:
            bad["seeds"] = "need at least one seed"
        if self.format not in ("csv", "json"):
            bad["format"] = "must be csv or json"
        if self.image not in ("ppm", "png"):
            bad["image"] = "must be ppm or png"
        if self.threads < 1:
            bad["threads"] = "must be positive"
        if self.window is not None and not 0 < self.window <= self.steps:
            bad["window"] = "must lie in 1..steps"
        if not 0 <= self.thresholds.low <= self.thresholds.high:
            bad["thresholds"] = "need 0 <= low <= high"
        if self.trials < 1:
            bad["trials"] = "must be positive"
        for name, ps in (("p", [self.p]), ("ps", self.ps or [])):
            for p in ps:
                try:
                    InitialLaw(p, self.theta, max(len(self.dims), 2))
                except ParameterError as exc:
                    bad["theta" if "theta" in str(exc) else name] = str(exc)
        if self.kind == "phase-scan" and not self.ps:
            bad["ps"] = "phase-scan needs a list of densities"
        if self.kind == "good-edge":
            try:
                RenormParams(self.M, self.k)
            except ParameterError as exc:
                bad["M"] = str(exc)
        if self.kind == "target-hit":
            if len(self.y) != 2 or min(self.y) < 0:
                bad["y"] = "need two nonnegative coordinates"
            if self.method not in ("search", "greedy"):
                bad["method"] = "must be search or greedy"
            if self.k < 0:
                bad["k"] = "must be nonnegative"
        if self.kind == "skew-cycle":
            if not 0 <= self.q <= 1:
                bad["q"] = "must lie in [0, 1]"
            try:
                for r in self.rs:
                    SkewTorusSpec(tuple(self.a), tuple(self.b), r)
            except (ParameterError, ValueError, TypeError) as exc:
                bad["a"] = str(exc)
        if self.kind == "render" and self.snapshot is None and len(self.dims) != 2:
            bad["dims"] = "rendering is two-dimensional"
        for name in ("snapshot", "overlay"):
            value = getattr(self, name)
            if value is not None and not Path(value).is_file():
                bad[name] = f"no such file: {value}"
        return bad

    def validate(self) -> None:
        try:
            bad = self.problems()
        except (TypeError, ValueError) as exc:
            raise ConfigError({"config": f"malformed value ({exc})"}) from None
        if bad:
            raise ConfigError(bad)


@dataclass
class RunRecord:
    config: dict
    version: str
    wall_time: float
    stats: dict
    manifest: list[dict]

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True))
        return path


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def verify_manifest(record: RunRecord | dict, out_dir: str | Path) -> list[str]:
    """Files of the manifest that are missing or whose hash differs."""
    entries = record.manifest if isinstance(record, RunRecord) else record["manifest"]
    bad = []
    for e in entries:
        p = Path(out_dir) / e["path"]
        if not p.is_file() or sha256_file(p) != e["sha256"]:
            bad.append(e["path"])
    return bad


# Phase classification ------------------------------------------------------


def classify_phase(stats: SimStats, thresholds: PhaseThresholds = PhaseThresholds(), window: Optional[tuple[int, int]] = None) -> str:
    """``jammed`` if frozen or slow, ``free-flowing`` if fast, else ``intermediate``.

    The default window is the last tenth of the run.
    """
    if stats.frozen_at is not None:
        return "jammed"
    if window is None:
        end = stats.t0 + stats.substeps
        window = (end - max(1, stats.substeps // 10), end)
    v = speed(stats, window)
    if v < thresholds.low:
        return "jammed"
    if v >= thresholds.high:
        return "free-flowing"
    return "intermediate"


# Output helpers ------------------------------------------------------------


class _Outputs:
    def __init__(self, out_dir: Path, fmt: str):
        self.dir = out_dir
        self.fmt = fmt
        self.files: list[Path] = []
        out_dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.dir / name
        self.files.append(p)
        return p

    def table(self, stem: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        if self.fmt == "json":
            p = self.path(stem + ".json")
            p.write_text(json.dumps([dict(zip(header, r)) for r in rows], indent=2, default=_jsonable))
        else:
            p = self.path(stem + ".csv")
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                w.writerows(rows)
        return p

    def manifest(self) -> list[dict]:
        seen = {}
        for p in self.files:
            seen[p.relative_to(self.dir).as_posix()] = {"path": p.relative_to(self.dir).as_posix(), "sha256": sha256_file(p), "bytes": p.stat().st_size}
        return [seen[k] for k in sorted(seen)]


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _finite(x: float) -> Optional[float]:
    return None if not np.isfinite(x) else float(x)


def _fan_out(fn: Callable, jobs: list, threads: int) -> list:
    """Map ``fn`` over ``jobs``, in worker processes when ``threads > 1``.

    Results come back in job order, so aggregation does not depend on
    scheduling.
    """
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as ex:
        return list(ex.map(fn, jobs))


# Experiments ---------------------------------------------------------------


def _simulate_one(job: tuple[dict, float, int]) -> dict:
    cfg_dict, p, seed = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    grid = sample_initial(cfg.dims, cfg.law(p), RngSeed(seed, GRID_STREAM))
    out: dict[str, Any] = {"p": p, "seed": seed, "n_cars": grid.n_cars()}
    if cfg.engine == "poisson":
        ps = run_poisson(grid, cfg.steps, RngSeed(seed, CLOCK_STREAM))
        out.update(engine="poisson", events=ps.events, moves=ps.moves, tau=ps.tau, frozen=ps.frozen, frozen_at=None, speed=None, phase=None)
        out["census_final"] = car_census(ps.final)
        out["_final"] = ps.final.cells
        out["_moves"] = None
        return out
    stats = run(grid, cfg.steps, cfg.engine)
    lo, hi = cfg.final_window
    v = speed(stats, (lo, hi)) if stats.n_cars else None
    phase = classify_phase(stats, cfg.thresholds, (lo, hi)) if stats.n_cars else "free-flowing"
    out.update(
        engine=cfg.engine,
        frozen=stats.frozen_at is not None,
        frozen_at=stats.frozen_at,
        substeps=stats.substeps,
        total_moves=int(stats.moves_per_substep.sum()),
        speed=v,
        phase=phase,
        census_final=car_census(stats.final),
    )
    out["_final"] = stats.final.cells
    out["_moves"] = stats.moves_per_substep
    return out


def _run_sims(cfg: ExperimentConfig, ps: list[float]) -> list[dict]:
    base = cfg.to_dict()
    jobs = [(base, float(p), int(s)) for p in ps for s in sorted(cfg.seeds)]
    return _fan_out(_simulate_one, jobs, cfg.threads)


_SIM_COLUMNS = ["p", "seed", "n_cars", "frozen", "frozen_at", "speed", "phase"]


def _exp_simulate(cfg: ExperimentConfig, out: _Outputs) -> dict:
    results = _run_sims(cfg, [cfg.p])
    for r in results:
        tag = f"seed{r['seed']}"
        final = TorusGrid(r["_final"])
        save_snapshot(final, out.path(f"final_{tag}.bml"))
        if final.d == 2:
            render_snapshot(final, out.path(f"final_{tag}.{cfg.image}"))
        if r["_moves"] is not None:
            cum = np.cumsum(r["_moves"])
            out.table(f"moves_{tag}", ["substep", "moves", "cumulative_moves"], [[i + 1, int(m), int(c)] for i, (m, c) in enumerate(zip(r["_moves"], cum))])
    rows = [[r.get(c) for c in _SIM_COLUMNS] for r in results]
    out.table("runs", _SIM_COLUMNS, rows)
    return {"runs": [{k: v for k, v in r.items() if not k.startswith("_")} for r in results]}


def _exp_phase_scan(cfg: ExperimentConfig, out: _Outputs) -> dict:
    results = _run_sims(cfg, list(cfg.ps))
    out.table("phase_scan", _SIM_COLUMNS, [[r.get(c) for c in _SIM_COLUMNS] for r in results])
    summary = {}
    for p in cfg.ps:
        sub = [r for r in results if r["p"] == float(p)]
        labels = [r["phase"] for r in sub]
        speeds = [r["speed"] for r in sub if r["speed"] is not None]
        summary[repr(float(p))] = {
            "seeds": len(sub),
            "free-flowing": labels.count("free-flowing"),
            "intermediate": labels.count("intermediate"),
            "jammed": labels.count("jammed"),
            "frozen": sum(r["frozen"] for r in sub),
            "mean_speed": float(np.mean(speeds)) if speeds else None,
            "majority": max(("free-flowing", "intermediate", "jammed"), key=labels.count) if labels else None,
        }
    return {"runs": [{k: v for k, v in r.items() if not k.startswith("_")} for r in results], "summary": summary}


def _blocking_one(job: tuple[dict, int]) -> dict:
    cfg_dict, seed = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    grid = sample_initial(cfg.dims, cfg.law(), RngSeed(seed, GRID_STREAM))
    path = find_cyclic(grid)
    return {"seed": seed, "found": path is not None, "length": len(path) if path else 0, "mixed": bool(path and path.is_mixed()), "_path": path, "_grid": grid.cells}


def _exp_blocking(cfg: ExperimentConfig, out: _Outputs) -> dict:
    results = _fan_out(_blocking_one, [(cfg.to_dict(), int(s)) for s in sorted(cfg.seeds)], cfg.threads)
    for r in results:
        if r["_path"] is not None:
            r["_path"].save(out.path(f"cycle_seed{r['seed']}.json"))
            if cfg.dim == 2:
                render_snapshot(TorusGrid(r["_grid"]), out.path(f"cycle_seed{r['seed']}.{cfg.image}"), r["_path"])
    cols = ["seed", "found", "length", "mixed"]
    out.table("blocking", cols, [[r[c] for c in cols] for r in results])
    found = sum(r["found"] for r in results)
    return {"seeds": len(results), "found": found, "fraction": found / len(results), "runs": [{c: r[c] for c in cols} for r in results]}


def _exp_good_edge(cfg: ExperimentConfig, out: _Outputs) -> dict:
    params = RenormParams(cfg.M, cfg.k)
    ok, problems = validate_params(cfg.M, cfg.k)
    ps = list(cfg.ps) if cfg.ps else [cfg.p]
    seed = int(cfg.seeds[0])
    samples = _fan_out(_good_edge_one, [(cfg.M, cfg.k, float(p), cfg.trials, seed, cfg.theta) for p in ps], cfg.threads)
    cols = ["p", "M", "k", "trials", "successes", "phat", "stderr"]
    out.table("good_edge", cols, [s.row() for s in samples])
    return {"slope_condition": ok, "slope_problems": problems, "M": params.M, "k": params.k, "estimates": [dict(zip(cols, s.row())) for s in samples]}


def _good_edge_one(job):
    M, k, p, trials, seed, theta = job
    return estimate_good_prob(p, RenormParams(M, k), trials, seed, theta=theta)


def _exp_target_hit(cfg: ExperimentConfig, out: _Outputs) -> dict:
    est = estimate_target_hit(cfg.y, cfg.k, cfg.trials, int(cfg.seeds[0]), method=cfg.method)
    cols = ["y1", "y2", "k", "method", "trials", "hits", "estimate", "stderr", "in_cone"]
    row = [est.y[0], est.y[1], est.k, est.method, est.trials, est.hits, est.estimate, est.stderr, est.in_cone]
    out.table("target_hit", cols, [row])
    return dict(zip(cols, row))


def _skew_one(job):
    a, b, r, q, trials, seed = job
    return estimate_cycle_prob(SkewTorusSpec(a, b, r), q, trials, seed)


def _exp_skew_cycle(cfg: ExperimentConfig, out: _Outputs) -> dict:
    a, b = tuple(cfg.a), tuple(cfg.b)
    jobs = [(a, b, int(r), cfg.q, cfg.trials, int(cfg.seeds[0])) for r in cfg.rs]
    ests = _fan_out(_skew_one, jobs, cfg.threads)
    cols = ["q", "r", "vertices", "diag_ell", "trials", "successes", "estimate", "stderr"]
    rows = [[e.q, e.spec.r, e.spec.n_vertices, diag_ell(e.spec), e.trials, e.successes, e.estimate, e.stderr] for e in ests]
    out.table("skew_cycle", cols, rows)
    return {"a": list(a), "b": list(b), "estimates": [dict(zip(cols, r)) for r in rows]}


def _exp_wchain(cfg: ExperimentConfig, out: _Outputs) -> dict:
    traj = wchain_simulate(cfg.steps, 0, int(cfg.seeds[0]))
    top = int(traj.max())
    emp = empirical_transitions(traj, top)
    exact = transition_matrix(top + 2)[: top + 1, : top + 1]
    # Rows visited fewer times than this are too noisy to compare entrywise.
    visited = np.bincount(traj[:-1], minlength=top + 1) >= 10_000
    err = float(np.abs(emp - exact)[visited].max()) if visited.any() else None
    inc = increment_frequencies(traj)
    pooled = max(float(np.abs(inc["positive"] - [DOWN, STAY, UP]).max()), float(np.abs(inc["zero"] - [STAY0, UP0]).max()))
    occ = np.bincount(traj, minlength=top + 1) / traj.size
    pi = wchain_stationary(top + 1)
    tv = 0.5 * (float(np.abs(occ - pi).sum()) + (1.0 - float(pi.sum())))
    rows = [[j, jj, float(exact[j, jj]), float(emp[j, jj])] for j in range(top + 1) for jj in range(max(0, j - 1), min(top, j + 1) + 1)]
    out.table("wchain_transitions", ["from", "to", "exact", "empirical"], rows)
    return {
        "steps": cfg.steps,
        "max_state": top,
        "pooled_increment_error": pooled,
        "max_row_error": err,
        "rows_compared": int(visited.sum()),
        "stationary_tv": tv,
    }


def _exp_render(cfg: ExperimentConfig, out: _Outputs) -> dict:
    from .blocking import BlockingPath

    if cfg.snapshot is not None:
        grid = load_snapshot(cfg.snapshot)
    else:
        grid = sample_initial(cfg.dims, cfg.law(), RngSeed(int(cfg.seeds[0]), GRID_STREAM))
    overlay = None
    if cfg.overlay is not None:
        overlay = BlockingPath.from_json(json.loads(Path(cfg.overlay).read_text()))
    path = render_snapshot(grid, out.path(f"snapshot.{cfg.image}"), overlay)
    return {"image": path.name, "dims": list(grid.dims), "census": car_census(grid)}


_EXPERIMENTS = {
    "simulate": _exp_simulate,
    "phase-scan": _exp_phase_scan,
    "blocking": _exp_blocking,
    "good-edge": _exp_good_edge,
    "target-hit": _exp_target_hit,
    "skew-cycle": _exp_skew_cycle,
    "wchain": _exp_wchain,
    "render": _exp_render,
}


def run_experiment(config: ExperimentConfig | dict) -> RunRecord:
    """Execute ``config`` and write its artifacts and ``record.json``."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    cfg.validate()
    out = _Outputs(Path(cfg.out_dir), cfg.format)
    t = time.perf_counter()
    stats = _EXPERIMENTS[cfg.kind](cfg, out)
    wall = time.perf_counter() - t
    stats = json.loads(json.dumps(stats, default=_jsonable))
    record = RunRecord(cfg.to_dict(), __version__, wall, stats, out.manifest())
    record.save(Path(cfg.out_dir) / "record.json")
    return record

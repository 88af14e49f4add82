"""Command line front end for the experiment harness.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

from .harness import KINDS, ConfigError, ExperimentConfig, run_experiment
from .lattice import ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace("x", ",").split(",") if v]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v]


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse's own exit code is already 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bml", description="BML traffic model experiments")
    sub = parser.add_subparsers(dest="kind", required=True, parser_class=_Parser)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", help="JSON config file; flags given here override it")
        sp.add_argument("--seed", type=int, help="first seed")
        sp.add_argument("--n-seeds", type=int, help="number of consecutive seeds")
        sp.add_argument("--out-dir")
        sp.add_argument("--threads", type=int)
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("--dims", type=_ints, help="e.g. 200x200 or 60,60,60")
        sp.add_argument("--p", type=float)
        sp.add_argument("--theta", type=float)
        sp.add_argument("--engine", choices=("deterministic", "ddim", "poisson"))
        sp.add_argument("--steps", type=int, help="sub-steps, Poisson events, or chain steps")
        sp.add_argument("--window", type=int, help="final speed window length")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--image", choices=("ppm", "png"))
        if kind in ("phase-scan", "good-edge"):
            sp.add_argument("--ps", type=_floats, help="comma separated densities")
        if kind in ("good-edge", "target-hit"):
            sp.add_argument("--k", type=int)
        if kind == "good-edge":
            sp.add_argument("--M", type=int)
        if kind == "target-hit":
            sp.add_argument("--y", type=_ints)
            sp.add_argument("--method", choices=("search", "greedy"))
        if kind == "skew-cycle":
            sp.add_argument("--q", type=float)
            sp.add_argument("--a", type=_ints)
            sp.add_argument("--b", type=_ints)
            sp.add_argument("--rs", type=_ints)
        if kind == "render":
            sp.add_argument("--snapshot", help="grid snapshot file to render")
            sp.add_argument("--overlay", help="blocking path JSON to draw in green")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    data: dict = {}
    if args.config:
        data = ExperimentConfig.load(args.config).to_dict()
        if data["kind"] != args.kind:
            raise ConfigError({"kind": f"config is for {data['kind']!r}, not {args.kind!r}"})
    data["kind"] = args.kind
    skip = {"config", "kind", "seed", "n_seeds"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            data[key] = value
    if args.seed is not None or args.n_seeds is not None:
        first = args.seed if args.seed is not None else (data.get("seeds") or [0])[0]
        data["seeds"] = list(range(first, first + (args.n_seeds or 1)))
    return ExperimentConfig.from_dict(data)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "fields": exc.fields}), file=sys.stderr)
        return EXIT_CONFIG
    try:
        record = run_experiment(cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "fields": exc.fields}), file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any failure during a run maps to one exit code
        print(json.dumps({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"out_dir": cfg.out_dir, "wall_time": record.wall_time, "stats": record.stats}, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line runner for the experiment pipelines.

Exit codes: 0 success, 1 pipeline failure (partial manifest written),
2 usage error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import PIPELINES, RunConfig, run

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from exc


# config key -> (RunConfig field, parser)
FIELDS = {
    "seed": ("seed", int),
    "out": ("out", Path),
    "seeds": ("seeds", int),
    "alpha": ("alphas", _floats),
    "lambda": ("lambdas", _floats),
    "bounds": ("bounds", int),
    "grid": ("grid", int),
    "max-iter": ("max_iter", int),
    "tol": ("tol", float),
    "estate": ("estate", float),
    "claims": ("claims", _floats),
    "sizes": ("sizes", _ints),
    "workers": ("workers", int),
    "coupling": ("coupling", float),
    "horizon": ("horizon", int),
    "clusters": ("clusters", int),
}


def read_config(path: Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment, keys use CLI spelling."""
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    for no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{no}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in FIELDS:
            raise UsageError(f"{path}:{no}: unknown field {key!r}")
        name, parse = FIELDS[key]
        try:
            values[name] = parse(val)
        except (UsageError, ValueError) as exc:
            raise UsageError(f"{path}:{no}: bad value for {key!r}: {exc}") from exc
    return values


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="infogames", description="Seeded experiment pipelines (CSV output).")
    p.add_argument("command", choices=sorted(PIPELINES))
    p.add_argument("--config", type=Path, help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path)
    p.add_argument("--seeds", type=int, help="number of seeded runs")
    p.add_argument("--alpha", type=str, help="fractional order(s), comma separated")
    p.add_argument("--lambda", dest="lambda_", type=str, help="dissatisfaction rate(s), comma separated")
    p.add_argument("--bounds", type=int, help="points on the trade-off curve")
    p.add_argument("--grid", type=int, help="grid nodes, oscillators or data points")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--estate", type=float)
    p.add_argument("--claims", type=str, help="comma-separated claims")
    p.add_argument("--sizes", type=str, help="player counts for the op-count fit")
    p.add_argument("--workers", type=int, help="process pool size")
    p.add_argument("--coupling", type=float)
    p.add_argument("--horizon", type=int)
    p.add_argument("--clusters", type=int)
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    values = read_config(args.config) if args.config else {}
    flags = {
        "seed": args.seed, "out": args.out, "seeds": args.seeds, "bounds": args.bounds,
        "grid": args.grid, "max_iter": args.max_iter, "tol": args.tol, "estate": args.estate,
        "workers": args.workers, "coupling": args.coupling, "horizon": args.horizon,
        "clusters": args.clusters,
    }
    for key, raw, parse in (
        ("alphas", args.alpha, _floats), ("lambdas", args.lambda_, _floats),
        ("claims", args.claims, _floats), ("sizes", args.sizes, _ints),
    ):
        flags[key] = parse(raw) if raw is not None else None
    values.update({k: v for k, v in flags.items() if v is not None})
    cfg = RunConfig(**values)
    if cfg.seeds < 1 or cfg.workers < 1:
        raise UsageError("--seeds and --workers must be positive")
    if cfg.tol is not None and cfg.tol <= 0:
        raise UsageError("--tol must be positive")
    if not cfg.alphas or any(not 0 < a <= 1 for a in cfg.alphas):
        raise UsageError("--alpha values must lie in (0, 1]")
    if not cfg.lambdas or any(not 0 <= v < 1 for v in cfg.lambdas):
        raise UsageError("--lambda values must lie in [0, 1)")
    if args.command == "bankruptcy" and (cfg.estate is None or not cfg.claims):
        raise UsageError("bankruptcy needs --estate and --claims")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = make_config(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    status, manifest = run(args.command, cfg)
    print(manifest)
    return status


if __name__ == "__main__":
    sys.exit(main())

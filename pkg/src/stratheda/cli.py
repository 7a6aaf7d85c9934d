"""Command-line entry point: ``stratheda {aggregate,allocate,optimize,grid-search}``.

Every subcommand writes a JSON report (``--out``, default stdout summary
only) that embeds the command line, resolved configuration and seed, so the
run can be replayed. Exit codes: 0 success, 2 usage error, 3 infeasible
precision constraints, 4 input file problems, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .aggregate import aggregate, normalize_labels
from .bethel import BethelOptions, Evaluator, compute_cv, allocate
from .errors import FrameError, InfeasibleError, StrathedaError, ValidationError
from .frame import (
    PrecisionConstraints,
    build_atomic_strata,
    build_continuous_strata,
    load_basic_strata,
    load_constraints,
    load_frame,
    write_basic_strata,
)
from .heda import HedaConfig, run_heda
from .oracle import DEFAULT_MAX_L, grid_search

log = logging.getLogger("stratheda")

ENV_PREFIX = "STRATHEDA_"
EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FILE = 2, 3, 4


class UsageError(StrathedaError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _names(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _labels(text: str) -> np.ndarray:
    try:
        return np.array([int(v) for v in text.replace(" ", ",").split(",") if v.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integer labels, got {text!r}") from None


def _bin_spec(text: str) -> tuple[str, int]:
    name, _, k = text.partition("=")
    if not name or not k.isdigit():
        raise argparse.ArgumentTypeError(f"expected COLUMN=K, got {text!r}")
    return name, int(k)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stratheda", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p, constraints=True):
        src = p.add_argument_group("input")
        src.add_argument("--strata-stats", type=Path, help="basic-strata fixture id,N,M1..MG,S1..SG")
        src.add_argument("--frame", type=Path, help="delimited sampling frame")
        src.add_argument("--targets", type=_names, help="target columns (frame input)")
        src.add_argument("--aux", type=_names, default=[], help="auxiliary columns (frame input)")
        src.add_argument("--bin", type=_bin_spec, action="append", default=[], metavar="COL=K",
                         help="k-means bin a numeric auxiliary column before crossing")
        src.add_argument("--mode", choices=("atomic", "continuous"), default=None)
        if constraints:
            c = p.add_argument_group("precision")
            c.add_argument("--cv", type=_floats, help="CV bound per target, comma separated")
            c.add_argument("--cv-file", type=Path, help="target_name,epsilon sidecar")
            b = p.add_argument_group("allocation solver")
            b.add_argument("--clamp", choices=("post", "in_loop"), default=None)
            b.add_argument("--tol", type=float, default=None)
            b.add_argument("--maxiter", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
        p.add_argument("--out", type=Path, help="JSON report path")
        p.add_argument("--table", type=Path, help="per-stratum delimited table path")
        p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("aggregate", help="build basic strata and optionally pool them by a labelling")
    common(p, constraints=False)
    p.add_argument("--labels", type=_labels, help="stratum label per basic stratum")
    p.add_argument("--write-strata", type=Path, help="write the basic strata as a fixture")

    p = sub.add_parser("allocate", help="optimal allocation for one stratification")
    common(p)
    p.add_argument("--labels", type=_labels, help="stratum label per basic stratum (default: each its own)")

    p = sub.add_parser("optimize", help="search stratifications with the hybrid EDA")
    common(p)
    p.add_argument("--config", type=Path, help="TOML file of search hyperparameters")
    p.add_argument("--start", type=_labels, help="starting stratification")

    p = sub.add_parser("grid-search", help="exhaustive search over all partitions")
    common(p)
    p.add_argument("--max-l", type=int, default=DEFAULT_MAX_L)
    p.add_argument("--allow-large", action="store_true")
    return parser


def _load_instance(args):
    if args.strata_stats and args.frame:
        raise UsageError("give either --strata-stats or --frame, not both")
    if args.strata_stats:
        return load_basic_strata(args.strata_stats), "fixture"
    if not args.frame:
        raise UsageError("an input is required: --strata-stats or --frame")
    if not args.targets:
        raise UsageError("--targets is required with --frame")
    frame = load_frame(args.frame, args.targets, args.aux)
    seed = args.seed if args.seed is not None else 0
    for name, k in args.bin:
        frame = frame.bin(name, k, seed)
    mode = args.mode or ("atomic" if args.aux else "continuous")
    build = build_atomic_strata if mode == "atomic" else build_continuous_strata
    return build(frame), mode


def _resolve_constraints(args, instance) -> PrecisionConstraints:
    inline = args.cv
    sidecar = load_constraints(args.cv_file) if args.cv_file else None
    if inline is None and sidecar is None:
        raise UsageError("precision constraints are required: --cv or --cv-file")
    if inline is not None and sidecar is not None and not np.allclose(inline, sidecar.epsilons):
        log.warning("--cv overrides the values in --cv-file")
    if inline is not None:
        if len(inline) == 1 and instance.G > 1:
            inline = inline * instance.G
        names = sidecar.names if sidecar is not None and len(sidecar) == len(inline) else instance.target_names
        eps = PrecisionConstraints(np.array(inline), names if len(names) == len(inline) else ())
    else:
        eps = sidecar
    if len(eps) != instance.G:
        raise ValidationError(f"expected {instance.G} CV bounds, got {len(eps)}")
    return eps


def _bethel_options(args, file_values: dict) -> BethelOptions:
    values = dict(file_values)
    for key in ("clamp", "tol", "maxiter"):
        env = os.environ.get(f"{ENV_PREFIX}BETHEL_{key.upper()}")
        if env is not None:
            values[key] = env
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    kwargs = {}
    if "clamp" in values:
        kwargs["clamp"] = str(values["clamp"])
    if "tol" in values:
        kwargs["tol"] = float(values["tol"])
    if "maxiter" in values:
        kwargs["maxiter"] = int(values["maxiter"])
    if "min_n" in values:
        kwargs["min_n"] = float(values["min_n"])
    return BethelOptions(**kwargs)


def _read_config(path) -> tuple[dict, dict]:
    if path is None:
        return {}, {}
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    bethel = data.pop("bethel", {})
    heda = data.pop("heda", {})
    heda.update(data)
    return heda, bethel


def _heda_config(args, file_values: dict) -> HedaConfig:
    values = dict(file_values)
    for key in HedaConfig.__dataclass_fields__:
        env = os.environ.get(f"{ENV_PREFIX}{key.upper()}")
        if env is not None:
            values[key] = env
    if args.seed is not None:
        values["seed"] = args.seed
    return HedaConfig.from_mapping(values)


def _stratum_rows(stats, alloc=None):
    rows = []
    for h in range(stats.H):
        row = {"stratum": h + 1, "N": float(stats.counts[h])}
        for g in range(stats.means.shape[1]):
            row[f"M{g + 1}"] = float(stats.means[h, g])
        for g in range(stats.stddevs.shape[1]):
            row[f"S{g + 1}"] = float(stats.stddevs[h, g])
        if alloc is not None:
            row["n"] = float(alloc.n[h])
            row["n_unclamped"] = float(alloc.n_unclamped[h])
            row["clamped"] = bool(alloc.clamped[h])
        rows.append(row)
    return rows


def _write_table(path, rows):
    if path is None or not rows:
        return
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _allocation_block(instance, labels, eps, options):
    stats = aggregate(instance, labels)
    alloc = allocate(stats, eps.epsilons, instance.totals, options)
    cv = compute_cv(stats, alloc.n, instance.totals, eps.epsilons)
    block = {
        "labels": normalize_labels(labels).tolist(),
        "total": alloc.total,
        "total_unclamped": alloc.total_unclamped,
        "converged": alloc.converged,
        "iterations": alloc.iterations,
        "cv": dict(zip(eps.names, map(float, cv.cv))),
        "cv_satisfied": dict(zip(eps.names, map(bool, cv.satisfied))),
        "strata": _stratum_rows(stats, alloc),
    }
    return block


def _cmd_aggregate(args, report):
    instance, mode = _load_instance(args)
    report["inputs"]["mode"] = mode
    report["basic_strata"] = instance.L
    report["totals"] = dict(zip(instance.target_names, map(float, instance.totals)))
    if args.write_strata:
        write_basic_strata(args.write_strata, instance.ids, instance.counts, instance.means, instance.stddevs)
    labels = args.labels if args.labels is not None else np.arange(1, instance.L + 1)
    stats = aggregate(instance, labels)
    rows = _stratum_rows(stats)
    report["labels"] = normalize_labels(labels).tolist()
    report["strata"] = rows
    _write_table(args.table, rows)
    return f"basic strata: {instance.L}, strata: {stats.H}"


def _cmd_allocate(args, report):
    instance, mode = _load_instance(args)
    eps = _resolve_constraints(args, instance)
    options = _bethel_options(args, {})
    report["inputs"]["mode"] = mode
    report["constraints"] = dict(zip(eps.names, map(float, eps.epsilons)))
    report["bethel"] = vars(options)
    labels = args.labels if args.labels is not None else np.arange(1, instance.L + 1)
    block = _allocation_block(instance, labels, eps, options)
    report["allocation"] = block
    _write_table(args.table, block["strata"])
    return f"strata: {len(block['strata'])}, sample size: {block['total']:.4f}"


def _cmd_optimize(args, report):
    instance, mode = _load_instance(args)
    eps = _resolve_constraints(args, instance)
    heda_values, bethel_values = _read_config(args.config)
    options = _bethel_options(args, bethel_values)
    config = _heda_config(args, heda_values)
    threads = args.threads or os.cpu_count() or 1
    report["inputs"]["mode"] = mode
    report["constraints"] = dict(zip(eps.names, map(float, eps.epsilons)))
    report["bethel"] = vars(options)
    report["config"] = config.to_dict()
    report["seed"] = config.seed
    evaluator = Evaluator(instance, eps.epsilons, options)
    run = run_heda(instance, config, starting=args.start, evaluator=evaluator, threads=threads)
    block = _allocation_block(instance, run.best.labels, eps, options)
    report["best_quality"] = run.best.quality
    report["allocation"] = block
    report["history"] = [float(q) for q in run.history]
    report["evaluation_count"] = run.evaluation_count
    report["wall_time"] = run.wall_time
    _write_table(args.table, block["strata"])
    return f"best quality: {run.best.quality:.4f}, strata: {len(block['strata'])}, evaluations: {run.evaluation_count}"


def _cmd_grid(args, report):
    instance, mode = _load_instance(args)
    eps = _resolve_constraints(args, instance)
    options = _bethel_options(args, {})
    threads = args.threads or os.cpu_count() or 1
    report["inputs"]["mode"] = mode
    report["constraints"] = dict(zip(eps.names, map(float, eps.epsilons)))
    report["bethel"] = vars(options)
    result = grid_search(instance, eps.epsilons, options, threads=threads, max_L=args.max_l, allow_large=args.allow_large)
    block = _allocation_block(instance, result.labels, eps, options)
    report["partitions_evaluated"] = result.evaluated
    report["optimum"] = result.quality
    report["allocation"] = block
    report["wall_time"] = result.seconds
    _write_table(args.table, block["strata"])
    return f"partitions: {result.evaluated}, optimum: {result.quality:.4f}"


COMMANDS = {
    "aggregate": _cmd_aggregate,
    "allocate": _cmd_allocate,
    "optimize": _cmd_optimize,
    "grid-search": _cmd_grid,
}


def _error(kind: str, message: str, code: int, **extra) -> int:
    record = {"error": kind, "message": message, "exit_code": code, **extra}
    print(json.dumps(record), file=sys.stderr)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error("usage", str(exc), EXIT_USAGE)
    except argparse.ArgumentTypeError as exc:
        return _error("usage", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    report = {
        "command": ["stratheda", *argv],
        "subcommand": args.subcommand,
        "version": __version__,
        "seed": args.seed if args.seed is not None else 0,
        "inputs": {
            k: str(v) for k, v in (("strata_stats", args.strata_stats), ("frame", args.frame)) if v is not None
        },
    }
    try:
        summary = COMMANDS[args.subcommand](args, report)
    except UsageError as exc:
        return _error("usage", str(exc), EXIT_USAGE)
    except InfeasibleError as exc:
        return _error("infeasible", str(exc), EXIT_INFEASIBLE, targets=exc.targets)
    except (FrameError, ValidationError, OSError, tomli.TOMLDecodeError) as exc:
        return _error("input", str(exc), EXIT_FILE)
    except (StrathedaError, ValueError) as exc:
        return _error(type(exc).__name__, str(exc), 1)
    if args.out:
        args.out.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``forestmpc generate|run|verify|bench``.

Exit codes: 0 when every verdict passes and the run recorded no capacity
violation, 1 when a verdict fails or a violation was recorded, 2 for bad
input (unparsable files, cycles, malformed artifacts), 3 when an algorithm
gives up (incomplete decomposition, capacity or termination guard).
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Sequence

from .forest import GENERATOR_KINDS, Forest, ForestError, format_edge_list, generate, read_edge_list
from .hdecomp import FormatError, HDecompError, Layering, validate_complete, validate_strict_h
from .mpcsim import MpcConfig, MpcError, read_config_file
from .pipeline import MODES, TASKS, run_pipeline
from .symmetry import (
    SymmetryError,
    parse_coloring,
    parse_edges,
    parse_nodes,
    validate_coloring,
    validate_matching,
    validate_mis,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_ALGORITHM = 0, 1, 2, 3
ARTIFACT_KINDS = ("layering", "coloring", "mis", "matching")


def _write(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _build_config(n: int, args: argparse.Namespace) -> MpcConfig:
    overrides = read_config_file(args.config) if args.config else {}
    if args.delta is not None:
        overrides["delta"] = args.delta
    if args.k is not None:
        overrides["k_param"] = args.k
    if args.local_capacity is not None:
        overrides["local_capacity"] = args.local_capacity
    k = overrides.get("k_param")
    if k is not None and "epsilon_capacity" not in overrides:
        # a radius above the default direction capacity lifts the capacity with it
        base = MpcConfig.derived(max(n, 1), **{key: v for key, v in overrides.items() if key != "k_param"})
        overrides["epsilon_capacity"] = max(base.epsilon_capacity, k)
    return MpcConfig.derived(max(n, 1), **overrides)


def cmd_generate(args: argparse.Namespace) -> int:
    f = generate(args.kind, args.n, args.seed)
    _write(format_edge_list(f), args.out)
    return EXIT_OK


def _load(path: str) -> tuple[Forest, list[int] | None]:
    return read_edge_list(path)


def cmd_run(args: argparse.Namespace) -> int:
    f, table = _load(args.input)
    cfg = _build_config(f.n, args)
    trace = open(args.trace, "w") if args.trace else None
    try:
        result = run_pipeline(
            f, args.task, cfg, mode=args.mode, optimal_space=args.optimal_space,
            preprocess_iterations=args.preprocess_iterations, fmt=args.format, trace=trace,
        )
    finally:
        if trace is not None:
            trace.close()
    report = result.report
    if table is not None:
        report.extras["original_ids"] = table
    _write(result.artifact, args.out)
    if args.report:
        Path(args.report).write_text(report.to_json())
    else:
        sys.stderr.write(report.to_json())
    return EXIT_OK if report.ok else EXIT_FAIL


def verify_artifact(f: Forest, text: str, kind: str) -> list:
    if kind == "layering":
        if text.lstrip().startswith("{"):
            layering = Layering.from_json(text, f.n)
        else:
            layering = Layering.from_text(text, f.n)
        return [validate_strict_h(f, layering), validate_complete(layering)]
    if kind == "coloring":
        return [validate_coloring(f, parse_coloring(text, f.n))]
    if kind == "mis":
        if text.lstrip().startswith("{"):
            nodes = set(_json_field(text, "nodes"))
        else:
            nodes = parse_nodes(text, f.n)
        return [validate_mis(f, nodes)]
    if text.lstrip().startswith("{"):
        edges = {(min(u, v), max(u, v)) for u, v in _json_field(text, "edges")}
    else:
        edges = parse_edges(text, f.n)
    return [validate_matching(f, edges)]


def _json_field(text: str, key: str) -> list:
    try:
        return list(json.loads(text)[key])
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"expected a JSON object with {key!r}: {exc}") from None


def cmd_verify(args: argparse.Namespace) -> int:
    f, _ = _load(args.input)
    verdicts = verify_artifact(f, Path(args.artifact).read_text(), args.kind)
    for v in verdicts:
        if v.ok:
            print(f"PASS {v.check}")
        else:
            print(f"FAIL {v.check} node={v.node} {v.reason}")
    return EXIT_OK if all(verdicts) else EXIT_FAIL


def parse_sizes(tokens: Sequence[str]) -> list[int]:
    """Integers, powers written ``2^k``, and power ranges ``2^a..2^b``."""
    sizes: list[int] = []

    def one(token: str) -> int:
        if "^" in token:
            base, exp = token.split("^", 1)
            return int(base) ** int(exp)
        return int(token)

    for token in tokens:
        for part in token.split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..", 1)
                if "^" in lo and "^" in hi:
                    base = int(lo.split("^")[0])
                    sizes += [base ** e for e in range(int(lo.split("^")[1]), int(hi.split("^")[1]) + 1)]
                else:
                    sizes += list(range(one(lo), one(hi) + 1))
            else:
                sizes.append(one(part))
    return sizes


BENCH_COLUMNS = ("task", "kind", "mode", "n", "seed", "repetition", "rounds", "global_peak",
                 "machine_peak", "violations", "ok", "wall_time")


def cmd_bench(args: argparse.Namespace) -> int:
    sizes = parse_sizes(args.sizes)
    out = open(args.out, "w", newline="") if args.out and args.out != "-" else sys.stdout
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    all_ok = True
    try:
        for n in sizes:
            for seed in range(args.seeds):
                f = generate(args.kind, n, seed)
                cfg = _build_config(f.n, args)
                for rep in range(args.repetitions):
                    start = time.perf_counter()
                    result = run_pipeline(f, args.task, cfg, mode=args.mode, optimal_space=args.optimal_space,
                                          preprocess_iterations=args.preprocess_iterations)
                    wall = time.perf_counter() - start
                    report = result.report
                    all_ok &= report.ok
                    writer.writerow([args.task, args.kind, args.mode, n, seed, rep, report.rounds,
                                     report.global_peak_words, report.machine_peak_words,
                                     report.violation_count, int(report.ok), f"{wall:.4f}"])
                    out.flush()
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK if all_ok else EXIT_FAIL


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES, default="direct")
    p.add_argument("--delta", type=float, default=None, help="space exponent, default 0.5")
    p.add_argument("--k", type=int, default=None, help="exploration radius override")
    p.add_argument("--local-capacity", type=int, default=None, help="words per machine override")
    p.add_argument("--config", default=None, help="key=value file with configuration overrides")
    p.add_argument("--optimal-space", action="store_true", help="peel pivots and leaves first")
    p.add_argument("--preprocess-iterations", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forestmpc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a generated forest as an edge list")
    g.add_argument("--kind", choices=GENERATOR_KINDS, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None)
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="decompose a forest and solve a task on it")
    r.add_argument("input")
    r.add_argument("--task", choices=TASKS, default="hdecomp")
    _add_config_flags(r)
    r.add_argument("--format", choices=("text", "json"), default="text")
    r.add_argument("--out", default=None, help="result file (default stdout)")
    r.add_argument("--report", default=None, help="report JSON file (default stderr)")
    r.add_argument("--trace", default=None, help="JSON-lines exploration trace")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="check a result file against its forest")
    v.add_argument("input")
    v.add_argument("artifact")
    v.add_argument("--kind", choices=ARTIFACT_KINDS, required=True)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="sweep sizes and emit CSV")
    b.add_argument("--task", choices=TASKS, default="hdecomp")
    b.add_argument("--kind", choices=GENERATOR_KINDS, default="random_tree")
    b.add_argument("--sizes", nargs="+", default=["2^10..2^16"])
    b.add_argument("--seeds", type=int, default=1)
    b.add_argument("--repetitions", type=int, default=1)
    _add_config_flags(b)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ForestError, FormatError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (HDecompError, SymmetryError, MpcError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ALGORITHM
    except ValueError as exc:  # configuration values out of range
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

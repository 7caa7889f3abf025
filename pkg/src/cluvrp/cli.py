"""Command-line entry point: ``cluvrp gen|preprocess|solve|bench``.

Every flag can also come from a JSON file given with ``--config`` (keys are
flag names, dashes or underscores); explicit command-line flags win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bench
from .hampath import CACHE_ENV, LAMBDA_MAX, cache_path, cached_path_table, default_cache_dir
from .instance import InstanceError, generate_clustered, random_cvrp, read_instance, save_instance

log = logging.getLogger("cluvrp")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cluvrp", description="Clustered vehicle routing toolkit")
    p.add_argument("--config", help="JSON file with default values for the flags")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="derive a clustered instance from a CVRP instance")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--input", help="CVRP instance file (customers become clustered)")
    src.add_argument("--n", type=int, help="generate a random CVRP with this many customers")
    g.add_argument("--capacity", type=int, default=100, help="capacity of random instances")
    g.add_argument("--theta", type=float, default=5.0, help="mean cluster size")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", help="output file (stdout if omitted)")

    pp = sub.add_parser("preprocess", help="compute or load the Hamiltonian path table")
    pp.add_argument("--instance")
    pp.add_argument("--cache-dir", help=f"cache directory (default: ${CACHE_ENV}, else beside the instance)")
    pp.add_argument("--lambda-max", type=int, default=LAMBDA_MAX)

    s = sub.add_parser("solve", help="solve one instance")
    s.add_argument("--instance")
    s.add_argument("--solver", choices=bench.SOLVERS, default="uhgs")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--time-limit", type=float, default=bench.DEFAULT_TIME_LIMIT)
    s.add_argument("--cache-dir")
    s.add_argument("--lambda-max", type=int, default=LAMBDA_MAX)
    s.add_argument("--json-out", help="write cost, routes and statistics as JSON")

    b = sub.add_parser("bench", help="run a solver x seed grid and report")
    b.add_argument("--instances", help="directory of instance files")
    b.add_argument("--solvers", default=",".join(bench.SOLVERS), help="comma-separated solver ids")
    b.add_argument("--runs", type=int, default=10)
    b.add_argument("--bks", help="CSV of instance,bks")
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--time-limit", type=float, default=bench.DEFAULT_TIME_LIMIT)
    b.add_argument("--records", help="JSONL results file; reruns skip recorded cells")
    b.add_argument("--group-by", choices=sorted(bench.GROUP_KEYS), default="set")
    b.add_argument("--cache-dir")
    b.add_argument("--lambda-max", type=int, default=LAMBDA_MAX)
    b.add_argument("--csv", help="per-run CSV output")
    b.add_argument("--markdown", help="summary table output (stdout if omitted)")
    b.add_argument("--params", help="JSON object: solver id -> config overrides")
    return p


def _apply_config(args: argparse.Namespace, parser: argparse.ArgumentParser, argv) -> None:
    """Fill flags not given on the command line from the JSON config file."""
    with open(args.config) as fh:
        conf = json.load(fh)
    if not isinstance(conf, dict):
        raise SystemExit("config file must hold a JSON object")
    given = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, value in conf.items():
        attr = key.replace("-", "_")
        if attr in ("command", "config"):
            continue
        if not hasattr(args, attr):
            log.warning("config key %r does not apply to %s", key, args.command)
            continue
        if attr not in given:
            setattr(args, attr, value)


def _need(args, name):
    if getattr(args, name) is None:
        raise SystemExit(f"--{name.replace('_', '-')} is required")
    return getattr(args, name)


def cmd_gen(args) -> int:
    if args.input:
        cvrp = read_instance(args.input)
    elif args.n:
        cvrp = random_cvrp(args.n, args.seed, capacity=args.capacity)
    else:
        raise SystemExit("gen needs --input or --n")
    inst = generate_clustered(cvrp, args.theta, args.seed)
    if args.out:
        save_instance(inst, args.out)
        print(f"{inst.name}: n={inst.n} sets={inst.num_sets} m={inst.fleet} -> {args.out}")
    else:
        from .instance import write_instance

        sys.stdout.write(write_instance(inst))
    return 0


def cmd_preprocess(args) -> int:
    inst = read_instance(_need(args, "instance"))
    cache_dir = default_cache_dir(args.instance, args.cache_dir)
    table, hit = cached_path_table(inst, cache_dir, args.lambda_max)
    where = cache_path(inst, cache_dir)
    state = "loaded" if hit else "computed"
    print(f"{inst.name}: {state} {table.pair_count()} endpoint pairs in {table.seconds:.3f}s {where}")
    return 0


def cmd_solve(args) -> int:
    inst = read_instance(_need(args, "instance"))
    cache_dir = default_cache_dir(args.instance, args.cache_dir)
    sol, pre = bench.solve(inst, args.solver, args.seed, args.time_limit, cache_dir, args.lambda_max)
    print(f"{inst.name} {args.solver} seed={args.seed} cost={sol.cost:g} routes={len(sol.routes)} "
          f"time={sol.stats.get('time', 0.0):.2f}s preproc={pre:.2f}s")
    if args.json_out:
        payload = sol.to_dict()
        payload["stats"] = {k: v for k, v in payload["stats"].items() if k not in ("best_history",)}
        payload.update(instance=inst.name, solver=args.solver, seed=args.seed, preproc_time=pre)
        Path(args.json_out).write_text(json.dumps(payload, indent=2))
    return 0


def cmd_bench(args) -> int:
    folder = Path(_need(args, "instances"))
    files = sorted(str(p) for p in folder.iterdir() if p.is_file() and not p.name.startswith("."))
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()] if isinstance(args.solvers, str) else list(args.solvers)
    unknown = set(solvers) - set(bench.SOLVERS)
    if unknown:
        raise SystemExit(f"unknown solvers: {', '.join(sorted(unknown))}")
    params = args.params
    if isinstance(params, str):
        params = json.loads(params)
    cfg = bench.ExperimentConfig(
        instances=files,
        solvers=solvers,
        runs=args.runs,
        workers=args.workers,
        records=args.records,
        time_limit=args.time_limit,
        cache_dir=args.cache_dir,
        lambda_max=args.lambda_max,
        params=params or {},
    )
    records = bench.run_experiment(cfg)
    failed = [r for r in records if r.status != "ok"]
    bks = bench.load_bks(args.bks) if args.bks else {}
    table = bench.summary_markdown(bench.summarize(records, bks, args.group_by))
    if args.csv:
        Path(args.csv).write_text(bench.runs_csv(records))
    if args.markdown:
        Path(args.markdown).write_text(table)
    else:
        sys.stdout.write(table)
    if failed:
        print(f"{len(failed)} run(s) failed", file=sys.stderr)
    return 1 if failed else 0


COMMANDS = {"gen": cmd_gen, "preprocess": cmd_preprocess, "solve": cmd_solve, "bench": cmd_bench}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.config:
        _apply_config(args, parser, argv)
    try:
        return COMMANDS[args.command](args)
    except (InstanceError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

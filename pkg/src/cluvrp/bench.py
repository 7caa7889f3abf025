"""Benchmark grid runner and report tables.

Runs every (instance, solver, seed) cell, re-validates each solution with the
independent checker, appends one JSON record per cell to a results file (so
an interrupted grid resumes where it stopped) and aggregates the records into
per-group statistics against a best-known-solution table.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import re
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .hampath import LAMBDA_MAX, cached_path_table, default_cache_dir
from .hgs import HgsConfig, run_uhgs
from .ils import IlsConfig, run_ils
from .instance import Instance, read_instance
from .solution import check_solution

log = logging.getLogger(__name__)

SOLVERS = ("ils", "ils-clu", "uhgs")
DEFAULT_TIME_LIMIT = 300.0
MATCH_TOL = 1e-6


def percent_dev(z: float, z_bks: float) -> float:
    """Percentage gap to the best known solution; negative means a new best."""
    if not z_bks > 0:
        raise ValueError(f"best known cost must be positive, got {z_bks}")
    return (z - z_bks) / z_bks * 100.0


def is_new_bks(z: float, z_bks: float) -> bool:
    return percent_dev(z, z_bks) < 0


@dataclass
class RunRecord:
    instance: str
    n: int
    clusters: int
    m: int
    solver: str
    seed: int
    best: float | None
    time_solve: float
    time_preprocess: float = 0.0
    instance_set: str = ""
    theta: float | None = None
    status: str = "ok"
    error: str = ""

    @property
    def time_total(self) -> float:
        return self.time_solve + self.time_preprocess

    @property
    def key(self) -> tuple[str, str, int]:
        return (self.instance, self.solver, self.seed)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))


# -- BKS -----------------------------------------------------------------------


def load_bks(path) -> dict[str, float]:
    """CSV with columns ``instance,bks`` (header optional)."""
    out: dict[str, float] = {}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            try:
                value = float(row[1])
            except (IndexError, ValueError):
                if row[0].strip().lower() == "instance":
                    continue
                raise ValueError(f"bad BKS row: {row}")
            if value <= 0:
                raise ValueError(f"best known cost must be positive for {row[0]}")
            out[row[0].strip()] = value
    return out


# -- solving -------------------------------------------------------------------


def theta_of(inst: Instance) -> float:
    m = re.search(r"-t(\d+(?:\.\d+)?)$", inst.name)
    if m:
        return float(m.group(1))
    return round((inst.n + 1) / inst.num_sets, 2)


def solve(
    inst: Instance,
    solver: str,
    seed: int,
    time_limit: float | None = DEFAULT_TIME_LIMIT,
    cache_dir=None,
    lambda_max: int = LAMBDA_MAX,
    params: dict | None = None,
):
    """Run one solver; returns (Solution, preprocessing seconds)."""
    params = dict(params or {})
    if solver in ("ils", "ils-clu"):
        cfg = IlsConfig(mode="vertex" if solver == "ils" else "cluster", seed=seed, time_limit=time_limit, **params)
        return run_ils(inst, cfg), 0.0
    if solver == "uhgs":
        table, _ = cached_path_table(inst, cache_dir, lambda_max)
        cfg = HgsConfig(seed=seed, time_limit=time_limit, **params)
        return run_uhgs(inst, table, cfg), table.seconds
    raise ValueError(f"unknown solver {solver!r}; expected one of {SOLVERS}")


@dataclass
class ExperimentConfig:
    instances: list[str]
    solvers: Sequence[str] = SOLVERS
    runs: int = 10
    first_seed: int = 0
    workers: int = 1
    records: str | None = None  # JSONL results file, enables resuming
    time_limit: float | None = DEFAULT_TIME_LIMIT
    cache_dir: str | None = None
    lambda_max: int = LAMBDA_MAX
    params: dict = field(default_factory=dict)  # solver id -> config overrides


def _run_cell(path: str, solver: str, seed: int, cfg: ExperimentConfig) -> RunRecord:
    inst = read_instance(path)
    base = dict(
        instance=inst.name,
        n=inst.n,
        clusters=inst.num_sets,
        m=inst.fleet,
        solver=solver,
        seed=seed,
        instance_set=Path(path).parent.name,
        theta=theta_of(inst),
    )
    start = time.perf_counter()
    try:
        sol, pre = solve(inst, solver, seed, cfg.time_limit, default_cache_dir(path, cfg.cache_dir), cfg.lambda_max, cfg.params.get(solver))
        elapsed = float(sol.stats.get("time", time.perf_counter() - start))
        verified = check_solution(inst, sol.routes)
        if abs(verified - sol.cost) > MATCH_TOL:
            raise RuntimeError(f"solver reported {sol.cost} but the checker gives {verified}")
        return RunRecord(best=verified, time_solve=max(0.0, elapsed), time_preprocess=pre, **base)
    except Exception as exc:  # recorded as a failed cell
        log.exception("run failed: %s %s seed %d", inst.name, solver, seed)
        return RunRecord(
            best=None, time_solve=time.perf_counter() - start, status="failed", error=f"{type(exc).__name__}: {exc}", **base
        )


def read_records(path) -> list[RunRecord]:
    p = Path(path)
    if not p.exists():
        return []
    out = []
    for line in p.read_text().splitlines():
        if line.strip():
            try:
                out.append(RunRecord.from_json(line))
            except (json.JSONDecodeError, TypeError):
                log.warning("skipping truncated record line in %s", p)
    return out


def run_experiment(cfg: ExperimentConfig) -> list[RunRecord]:
    """Run the grid; cells already recorded as successful in ``cfg.records`` are not re-run."""
    done = {r.key: r for r in read_records(cfg.records) if r.status == "ok"} if cfg.records else {}
    cells = []
    for path in cfg.instances:
        try:
            name = read_instance(path).name
        except (OSError, ValueError) as exc:
            log.error("skipping %s: %s", path, exc)
            continue
        for solver in cfg.solvers:
            for seed in range(cfg.first_seed, cfg.first_seed + cfg.runs):
                if (name, solver, seed) not in done:
                    cells.append((str(path), solver, seed))
    out_fh = open(cfg.records, "a") if cfg.records else None
    results = list(done.values())

    def keep(rec: RunRecord):
        results.append(rec)
        if out_fh:
            out_fh.write(rec.to_json() + "\n")
            out_fh.flush()

    try:
        if cfg.workers > 1 and len(cells) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                futures = [pool.submit(_run_cell, p, s, seed, cfg) for p, s, seed in cells]
                for fut in futures:
                    keep(fut.result())
        else:
            for p, s, seed in cells:
                keep(_run_cell(p, s, seed, cfg))
    finally:
        if out_fh:
            out_fh.close()
    return results


# -- reporting -----------------------------------------------------------------

GROUP_KEYS = {
    "set": lambda r: r.instance_set,
    "n": lambda r: r.n,
    "theta": lambda r: r.theta,
}


def summarize(records: Iterable[RunRecord], bks: dict[str, float], group_by: str = "set") -> list[dict]:
    """Per (group, solver): #BKS, mean times and mean deviation of per-instance bests.

    ``avg_time_p`` adds preprocessing to the solve time.  Instances without a
    BKS entry count toward times but not toward #BKS or the deviation.
    """
    if group_by not in GROUP_KEYS:
        raise ValueError(f"group_by must be one of {sorted(GROUP_KEYS)}")
    key = GROUP_KEYS[group_by]
    cells: dict[tuple, list[RunRecord]] = defaultdict(list)
    for r in records:
        if r.status == "ok":
            cells[(key(r), r.solver)].append(r)
    rows = []
    for (group, solver) in sorted(cells, key=lambda k: (str(k[0]), k[1])):
        recs = cells[(group, solver)]
        best: dict[str, float] = {}
        for r in recs:
            best[r.instance] = min(best.get(r.instance, math.inf), r.best)
        devs = [percent_dev(z, bks[i]) for i, z in sorted(best.items()) if i in bks]
        rows.append(
            {
                group_by: group,
                "solver": solver,
                "instances": len(best),
                "runs": len(recs),
                "n_bks": sum(1 for i, z in best.items() if i in bks and z <= bks[i] + MATCH_TOL),
                "avg_time": sum(r.time_solve for r in recs) / len(recs),
                "avg_time_p": sum(r.time_total for r in recs) / len(recs),
                "avg_dev": sum(devs) / len(devs) if devs else None,
                "new_bks": sum(1 for i, z in best.items() if i in bks and is_new_bks(z, bks[i])),
            }
        )
    return rows


CSV_COLUMNS = ("instance", "n", "clusters", "m", "solver", "seed", "best", "avg", "time", "preproc_time")


def runs_csv(records: Iterable[RunRecord]) -> str:
    """One row per successful run; ``avg`` is the mean over that instance/solver's seeds."""
    recs = sorted((r for r in records if r.status == "ok"), key=lambda r: r.key)
    by_cell: dict[tuple[str, str], list[float]] = defaultdict(list)
    for r in recs:
        by_cell[(r.instance, r.solver)].append(r.best)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in recs:
        vals = by_cell[(r.instance, r.solver)]
        w.writerow([r.instance, r.n, r.clusters, r.m, r.solver, r.seed, r.best, sum(vals) / len(vals), f"{r.time_solve:.3f}", f"{r.time_preprocess:.3f}"])
    return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)


def summary_markdown(rows: list[dict]) -> str:
    if not rows:
        return "_no successful runs_\n"
    cols = list(rows[0])
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for row in rows:
        lines.append("| " + " | ".join(_fmt(row[c]) for c in cols) + " |")
    return "\n".join(lines) + "\n"

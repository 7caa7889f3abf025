"""Exact intra-cluster Hamiltonian path costs.

For every cluster and every ordered pair of endpoints (i, j), the cheapest path
that starts at i, ends at j and visits every other member once.  Computed by a
subset dynamic program over (visited set, last vertex), vectorized over all
start vertices of the cluster at once.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .instance import Instance, write_instance

log = logging.getLogger(__name__)

LAMBDA_MAX = 14
CACHE_VERSION = 1
CACHE_ENV = "CLUVRP_CACHE_DIR"


class ClusterTooLarge(ValueError):
    pass


def _subset_dp(sub: np.ndarray) -> np.ndarray:
    """dp[s, mask, v]: cheapest path from s covering ``mask`` and ending at v."""
    lam = len(sub)
    full = 1 << lam
    dp = np.full((lam, full, lam), np.inf)
    for s in range(lam):
        dp[s, 1 << s, s] = 0.0
    masks = np.arange(full)
    popcount = np.array([bin(m).count("1") for m in range(full)])
    for size in range(2, lam + 1):
        layer = masks[popcount == size]
        for w in range(lam):
            sel = layer[(layer >> w) & 1 == 1]
            prev = sel ^ (1 << w)
            dp[:, sel, w] = (dp[:, prev, :] + sub[:, w]).min(axis=2)
    return dp


def _backtrack(dp: np.ndarray, sub: np.ndarray, s: int, t: int) -> list[int]:
    lam = len(sub)
    mask = (1 << lam) - 1
    path = [t]
    cur = t
    while mask != (1 << s):
        prev = mask ^ (1 << cur)
        cur = int(np.argmin(dp[s, prev, :] + sub[:, cur]))
        path.append(cur)
        mask = prev
    path.reverse()
    return path


def _solve_cluster(members: Sequence[int], costs: np.ndarray, lambda_max: int):
    lam = len(members)
    if lam > lambda_max:
        raise ClusterTooLarge(
            f"cluster of size {lam} exceeds lambda_max={lambda_max}; raise lambda_max "
            "(heuristic path estimation is not supported)"
        )
    if lam == 1:
        return np.zeros((1, 1)), {(0, 0): (members[0],)}
    idx = np.asarray(members)
    sub = costs[np.ix_(idx, idx)]
    dp = _subset_dp(sub)
    full = (1 << lam) - 1
    table = dp[:, full, :].copy()
    np.fill_diagonal(table, np.inf)
    # reversing a path gives the same cost; keep the cheaper orientation so the
    # table is exactly symmetric even when float sums differ in the last ulp
    sym = np.minimum(table, table.T)
    paths = {}
    for i in range(lam):
        for j in range(i + 1, lam):
            if table[i, j] <= table[j, i]:
                order = _backtrack(dp, sub, i, j)
            else:
                order = _backtrack(dp, sub, j, i)[::-1]
            verts = tuple(int(idx[v]) for v in order)
            paths[i, j] = verts
            paths[j, i] = verts[::-1]
    return sym, paths


def cluster_ham_paths(members: Sequence[int], costs: np.ndarray, lambda_max: int = LAMBDA_MAX) -> np.ndarray:
    """λ×λ matrix of optimal Hamiltonian path costs, indexed by position in ``members``.

    The diagonal is +inf for λ > 1 and the single entry is 0 for λ = 1.
    """
    return _solve_cluster(members, costs, lambda_max)[0]


def ham_path_bruteforce(members: Sequence[int], costs: np.ndarray, i: int, j: int) -> float:
    """Cheapest i -> j path through all of ``members`` by enumerating interior orders."""
    lam = len(members)
    if lam == 1:
        return 0.0
    if i == j:
        return np.inf
    if lam > 9:
        raise ValueError("brute force limited to clusters of at most 9 customers")
    inner = [members[k] for k in range(lam) if k not in (i, j)]
    a, b = members[i], members[j]
    best = np.inf
    for perm in itertools.permutations(inner):
        seq = (a, *perm, b)
        total = 0.0
        for u, v in zip(seq, seq[1:]):
            total += costs[u, v]
        best = min(best, total)
    return best


@dataclass
class PathCostTable:
    """Per-cluster endpoint-pair path costs and the corresponding visit orders."""

    members: list[tuple[int, ...]]
    costs: list[np.ndarray]
    paths: list[dict[tuple[int, int], tuple[int, ...]]]
    seconds: float = 0.0

    def path(self, k: int, i: int, j: int) -> tuple[int, ...]:
        return self.paths[k][i, j]

    def pair_count(self) -> int:
        """Number of ordered endpoint pairs with i != j."""
        return sum(int(np.isfinite(c).sum()) for c in self.costs if len(c) > 1)


def compute_path_table(inst: Instance, lambda_max: int = LAMBDA_MAX) -> PathCostTable:
    start = time.perf_counter()
    costs, paths = [], []
    for members in inst.clusters:
        c, p = _solve_cluster(members, inst.costs, lambda_max)
        costs.append(c)
        paths.append(p)
    return PathCostTable(list(inst.clusters), costs, paths, time.perf_counter() - start)


# -- persistence --------------------------------------------------------------


def instance_hash(inst: Instance) -> str:
    return hashlib.sha256(write_instance(inst).encode()).hexdigest()


def dump_path_table(table: PathCostTable, inst: Instance) -> str:
    lines = [
        f"# cluvrp-pathtable {CACHE_VERSION}",
        f"# instance {instance_hash(inst)}",
        f"# clusters {len(table.members)}",
        f"# seconds {table.seconds!r}",
    ]
    for k, mat in enumerate(table.costs):
        lam = len(mat)
        for i in range(lam):
            for j in range(lam):
                if lam > 1 and i == j:
                    continue
                verts = " ".join(str(v) for v in table.paths[k][i, j])
                lines.append(f"{k} {i} {j} {float(mat[i, j])!r} {verts}")
    return "\n".join(lines) + "\n"


def load_path_table(text: str, inst: Instance) -> PathCostTable:
    lines = text.splitlines()
    meta = {}
    for line in lines:
        if not line.startswith("#"):
            break
        key, _, value = line[1:].strip().partition(" ")
        meta[key] = value
    if meta.get("cluvrp-pathtable") != str(CACHE_VERSION):
        raise ValueError("unsupported path table version")
    if meta.get("instance") != instance_hash(inst):
        raise ValueError("path table was computed for a different instance")
    costs = [np.full((len(m), len(m)), np.inf) for m in inst.clusters]
    paths: list[dict] = [{} for _ in inst.clusters]
    for line in lines:
        if line.startswith("#") or not line.strip():
            continue
        toks = line.split()
        k, i, j = int(toks[0]), int(toks[1]), int(toks[2])
        costs[k][i, j] = float(toks[3])
        paths[k][i, j] = tuple(int(t) for t in toks[4:])
    for k, members in enumerate(inst.clusters):
        if len(paths[k]) != max(1, len(members) * (len(members) - 1)):
            raise ValueError(f"path table incomplete for cluster {k}")
    return PathCostTable(list(inst.clusters), costs, paths, float(meta.get("seconds", 0.0)))


def cache_path(inst: Instance, cache_dir) -> Path:
    return Path(cache_dir) / f"{inst.name}.{instance_hash(inst)[:16]}.paths"


def cached_path_table(inst: Instance, cache_dir=None, lambda_max: int = LAMBDA_MAX) -> tuple[PathCostTable, bool]:
    """Load the table from the cache directory, computing and storing it on a miss.

    Returns the table and whether it came from the cache.  ``table.seconds`` is
    always the original computation time.
    """
    cache_dir = cache_dir or os.environ.get(CACHE_ENV)
    if cache_dir is None:
        return compute_path_table(inst, lambda_max), False
    path = cache_path(inst, cache_dir)
    if path.exists():
        try:
            return load_path_table(path.read_text(), inst), True
        except ValueError as exc:
            log.warning("ignoring stale path cache %s: %s", path, exc)
    table = compute_path_table(inst, lambda_max)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(dump_path_table(table, inst))
        tmp.replace(path)
    except OSError as exc:  # read-only instance folders still solve, just uncached
        log.warning("could not write path cache %s: %s", path, exc)
    return table, False


def default_cache_dir(instance_file, cache_dir=None):
    """Explicit directory, else the environment override, else beside the instance file."""
    return cache_dir or os.environ.get(CACHE_ENV) or str(Path(instance_file).resolve().parent)

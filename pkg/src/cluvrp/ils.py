"""Iterated local search in two flavours.

``vertex`` mode searches customer sequences on M-penalized costs, so cluster
contiguity is only enforced through the penalty.  ``cluster`` mode moves whole
clusters (each with a fixed internal path) and improves paths separately with
endpoint and intra-cluster descents.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .concat import Engine
from .instance import Instance
from .neighborhoods import (
    EPS,
    INTRA_ROUTE,
    NL_C,
    RouteState,
    best_move,
    choose_M,
    endpoints_search,
    intra_cluster_search,
    m_penalty_costs,
    penalized_edge_count,
    rvnd,
)
from .solution import Solution, check_solution, cluster_sequence

log = logging.getLogger(__name__)

MAX_CONSTRUCTION_TRIES = 50
MAX_PERTURB_TRIES = 20


class ConstructionError(RuntimeError):
    pass


@dataclass
class IlsConfig:
    mode: str = "cluster"  # "vertex" or "cluster"
    n_restarts: int = 50
    n_iter: int | None = None  # None: n + 5m (vertex), 1000 (cluster)
    seed: int = 0
    M: float | None = None  # vertex mode only; None picks choose_M
    time_limit: float | None = None

    def __post_init__(self):
        if self.mode not in ("vertex", "cluster"):
            raise ValueError(f"unknown ILS mode {self.mode!r}")
        if self.n_restarts < 1 or (self.n_iter is not None and self.n_iter < 1):
            raise ValueError("n_restarts and n_iter must be >= 1")

    def iterations(self, inst: Instance) -> int:
        if self.n_iter is not None:
            return self.n_iter
        return inst.n + 5 * inst.fleet if self.mode == "vertex" else 1000


# -- construction -----------------------------------------------------------------


def initial_solution(inst: Instance, rng: np.random.Generator) -> Solution:
    """Parallel cheapest insertion of customers in random order.

    A customer of an already started cluster goes inside or at either end of
    that cluster's run; the first customer of a cluster goes between two
    clusters of any route that can still hold the whole cluster.
    """
    C = inst.costs
    owner = inst.cluster_of
    cdem = inst.cluster_demand
    customers = np.arange(1, inst.n + 1)
    for _ in range(MAX_CONSTRUCTION_TRIES):
        routes: list[list[int]] = [[] for _ in range(inst.fleet)]
        loads = [0] * inst.fleet
        where: dict[int, int] = {}
        failed = False
        for v in rng.permutation(customers).tolist():
            k = int(owner[v])
            best = None
            if k in where:
                r = where[k]
                seq = routes[r]
                idx = [i for i, x in enumerate(seq) if owner[x] == k]
                candidates = [(r, p) for p in range(idx[0], idx[-1] + 2)]
            else:
                candidates = []
                for r, seq in enumerate(routes):
                    if loads[r] + cdem[k] > inst.capacity:
                        continue
                    for p in range(len(seq) + 1):
                        if 0 < p < len(seq) and owner[seq[p - 1]] == owner[seq[p]]:
                            continue
                        candidates.append((r, p))
            for r, p in candidates:
                seq = routes[r]
                a = seq[p - 1] if p > 0 else 0
                b = seq[p] if p < len(seq) else 0
                delta = C[a, v] + C[v, b] - C[a, b]
                if best is None or delta < best[0]:
                    best = (delta, r, p)
            if best is None:
                failed = True
                break
            _, r, p = best
            routes[r].insert(p, v)
            if k not in where:
                where[k] = r
                loads[r] += int(cdem[k])
        if not failed:
            routes = [r for r in routes if r]
            return Solution(routes, check_solution(inst, routes))
    raise ConstructionError(f"no feasible insertion order found in {MAX_CONSTRUCTION_TRIES} attempts")


# -- state conversion ----------------------------------------------------------------


def _cluster_state(inst: Instance, routes: list[list[int]]) -> RouteState:
    paths: list[tuple[int, ...]] = [()] * inst.num_clusters
    items = []
    owner = inst.cluster_of
    for r in routes:
        seq = cluster_sequence(inst, r)
        items.append(seq)
        for k in seq:
            paths[k] = tuple(v for v in r if owner[v] == k)
    engine = Engine.from_paths(inst, paths)
    return RouteState(engine, items, inst.capacity, inst.fleet)


def _vertex_state(inst: Instance, routes: list[list[int]], costs: np.ndarray) -> RouteState:
    engine = Engine.vertex_level(inst, costs)
    return RouteState(engine, [[v - 1 for v in r] for r in routes], inst.capacity, inst.fleet)


def _customers(state: RouteState, mode: str) -> list[list[int]]:
    if mode == "vertex":
        return [[k + 1 for k in r] for r in state.routes if r]
    return state.decode()


# -- perturbation --------------------------------------------------------------------


def _fits(state: RouteState, items: list[int]) -> bool:
    return sum(state.engine.loads[k] for k in items) <= state.capacity


def _shift11(state: RouteState, rng) -> dict[int, list[int]] | None:
    used = [r for r, items in enumerate(state.routes) if items]
    if len(used) < 2:
        return None
    r1, r2 = (int(x) for x in rng.choice(used, size=2, replace=False))
    a, b = list(state.routes[r1]), list(state.routes[r2])
    u = a.pop(int(rng.integers(len(a))))
    v = b.pop(int(rng.integers(len(b))))
    b.insert(int(rng.integers(len(b) + 1)), u)
    a.insert(int(rng.integers(len(a) + 1)), v)
    return {r1: a, r2: b}


def _swap_between(state: RouteState, rng) -> dict[int, list[int]] | None:
    used = [r for r, items in enumerate(state.routes) if items]
    if len(used) < 2:
        return None
    r1, r2 = (int(x) for x in rng.choice(used, size=2, replace=False))
    a, b = list(state.routes[r1]), list(state.routes[r2])
    i, j = int(rng.integers(len(a))), int(rng.integers(len(b)))
    a[i], b[j] = b[j], a[i]
    return {r1: a, r2: b}


def _swap_within(state: RouteState, rng) -> dict[int, list[int]] | None:
    used = [r for r, items in enumerate(state.routes) if len(items) >= 2]
    if not used:
        return None
    r = int(rng.choice(used))
    a = list(state.routes[r])
    i, j = (int(x) for x in rng.choice(len(a), size=2, replace=False))
    a[i], a[j] = a[j], a[i]
    return {r: a}


def _perturb_once(state: RouteState, rng: np.random.Generator, mode: str) -> RouteState | None:
    out = state.copy()
    swap = _swap_between if mode == "vertex" else _swap_within
    applied = False
    for _ in range(int(rng.integers(1, 3))):
        for _ in range(MAX_PERTURB_TRIES):
            op = _shift11 if rng.random() < 0.5 else swap
            change = op(out, rng)
            if change is None:
                change = (swap if op is _shift11 else _shift11)(out, rng)
            if change is None and mode == "vertex":
                change = _swap_within(out, rng)  # single route: nothing to exchange across routes
            if change is None:
                break
            if all(_fits(out, items) for items in change.values()):
                for r, items in change.items():
                    out.set_route(r, items)
                applied = True
                break
    if not applied:
        return None
    out.normalize()
    return out


def perturb(state: RouteState, rng: np.random.Generator, mode: str) -> RouteState:
    """One or two random Shift(1,1)/Swap moves; capacity-violating draws are redrawn.

    Swap exchanges items of two routes in vertex mode and two clusters of the
    same route in cluster mode.  A vertex-mode state with a single route falls
    back to swapping two of its customers.  Draws whose moves cancel out are
    repeated.  Returns a new state (the input is untouched); when nothing
    applies the result equals the input.
    """
    before = state.nonempty()
    for _ in range(MAX_PERTURB_TRIES):
        out = _perturb_once(state, rng, mode)
        if out is None:
            break
        if out.nonempty() != before:
            return out
    return state.copy()


# -- local search ----------------------------------------------------------------------


def _touched(state: RouteState, before: list[list[int]]) -> set[int]:
    old = {tuple(r) for r in before}
    return {i for i, r in enumerate(state.routes) if r and tuple(r) not in old}


def local_search(state: RouteState, rng: np.random.Generator, mode: str, deadline: float | None = None) -> RouteState:
    pending = list(NL_C)
    while pending:
        if deadline is not None and time.perf_counter() > deadline:
            break
        kind = pending[int(rng.integers(len(pending)))]
        mv = best_move(state, kind)
        if mv is None:
            pending.remove(kind)
            continue
        before = [list(r) for r in state.routes]
        state.apply(mv)
        touched = _touched(state, before)
        if mode == "vertex":
            rvnd(state, INTRA_ROUTE, rng, touched)
        else:
            endpoints_search(state, touched)
            ref = state.total()
            rvnd(state, INTRA_ROUTE, rng, touched)
            if state.total() < ref - EPS:
                endpoints_search(state, touched)
        pending = list(NL_C)
    if mode == "cluster":
        intra_cluster_search(state)
    return state


# -- driver ------------------------------------------------------------------------------


def run_ils(inst: Instance, config: IlsConfig, table=None) -> Solution:
    """Multi-start ILS; returns the best solution over all restarts.

    ``table`` is accepted for interface symmetry and ignored: cluster mode
    works with explicit intra-cluster paths rather than precomputed ones.
    """
    rng = np.random.default_rng(config.seed)
    start = time.perf_counter()
    deadline = start + config.time_limit if config.time_limit else None
    n_iter = config.iterations(inst)
    if config.mode == "vertex":
        M = config.M if config.M is not None else choose_M(inst)
        costs = m_penalty_costs(inst, M)
    else:
        M, costs = 0.0, inst.costs

    def build(routes):
        return _vertex_state(inst, routes, costs) if config.mode == "vertex" else _cluster_state(inst, routes)

    def contiguous(state: RouteState) -> bool:
        # under c' a split cluster can pay for itself by saving a route, so check explicitly
        if config.mode != "vertex":
            return True
        routes = _customers(state, "vertex")
        edges = penalized_edge_count(inst, routes)
        optima_edges.append(edges)
        return edges == len(routes) + inst.num_clusters

    best: RouteState | None = None
    history: list[float] = []
    optima_edges: list[int] = []
    iterations = 0
    rejected = 0
    for restart in range(config.n_restarts):
        if deadline is not None and time.perf_counter() > deadline and best is not None:
            break
        start_state = build(initial_solution(inst, rng).routes)
        state = local_search(start_state.copy(), rng, config.mode, deadline)
        if not contiguous(state):
            rejected += 1
            state = start_state
        incumbent = state
        fails = 0
        while fails < n_iter:
            if deadline is not None and time.perf_counter() > deadline:
                break
            iterations += 1
            cand = local_search(perturb(incumbent, rng, config.mode), rng, config.mode, deadline)
            ok = contiguous(cand)
            rejected += not ok
            if ok and cand.total() < incumbent.total() - EPS:
                incumbent, fails = cand, 0
            else:
                fails += 1
        history.append(incumbent.total())
        if best is None or incumbent.total() < best.total() - EPS:
            best = incumbent
        log.debug("restart %d: %.3f (best %.3f)", restart, incumbent.total(), best.total())

    routes = _customers(best, config.mode)
    cost = check_solution(inst, routes)
    stats = {
        "solver": "ils" if config.mode == "vertex" else "ils-clu",
        "objective": best.total(),
        "restart_costs": history,
        "iterations": iterations,
        "time": time.perf_counter() - start,
    }
    if config.mode == "vertex":
        stats["M"] = M
        stats["penalized_edges"] = penalized_edge_count(inst, routes)
        stats["local_optima_penalized_edges"] = optima_edges
        stats["rejected_optima"] = rejected
    return Solution(routes, cost, stats)

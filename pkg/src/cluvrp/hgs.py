"""Hybrid genetic search over cluster giant tours.

Individuals are permutations of clusters.  Split cuts a tour into at most m
routes by a layered shortest path whose arc costs come from the
concatenation engine, so every route is evaluated with its optimal
intra-cluster paths.  Offspring are educated by cluster-level local search on
capacity-penalized costs.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .concat import DEPOT, Engine
from .hampath import PathCostTable
from .instance import Instance
from .neighborhoods import EDUCATION, RouteState, rvnd
from .solution import Solution, check_solution

log = logging.getLogger(__name__)


@dataclass
class HgsConfig:
    mu_min: int = 8
    mu_gen: int = 8
    it_max: int = 400
    n_close: int = 3
    elite_weight: float = 0.4
    target_feasible: float = 0.25
    penalty_interval: int = 100
    penalty_factor: float = 1.2
    init_size: int | None = None  # None: 4 * mu_min
    repair_prob: float = 0.5
    seed: int = 0
    time_limit: float | None = 300.0


@dataclass(eq=False)
class Individual:
    tour: list[int]
    routes: list[list[int]]
    cost: float  # travel cost
    excess: int  # total capacity excess
    penalized: float = 0.0
    diversity: float = 0.0
    fitness: float = 0.0
    succ: dict[int, int] = field(default_factory=dict, repr=False)
    pred: dict[int, int] = field(default_factory=dict, repr=False)
    distances: dict[int, float] = field(default_factory=dict, repr=False)

    @property
    def feasible(self) -> bool:
        return self.excess == 0

    def reprice(self, penalty: float) -> None:
        self.penalized = self.cost + penalty * self.excess

    def index_pairs(self) -> None:
        self.succ.clear()
        self.pred.clear()
        for r in self.routes:
            seq = [DEPOT, *r, DEPOT]
            for a, b in zip(seq[1:-1], seq[2:]):
                self.succ[a] = b
            for a, b in zip(seq[:-2], seq[1:-1]):
                self.pred[b] = a


# -- genetic operators ----------------------------------------------------------------


def ox_crossover(p1: Sequence[int], p2: Sequence[int], rng=None, cuts: tuple[int, int] | None = None) -> list[int]:
    """Ordered crossover.

    The child keeps ``p1[a..b]`` (inclusive) in place and fills the other
    positions, starting after b and wrapping around, with the remaining
    elements in the order they appear in p2 read from position b + 1.
    """
    n = len(p1)
    if n != len(p2) or sorted(p1) != sorted(p2):
        raise ValueError("parents must be permutations of the same elements")
    if cuts is None:
        a, b = sorted(int(x) for x in rng.integers(0, n, size=2))
    else:
        a, b = cuts
    child: list[int | None] = [None] * n
    kept = set()
    for i in range(a, b + 1):
        child[i] = p1[i]
        kept.add(p1[i])
    pos = (b + 1) % n
    for t in range(n):
        x = p2[(b + 1 + t) % n]
        if x in kept:
            continue
        child[pos] = x
        pos = (pos + 1) % n
    return child  # type: ignore[return-value]


def split(
    tour: Sequence[int], engine: Engine, capacity: int, fleet: int, penalty: float
) -> tuple[list[list[int]], float]:
    """Optimal cut of ``tour`` into at most ``fleet`` consecutive routes.

    Arc (i, j) is the route tour[i:j] priced by the engine plus the capacity
    penalty; the best path with at most ``fleet`` arcs is found layer by layer.
    """
    N = len(tour)
    if N == 0:
        return [], 0.0
    arc = np.full((N + 1, N + 1), np.inf)
    depot = engine.depot()
    for i in range(N):
        acc = engine.concat(depot, engine.single(tour[i]))
        for j in range(i + 1, N + 1):
            if j > i + 1:
                acc = engine.concat(acc, engine.single(tour[j - 1]))
            back = engine.cross(tour[j - 1], DEPOT)[:, 0]
            cost = float((acc.S[0] + back).min())
            arc[i, j] = cost + penalty * max(0, acc.load - capacity)
    dist = np.full(N + 1, np.inf)
    dist[0] = 0.0
    layers_arg = []
    layers_dist = [dist]
    for _ in range(min(fleet, N)):
        tot = dist[:, None] + arc
        arg = tot.argmin(axis=0)
        dist = tot[arg, np.arange(N + 1)]
        layers_arg.append(arg)
        layers_dist.append(dist)
    k = int(np.argmin([d[N] for d in layers_dist[1:]])) + 1
    best = float(layers_dist[k][N])
    cuts = [N]
    j = N
    for layer in range(k, 0, -1):
        j = int(layers_arg[layer - 1][j])
        cuts.append(j)
    cuts.reverse()
    routes = [list(tour[a:b]) for a, b in zip(cuts, cuts[1:]) if b > a]
    return routes, best


def broken_pairs_distance(a: Individual, b: Individual) -> float:
    """Fraction of cluster adjacencies of ``a`` that are absent from ``b``."""
    n = len(a.tour)
    diff = 0
    for k in a.tour:
        sa, pa = a.succ[k], a.pred[k]
        sb, pb = b.succ[k], b.pred[k]
        if sa != sb and sa != pb:
            diff += 1
        if pa == DEPOT and pb != DEPOT and sb != DEPOT:
            diff += 1
    return diff / n


# -- population -------------------------------------------------------------------


class Population:
    def __init__(self, config: HgsConfig):
        self.config = config
        self.feasible: list[Individual] = []
        self.infeasible: list[Individual] = []

    @property
    def max_size(self) -> int:
        return self.config.mu_min + self.config.mu_gen

    def all(self) -> list[Individual]:
        return self.feasible + self.infeasible

    def insert(self, ind: Individual) -> None:
        ind.index_pairs()
        sub = self.feasible if ind.feasible else self.infeasible
        for other in sub:
            d = broken_pairs_distance(ind, other)
            ind.distances[id(other)] = d
            other.distances[id(ind)] = d
        sub.append(ind)
        if len(sub) > self.max_size:
            self.select_survivors(sub)
        else:
            update_biased_fitness(sub, self.config)

    def _remove(self, sub: list[Individual], ind: Individual) -> None:
        sub.remove(ind)
        for other in sub:
            other.distances.pop(id(ind), None)

    def select_survivors(self, sub: list[Individual]) -> None:
        while len(sub) > self.config.mu_min:
            update_biased_fitness(sub, self.config)
            best = min(sub, key=lambda x: x.penalized)
            candidates = [x for x in sub if x is not best]
            clones = [x for x in candidates if any(d == 0.0 for d in x.distances.values())]
            pool = clones or candidates
            worst = max(pool, key=lambda x: x.fitness)
            self._remove(sub, worst)
        update_biased_fitness(sub, self.config)

    def reprice(self, penalty: float) -> None:
        for ind in self.infeasible:
            ind.reprice(penalty)
        update_biased_fitness(self.infeasible, self.config)

    def tournament(self, rng) -> Individual:
        pool = self.all()
        a = pool[int(rng.integers(len(pool)))]
        b = pool[int(rng.integers(len(pool)))]
        return a if a.fitness <= b.fitness else b


def diversity_contribution(ind: Individual, others: Sequence[Individual], n_close: int) -> float:
    ds = sorted(ind.distances[id(o)] for o in others if o is not ind)
    if not ds:
        return 0.0
    near = ds[:n_close]
    return sum(near) / len(near)


def update_biased_fitness(sub: list[Individual], config: HgsConfig) -> None:
    """Rank-sum fitness: cost rank plus down-weighted diversity rank (lower is better)."""
    size = len(sub)
    if size == 0:
        return
    if size == 1:
        sub[0].diversity = 0.0
        sub[0].fitness = 0.0
        return
    for ind in sub:
        ind.diversity = diversity_contribution(ind, sub, config.n_close)
    by_cost = sorted(range(size), key=lambda i: (sub[i].penalized, i))
    by_div = sorted(range(size), key=lambda i: (-sub[i].diversity, i))
    cost_rank = [0.0] * size
    div_rank = [0.0] * size
    for r, i in enumerate(by_cost):
        cost_rank[i] = r / (size - 1)
    for r, i in enumerate(by_div):
        div_rank[i] = r / (size - 1)
    for i, ind in enumerate(sub):
        ind.fitness = cost_rank[i] + (1.0 - config.elite_weight) * div_rank[i]


biased_fitness = update_biased_fitness


class PenaltyController:
    """Capacity penalty adapted toward a target share of naturally feasible offspring."""

    def __init__(self, initial: float, mean_edge: float, config: HgsConfig):
        self.config = config
        self.lo = 1e-2 * mean_edge
        self.hi = 1e3 * mean_edge
        self.value = min(self.hi, max(self.lo, initial))
        self.window: list[bool] = []
        self.trace = [self.value]

    def record(self, feasible: bool) -> bool:
        """Log one education; returns True when the coefficient changed."""
        self.window.append(feasible)
        if len(self.window) < self.config.penalty_interval:
            return False
        share = sum(self.window) / len(self.window)
        self.window.clear()
        old = self.value
        if share < self.config.target_feasible:
            self.value = min(self.hi, self.value * self.config.penalty_factor)
        elif share > self.config.target_feasible:
            self.value = max(self.lo, self.value / self.config.penalty_factor)
        self.trace.append(self.value)
        return self.value != old


def adapt_penalties(controller: PenaltyController, population: Population) -> float:
    population.reprice(controller.value)
    return controller.value


# -- driver -------------------------------------------------------------------------


class Uhgs:
    def __init__(self, inst: Instance, table: PathCostTable, config: HgsConfig):
        self.inst = inst
        self.config = config
        self.engine = Engine.from_table(inst, table)
        self.rng = np.random.default_rng(config.seed)
        costs = inst.costs
        n = len(costs)
        mean_edge = float(costs.sum() / (n * (n - 1))) if n > 1 else 1.0
        initial = float(costs.max()) / max(1, int(inst.cluster_demand.max()))
        self.penalty = PenaltyController(initial, max(mean_edge, 1e-9), config)
        self.population = Population(config)
        self.best: Individual | None = None
        self.educations = 0

    def educate(self, routes: list[list[int]]) -> RouteState:
        state = RouteState(self.engine, routes, self.inst.capacity, self.inst.fleet, self.penalty.value)
        rvnd(state, EDUCATION, self.rng)
        return state

    def _individual(self, state: RouteState) -> Individual:
        routes = state.nonempty()
        ind = Individual(
            tour=[k for r in routes for k in r],
            routes=routes,
            cost=state.cost(),
            excess=state.excess(),
        )
        ind.reprice(self.penalty.value)
        return ind

    def make_individual(self, tour: Sequence[int]) -> list[Individual]:
        """Split and educate ``tour``; an infeasible result may also yield a repaired copy.

        Repair re-runs the education with the penalty raised tenfold, then a
        hundredfold, and keeps the outcome only if it became feasible.
        """
        routes, _ = split(tour, self.engine, self.inst.capacity, self.inst.fleet, self.penalty.value)
        state = self.educate(routes)
        ind = self._individual(state)
        self.educations += 1
        if self.penalty.record(ind.feasible):
            self.population.reprice(self.penalty.value)
            ind.reprice(self.penalty.value)
        out = [ind]
        if not ind.feasible and self.rng.random() < self.config.repair_prob:
            for factor in (10.0, 100.0):
                state.penalty = self.penalty.value * factor
                rvnd(state, EDUCATION, self.rng)
                if state.excess() == 0:
                    out.append(self._individual(state))
                    break
        return out

    def _offer_all(self, inds: list[Individual]) -> bool:
        improved = False
        for ind in inds:
            improved |= self._offer(ind)
        return improved

    def _offer(self, ind: Individual) -> bool:
        self.population.insert(ind)
        if ind.feasible and (self.best is None or ind.cost < self.best.cost - 1e-9):
            self.best = Individual(list(ind.tour), [list(r) for r in ind.routes], ind.cost, 0, ind.cost)
            return True
        return False

    def run(self) -> Solution:
        cfg = self.config
        start = time.perf_counter()
        deadline = start + cfg.time_limit if cfg.time_limit else None
        N = self.inst.num_clusters
        history = []
        for _ in range(cfg.init_size or 4 * cfg.mu_min):
            self._offer_all(self.make_individual(self.rng.permutation(N).tolist()))
            history.append(self.best.cost if self.best else None)
            if deadline is not None and time.perf_counter() > deadline:
                break
        stall = 0
        iterations = 0
        while stall < cfg.it_max:
            if deadline is not None and time.perf_counter() > deadline:
                break
            p1 = self.population.tournament(self.rng)
            p2 = self.population.tournament(self.rng)
            child = ox_crossover(p1.tour, p2.tour, self.rng)
            improved = self._offer_all(self.make_individual(child))
            # before any feasible solution exists only the time limit or the cap stops the search
            stall = 0 if improved else stall + (1 if self.best is not None else 0.1)
            iterations += 1
            history.append(self.best.cost if self.best else None)
        if self.best is None:
            raise RuntimeError("no feasible solution found")
        routes = [self.engine.decode(r)[1] for r in self.best.routes]
        cost = check_solution(self.inst, routes)
        stats = {
            "solver": "uhgs",
            "objective": self.best.cost,
            "iterations": iterations,
            "educations": self.educations,
            "best_history": history,
            "penalty_trace": self.penalty.trace,
            "time": time.perf_counter() - start,
        }
        return Solution(routes, cost, stats)


def run_uhgs(inst: Instance, table: PathCostTable, config: HgsConfig | None = None) -> Solution:
    return Uhgs(inst, table, config or HgsConfig()).run()

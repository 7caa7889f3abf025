"""Solutions and an independent feasibility/cost checker."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .instance import Instance, edge_cost


class InfeasibleSolution(ValueError):
    pass


@dataclass
class Solution:
    routes: list[list[int]]  # customer visit orders, depot omitted
    cost: float
    stats: dict = field(default_factory=dict)

    def cluster_routes(self, inst: Instance) -> list[list[int]]:
        return [cluster_sequence(inst, r) for r in self.routes]

    def to_dict(self) -> dict:
        return {"cost": self.cost, "routes": self.routes, "stats": self.stats}


def cluster_sequence(inst: Instance, route: Sequence[int]) -> list[int]:
    """Clusters in visiting order, one entry per maximal run of a cluster."""
    owner = inst.cluster_of
    seq: list[int] = []
    for v in route:
        k = int(owner[v])
        if not seq or seq[-1] != k:
            seq.append(k)
    return seq


def route_travel_cost(inst: Instance, route: Sequence[int]) -> float:
    seq = [0, *route, 0]
    return sum(edge_cost(inst, a, b) for a, b in zip(seq, seq[1:])) if route else 0.0


def check_solution(inst: Instance, routes: Sequence[Sequence[int]]) -> float:
    """Validate a customer-level solution and return its cost recomputed from coordinates.

    Checks coverage, fleet size, capacity and cluster contiguity; raises
    ``InfeasibleSolution`` on the first violation.
    """
    used = [r for r in routes if len(r)]
    if len(used) > inst.fleet:
        raise InfeasibleSolution(f"{len(used)} routes exceed fleet size {inst.fleet}")
    seen: dict[int, int] = {}
    for ri, r in enumerate(used):
        for v in r:
            if not 1 <= v <= inst.n:
                raise InfeasibleSolution(f"route {ri} visits unknown vertex {v}")
            if v in seen:
                raise InfeasibleSolution(f"customer {v} visited twice")
            seen[v] = ri
        load = sum(int(inst.demand[v]) for v in r)
        if load > inst.capacity:
            raise InfeasibleSolution(f"route {ri} load {load} exceeds capacity {inst.capacity}")
    if len(seen) != inst.n:
        missing = sorted(set(range(1, inst.n + 1)) - set(seen))
        raise InfeasibleSolution(f"customers not visited: {missing[:10]}")
    for r in used:
        runs = cluster_sequence(inst, r)
        if len(runs) != len(set(runs)):
            raise InfeasibleSolution("a cluster is visited in more than one run")
    runs_all = [k for r in used for k in cluster_sequence(inst, r)]
    if len(runs_all) != len(set(runs_all)):
        raise InfeasibleSolution("a cluster is split across routes")
    return sum(route_travel_cost(inst, r) for r in used)

"""Move families over item routes, intra-cluster descents and the M-penalty transform.

Every move is described by the new content of each route it touches, written
as a list of ``Seg`` references into the current route tables.  The same
description drives both the concatenation-based evaluation and the
application, so an applied move changes the cost by exactly its delta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .concat import DEPOT, Engine, RouteTable, Seg, evaluate_move_concat
from .instance import Instance

EPS = 1e-6

NL_C = ("relocate1", "relocate2", "swap11", "swap21", "swap22", "two_opt_star")
INTRA_ROUTE = ("or_opt", "two_opt", "intra_swap")
EDUCATION = ("two_opt", "two_opt_star", "cross", "icross")


@dataclass(frozen=True)
class Move:
    kind: str
    changes: tuple[tuple[int, tuple[Seg, ...]], ...]
    delta: float


class RouteState:
    """Routes of items with their all-pairs tables.

    With ``penalty=None`` capacity is a hard constraint; otherwise a route is
    valued at cost + penalty * excess load.  While fewer than ``fleet`` routes
    are used, one empty route is kept at the end as a move target.
    """

    def __init__(self, engine: Engine, routes: Sequence[Sequence[int]], capacity: int, fleet: int, penalty=None):
        self.engine = engine
        self.capacity = capacity
        self.fleet = fleet
        self.penalty = penalty
        self.routes: list[list[int]] = [list(r) for r in routes if len(r)]
        if len(self.routes) > fleet:
            raise ValueError(f"{len(self.routes)} routes exceed the fleet of {fleet}")
        if len(self.routes) < fleet:
            self.routes.append([])
        self.tables: list[RouteTable] = [engine.route_table(r) for r in self.routes]

    def copy(self) -> "RouteState":
        new = object.__new__(RouteState)
        new.__dict__.update(self.__dict__)
        if "_fixed" in self.engine.__dict__:
            new.engine = self.engine.fork()
        new.routes = [list(r) for r in self.routes]
        new.tables = list(self.tables)
        return new

    # -- values -------------------------------------------------------------

    def route_value(self, cost: float, load: int) -> float:
        if self.penalty is None:
            return cost
        return cost + self.penalty * max(0, load - self.capacity)

    def value(self, r: int) -> float:
        t = self.tables[r]
        return self.route_value(t.cost, t.load)

    def total(self) -> float:
        return sum(self.value(r) for r in range(len(self.routes)))

    def cost(self) -> float:
        return sum(t.cost for t in self.tables)

    def excess(self) -> int:
        return sum(max(0, t.load - self.capacity) for t in self.tables)

    def nonempty(self) -> list[list[int]]:
        return [list(r) for r in self.routes if r]

    # -- segments -----------------------------------------------------------

    def piece(self, seg: Seg):
        sub = self.tables[seg.route].sub(seg.u, seg.v)
        return sub.reversed() if seg.rev else sub

    def seg_load(self, seg: Seg) -> int:
        return self.tables[seg.route].seg_load(seg.u, seg.v)

    def evaluate(self, segs: Sequence[Seg]) -> tuple[float, int]:
        if self.engine.scalar:
            return self._evaluate_scalar(segs)
        pieces = [self.piece(s) for s in segs]
        return evaluate_move_concat(self.engine, pieces), sum(p.load for p in pieces)

    def _evaluate_scalar(self, segs: Sequence[Seg]) -> tuple[float, int]:
        """Edge-sum pricing for single-vertex items; matches the concatenation result."""
        C = self.engine._clist
        total = 0.0
        load = 0
        prev = 0
        for s in segs:
            t = self.tables[s.route]
            a, b = t.verts[s.u], t.verts[s.v]
            if s.rev:
                a, b = b, a
            total += C[prev][a] + (t.pre[s.v] - t.pre[s.u])
            load += t._cum[s.v + 1] - t._cum[s.u]
            prev = b
        return total + C[prev][0], load

    def realize(self, segs: Sequence[Seg]) -> list[int]:
        out: list[int] = []
        for s in segs:
            ext = self.tables[s.route].ext
            part = [k for k in ext[s.u : s.v + 1] if k != DEPOT]
            out.extend(reversed(part) if s.rev else part)
        return out

    # -- moves --------------------------------------------------------------

    def apply(self, move: Move) -> None:
        new_items = {r: self.realize(segs) for r, segs in move.changes}
        for r, items in new_items.items():
            self.routes[r] = items
            self.tables[r] = self.engine.route_table(items)
        self.normalize()

    def set_route(self, r: int, items: Sequence[int]) -> None:
        self.routes[r] = list(items)
        self.tables[r] = self.engine.route_table(items)

    def refresh(self, r: int) -> None:
        self.tables[r] = self.engine.route_table(self.routes[r])

    def normalize(self) -> None:
        keep = [i for i, r in enumerate(self.routes) if r]
        self.routes = [self.routes[i] for i in keep]
        self.tables = [self.tables[i] for i in keep]
        if len(self.routes) < self.fleet:
            self.routes.append([])
            self.tables.append(self.engine.route_table([]))

    def decode(self) -> list[list[int]]:
        return [self.engine.decode(r)[1] for r in self.routes if r]


def _clean(segs) -> tuple[Seg, ...]:
    return tuple(s for s in segs if s.u <= s.v)


# -- move generators ------------------------------------------------------------
#
# Each yields ``changes``: tuple of (route index, segments).  Positions follow
# the extended-route convention: items at 1..L, depot at 0 and L + 1.


def _lens(state: RouteState) -> list[int]:
    return [len(r) for r in state.routes]


def _gen_relocate(state: RouteState, width: int) -> Iterator:
    L = _lens(state)
    for r1 in range(len(L)):
        for u in range(1, L[r1] - width + 2):
            src = (Seg(r1, 0, u - 1), Seg(r1, u + width, L[r1] + 1))
            for r2 in range(len(L)):
                if r2 == r1 or (L[r2] == 0 and L[r1] == width):
                    continue
                for p in range(0, L[r2] + 1):
                    dst = (Seg(r2, 0, p), Seg(r1, u, u + width - 1), Seg(r2, p + 1, L[r2] + 1))
                    yield ((r1, _clean(src)), (r2, _clean(dst)))


def _gen_swap(state: RouteState, w1: int, w2: int) -> Iterator:
    L = _lens(state)
    symmetric = w1 == w2
    for r1 in range(len(L)):
        for r2 in range(r1 + 1 if symmetric else 0, len(L)):
            if r1 == r2:
                continue
            for u in range(1, L[r1] - w1 + 2):
                for v in range(1, L[r2] - w2 + 2):
                    a = (Seg(r1, 0, u - 1), Seg(r2, v, v + w2 - 1), Seg(r1, u + w1, L[r1] + 1))
                    b = (Seg(r2, 0, v - 1), Seg(r1, u, u + w1 - 1), Seg(r2, v + w2, L[r2] + 1))
                    yield ((r1, _clean(a)), (r2, _clean(b)))


def _gen_two_opt_star(state: RouteState) -> Iterator:
    L = _lens(state)
    for r1 in range(len(L)):
        for r2 in range(r1 + 1, len(L)):
            l1, l2 = L[r1], L[r2]
            for u in range(0, l1 + 1):
                for v in range(0, l2 + 1):
                    if not ((u == 0 and v == 0) or (u == l1 and v == l2)):
                        a = (Seg(r1, 0, u), Seg(r2, v + 1, l2 + 1))
                        b = (Seg(r2, 0, v), Seg(r1, u + 1, l1 + 1))
                        yield ((r1, _clean(a)), (r2, _clean(b)))
                    if not ((u == l1 and v == 0) or (u == 0 and v == l2)):
                        a = (Seg(r1, 0, u), Seg(r2, 1, v, True), Seg(r1, l1 + 1, l1 + 1))
                        b = (Seg(r2, 0, 0), Seg(r1, u + 1, l1, True), Seg(r2, v + 1, l2 + 1))
                        yield ((r1, _clean(a)), (r2, _clean(b)))


def _gen_cross(state: RouteState, reverse: bool) -> Iterator:
    L = _lens(state)
    for r1 in range(len(L)):
        for r2 in range(r1 + 1, len(L)):
            for w1 in range(3):
                for w2 in range(3):
                    if w1 == 0 and w2 == 0:
                        continue
                    if reverse and w1 < 2 and w2 < 2:
                        continue  # reversal changes nothing for single items
                    for u in range(1, L[r1] - w1 + 2):
                        for v in range(1, L[r2] - w2 + 2):
                            a = (Seg(r1, 0, u - 1), Seg(r2, v, v + w2 - 1, reverse), Seg(r1, u + w1, L[r1] + 1))
                            b = (Seg(r2, 0, v - 1), Seg(r1, u, u + w1 - 1, reverse), Seg(r2, v + w2, L[r2] + 1))
                            yield ((r1, _clean(a)), (r2, _clean(b)))


def _gen_or_opt(state: RouteState, widths) -> Iterator:
    L = _lens(state)
    for r in range(len(L)):
        n = L[r]
        for w in widths:
            for u in range(1, n - w + 2):
                for p in range(0, n + 1):
                    if u - 1 <= p <= u + w - 1:
                        continue
                    seg = Seg(r, u, u + w - 1)
                    if p < u - 1:
                        segs = (Seg(r, 0, p), seg, Seg(r, p + 1, u - 1), Seg(r, u + w, n + 1))
                    else:
                        segs = (Seg(r, 0, u - 1), Seg(r, u + w, p), seg, Seg(r, p + 1, n + 1))
                    yield ((r, _clean(segs)),)


def _gen_two_opt(state: RouteState) -> Iterator:
    for r, n in enumerate(_lens(state)):
        for u in range(1, n):
            for v in range(u + 1, n + 1):
                yield ((r, (Seg(r, 0, u - 1), Seg(r, u, v, True), Seg(r, v + 1, n + 1))),)


def _gen_intra_swap(state: RouteState) -> Iterator:
    for r, n in enumerate(_lens(state)):
        for u in range(1, n):
            for v in range(u + 1, n + 1):
                segs = (Seg(r, 0, u - 1), Seg(r, v, v), Seg(r, u + 1, v - 1), Seg(r, u, u), Seg(r, v + 1, n + 1))
                yield ((r, _clean(segs)),)


GENERATORS = {
    "relocate1": lambda s: _gen_relocate(s, 1),
    "relocate2": lambda s: _gen_relocate(s, 2),
    "swap11": lambda s: _gen_swap(s, 1, 1),
    "swap21": lambda s: _gen_swap(s, 2, 1),
    "swap22": lambda s: _gen_swap(s, 2, 2),
    "two_opt_star": _gen_two_opt_star,
    "cross": lambda s: _gen_cross(s, False),
    "icross": lambda s: _gen_cross(s, True),
    "or_opt": lambda s: _gen_or_opt(s, (1, 2, 3)),
    "two_opt": _gen_two_opt,
    "intra_swap": _gen_intra_swap,
}


def enumerate_moves(state: RouteState, kind: str, routes: set[int] | None = None) -> Iterator[Move]:
    """Every capacity-admissible move of ``kind`` with its exact delta.

    ``routes`` optionally restricts to moves touching only those routes.
    """
    cache: dict[tuple[int, tuple[Seg, ...]], tuple[float, int]] = {}
    hard = state.penalty is None
    Q = state.capacity
    base = [state.value(r) for r in range(len(state.routes))]
    cums = [t._cum for t in state.tables]
    for changes in GENERATORS[kind](state):
        if routes is not None and any(r not in routes for r, _ in changes):
            continue
        if hard and any(sum(cums[s.route][s.v + 1] - cums[s.route][s.u] for s in segs) > Q for _, segs in changes):
            continue
        delta = 0.0
        for r, segs in changes:
            key = (r, segs)
            val = cache.get(key)
            if val is None:
                cost, load = state.evaluate(segs)
                val = cache[key] = (state.route_value(cost, load), load)
            delta += val[0] - base[r]
        yield Move(kind, changes, delta)


def best_move(state: RouteState, kind: str, routes: set[int] | None = None) -> Move | None:
    """Most improving move of ``kind``; ties keep the first in enumeration order."""
    best = None
    for mv in enumerate_moves(state, kind, routes):
        if mv.delta < -EPS and (best is None or mv.delta < best.delta):
            best = mv
    return best


enumerate_cluster_moves = enumerate_moves


def rvnd(state: RouteState, kinds: Sequence[str], rng, routes: set[int] | None = None) -> bool:
    """Random-order descent over ``kinds``: a successful kind resets the list."""
    improved = False
    pending = list(kinds)
    while pending:
        kind = pending[rng.integers(len(pending))]
        mv = best_move(state, kind, routes)
        if mv is None:
            pending.remove(kind)
            continue
        state.apply(mv)
        improved = True
        pending = list(kinds)
    return improved


# -- intra-cluster path descents -------------------------------------------------


def _path_cost(costs: np.ndarray, path: Sequence[int], before: int, after: int) -> float:
    total = costs[before, path[0]] + costs[path[-1], after]
    for a, b in zip(path, path[1:]):
        total += costs[a, b]
    return float(total)


def _path_moves(lam: int, endpoints_only: bool) -> Iterator[tuple[str, int, int]]:
    ends = {0, lam - 1}
    for i in range(lam):
        for j in range(lam):
            if i == j:
                continue
            if not endpoints_only or i in ends:
                yield ("relocate", i, j)
            if i < j:
                if not endpoints_only or i in ends or j in ends:
                    yield ("swap", i, j)
                    if j > i + 1:
                        yield ("two_opt", i, j)


def _apply_path_move(path: list[int], kind: str, i: int, j: int) -> list[int]:
    p = list(path)
    if kind == "relocate":
        v = p.pop(i)
        p.insert(j, v)
    elif kind == "swap":
        p[i], p[j] = p[j], p[i]
    else:
        p[i : j + 1] = p[i : j + 1][::-1]
    return p


def improve_path(costs: np.ndarray, path: Sequence[int], before: int, after: int, endpoints_only: bool) -> list[int]:
    """First-improvement descent on one cluster path between fixed outside neighbours."""
    path = list(path)
    if len(path) < 2:
        return path
    cur = _path_cost(costs, path, before, after)
    improved = True
    while improved:
        improved = False
        for kind, i, j in _path_moves(len(path), endpoints_only):
            cand = _apply_path_move(path, kind, i, j)
            val = _path_cost(costs, cand, before, after)
            if val < cur - EPS:
                path, cur, improved = cand, val, True
                break
    return path


def _search_route_paths(state: RouteState, r: int, endpoints_only: bool) -> bool:
    engine = state.engine
    items = state.routes[r]
    if not items:
        return False
    _, seq = engine.decode(items)
    costs = engine.costs
    pos = 0
    changed = False
    blocks = []
    for k in items:
        lam = len(engine.members[k])
        blocks.append((k, seq[pos : pos + lam]))
        pos += lam
    prev = 0
    for t, (k, block) in enumerate(blocks):
        nxt = blocks[t + 1][1][0] if t + 1 < len(blocks) else 0
        new = improve_path(costs, block, prev, nxt, endpoints_only)
        if new != block:
            engine.set_path(k, new)
            blocks[t] = (k, new)
            changed = True
        prev = blocks[t][1][-1]
    if changed:
        state.refresh(r)
    return changed


def endpoints_search(state: RouteState, routes: set[int] | None = None) -> bool:
    """Intra-cluster Relocate/Swap/2-opt moves involving a cluster's first or last customer.

    The cluster order of each route is unchanged.  Requires a fixed-path engine.
    """
    changed = False
    for r in range(len(state.routes)) if routes is None else sorted(routes):
        changed |= _search_route_paths(state, r, endpoints_only=True)
    return changed


def intra_cluster_search(state: RouteState) -> bool:
    """Full intra-cluster descent with free endpoints on every route."""
    changed = False
    for r in range(len(state.routes)):
        changed |= _search_route_paths(state, r, endpoints_only=False)
    return changed


# -- M-penalty ------------------------------------------------------------------


def m_penalty_costs(inst: Instance, M: float) -> np.ndarray:
    """c'_ij = c_ij + M across clusters and between the depot and a customer."""
    if M <= 0:
        raise ValueError("M must be positive")
    owner = inst.cluster_of
    crossing = owner[:, None] != owner[None, :]
    out = inst.costs + M * crossing
    out.setflags(write=False)
    return out


def choose_M(inst: Instance) -> float:
    """n * max edge + 1: larger than any route plan's total travel cost."""
    return float(inst.n * inst.costs.max() + 1)


def penalized_edge_count(inst: Instance, routes: Sequence[Sequence[int]]) -> int:
    owner = inst.cluster_of
    count = 0
    for r in routes:
        if not r:
            continue
        seq = [0, *r, 0]
        count += sum(1 for a, b in zip(seq, seq[1:]) if owner[a] != owner[b])
    return count

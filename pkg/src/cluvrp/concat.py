"""Route evaluation by subsequence concatenation.

A route is a sequence of *items* (clusters, or single customers at vertex
level).  For a subsequence of items, ``S[i, j]`` is the cheapest cost of a
path entering the first item at its i-th member, visiting every member of
every item with each item served contiguously, and leaving the last item at
its j-th member.  Two subsequences merge with

    S(a + b)[i, j] = min_{x, y} S(a)[i, x] + c[x, y] + S(b)[y, j]

where x ranges over members of a's last item and y over members of b's first.
The depot is a pseudo-item (index ``DEPOT``) with the single member 0, so a
route's cost is the 1x1 matrix of ``depot + items + depot``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .hampath import PathCostTable
from .instance import Instance

DEPOT = -1
INF = np.inf


@dataclass(frozen=True)
class Subsequence:
    first: int
    last: int
    S: np.ndarray
    load: int

    def reversed(self) -> "Subsequence":
        """Same subsequence traversed backwards (valid for symmetric costs)."""
        return Subsequence(self.last, self.first, self.S.T, self.load)


def minplus(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[1] == 1:
        return a + b  # inner dimension 1: plain broadcast sum
    return (a[:, :, None] + b[None, :, :]).min(axis=1)


class Engine:
    """Item data shared by all routes of one solve: members, loads, single-item matrices.

    ``members[DEPOT]`` is the depot; the cost matrix may be penalized.
    """

    def __init__(
        self,
        costs: np.ndarray,
        members: Sequence[Sequence[int]],
        loads: Sequence[int],
        singles: Sequence[np.ndarray],
        path_of: Callable[[int, int, int], tuple[int, ...]],
    ):
        if not np.array_equal(costs, costs.T):
            raise ValueError("concatenation engine requires symmetric costs")
        self.costs = costs
        self.members = [np.asarray(m, dtype=np.int64) for m in members] + [np.array([0])]
        self.loads = [int(q) for q in loads] + [0]
        self._singles = [Subsequence(k, k, np.asarray(s, dtype=float), self.loads[k]) for k, s in enumerate(singles)]
        self._singles.append(Subsequence(DEPOT, DEPOT, np.zeros((1, 1)), 0))
        self._path_of = path_of
        self._cross: dict[tuple[int, int], np.ndarray] = {}
        # every item a single vertex: routes can be priced with plain edge sums
        self.scalar = all(len(m) == 1 for m in self.members)
        self._vertex = [int(m[0]) for m in self.members] if self.scalar else None
        self._clist = costs.tolist() if self.scalar else None

    @property
    def num_items(self) -> int:
        return len(self.members) - 1

    # -- constructors -------------------------------------------------------

    @classmethod
    def from_table(cls, inst: Instance, table: PathCostTable, costs: np.ndarray | None = None) -> "Engine":
        """Cluster items with exact Hamiltonian path matrices."""
        return cls(
            inst.costs if costs is None else costs,
            inst.clusters,
            inst.cluster_demand,
            table.costs,
            lambda k, i, j: table.paths[k][i, j],
        )

    @classmethod
    def from_paths(cls, inst: Instance, paths: Sequence[Sequence[int]], costs: np.ndarray | None = None) -> "Engine":
        """Cluster items whose internal visiting order is fixed (either direction allowed)."""
        costs = inst.costs if costs is None else costs
        eng = cls(costs, inst.clusters, inst.cluster_demand, [np.zeros((1, 1))] * len(inst.clusters), None)
        eng._fixed = [tuple(p) for p in paths]
        eng._path_of = eng._fixed_path
        for k, p in enumerate(paths):
            eng.set_path(k, p)
        return eng

    @classmethod
    def vertex_level(cls, inst: Instance, costs: np.ndarray | None = None) -> "Engine":
        """One item per customer (item k is customer k + 1)."""
        n = inst.n
        return cls(
            inst.costs if costs is None else costs,
            [(v,) for v in range(1, n + 1)],
            inst.demand[1:],
            [np.zeros((1, 1))] * n,
            lambda k, i, j: (k + 1,),
        )

    def _fixed_path(self, k: int, i: int, j: int) -> tuple[int, ...]:
        p = self._fixed[k]
        m = self.members[k]
        if len(p) == 1 or m[i] == p[0]:
            return p
        return p[::-1]

    def set_path(self, k: int, path: Sequence[int]) -> None:
        """Fix the internal order of item k (engines built with ``from_paths`` only)."""
        path = tuple(int(v) for v in path)
        members = self.members[k].tolist()
        if sorted(path) != sorted(members):
            raise ValueError(f"path {path} is not a permutation of item {k}")
        self._fixed[k] = path
        lam = len(members)
        S = np.zeros((1, 1)) if lam == 1 else np.full((lam, lam), INF)
        if lam > 1:
            inner = float(sum(self.costs[a, b] for a, b in zip(path, path[1:])))
            e, x = members.index(path[0]), members.index(path[-1])
            S[e, x] = S[x, e] = inner
        self._singles[k] = Subsequence(k, k, S, self.loads[k])

    def path(self, k: int) -> tuple[int, ...]:
        return self._fixed[k]

    def fork(self) -> "Engine":
        """Copy whose fixed paths can change independently (cost caches stay shared)."""
        new = object.__new__(Engine)
        new.__dict__.update(self.__dict__)
        new._singles = list(self._singles)
        if "_fixed" in self.__dict__:
            new._fixed = list(self._fixed)
            new._path_of = new._fixed_path
        return new

    # -- primitives ---------------------------------------------------------

    def single(self, k: int) -> Subsequence:
        return self._singles[k]

    def depot(self) -> Subsequence:
        return self._singles[DEPOT]

    def cross(self, a: int, b: int) -> np.ndarray:
        key = (a, b)
        mat = self._cross.get(key)
        if mat is None:
            mat = self.costs[np.ix_(self.members[a], self.members[b])]
            self._cross[key] = mat
        return mat

    def concat(self, a: Subsequence, b: Subsequence) -> Subsequence:
        X = self.cross(a.last, b.first)
        return Subsequence(a.first, b.last, minplus(minplus(a.S, X), b.S), a.load + b.load)

    def fold(self, pieces: Iterable[Subsequence]) -> Subsequence:
        it = iter(pieces)
        acc = next(it)
        for p in it:
            acc = self.concat(acc, p)
        return acc

    def item_path(self, k: int, i: int, j: int) -> tuple[int, ...]:
        if k == DEPOT:
            return ()
        return self._path_of(k, i, j)

    # -- whole routes -------------------------------------------------------

    def route_cost(self, items: Sequence[int]) -> float:
        """Cost of depot -> items -> depot by a single forward pass (no preprocessing)."""
        return self.decode(items)[0]

    def decode(self, items: Sequence[int]) -> tuple[float, list[int]]:
        """Optimal customer order for a route given as an item sequence.

        Layered shortest path with back-pointers; each item contributes its
        entry/exit choice and the stored path between them.
        """
        if not items:
            return 0.0, []
        f = self.cross(DEPOT, items[0])[0].copy()  # best cost reaching each entry of items[0]
        choices = []
        prev = None
        for t, k in enumerate(items):
            if t > 0:
                X = self.cross(prev, k)
                tot = f[:, None] + X
                arg_in = tot.argmin(axis=0)
                f = tot[arg_in, np.arange(tot.shape[1])]
            else:
                arg_in = None
            S = self._singles[k].S
            tot = f[:, None] + S
            arg_entry = tot.argmin(axis=0)
            f = tot[arg_entry, np.arange(tot.shape[1])]
            choices.append((arg_in, arg_entry))
            prev = k
        back = self.cross(items[-1], DEPOT)[:, 0]
        tot = f + back
        exit_idx = int(tot.argmin())
        cost = float(tot[exit_idx])
        seq: list[tuple[int, ...]] = []
        for t in range(len(items) - 1, -1, -1):
            arg_in, arg_entry = choices[t]
            entry_idx = int(arg_entry[exit_idx])
            seq.append(self.item_path(items[t], entry_idx, exit_idx))
            if arg_in is not None:
                exit_idx = int(arg_in[entry_idx])
        out: list[int] = []
        for part in reversed(seq):
            out.extend(part)
        return cost, out

    def route_table(self, items: Sequence[int]) -> "RouteTable":
        return RouteTable(self, items)


class RouteTable:
    """All-pairs subsequence data for one route.

    Positions are in the extended route ``[DEPOT, *items, DEPOT]``: 0 and
    ``len(items) + 1`` are the depot.  ``sub(u, v)`` is S of positions u..v.
    """

    def __init__(self, engine: Engine, items: Sequence[int]):
        self.engine = engine
        self.items = list(items)
        ext = [DEPOT, *self.items, DEPOT]
        self.ext = ext
        size = len(ext)
        self._cum = [0, *itertools.accumulate(engine.loads[k] for k in ext)]
        if engine.scalar:
            # prefix distances replace the all-pairs table
            self.verts = [engine._vertex[k] for k in ext]
            C = engine._clist
            self.pre = [0.0, *itertools.accumulate(C[a][b] for a, b in zip(self.verts, self.verts[1:]))]
            self._subs = None
            return
        self._subs: list[list[Subsequence]] = []
        for u in range(size):
            row = []
            cur = engine.single(ext[u])
            row.append(cur)
            for v in range(u + 1, size):
                cur = engine.concat(cur, engine.single(ext[v]))
                row.append(cur)
            self._subs.append(row)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def cost(self) -> float:
        if self._subs is None:
            return float(self.pre[-1])
        return float(self._subs[0][-1].S[0, 0])

    @property
    def load(self) -> int:
        return self._cum[-1]

    def sub(self, u: int, v: int) -> Subsequence:
        if self._subs is None:
            S = np.array([[self.pre[v] - self.pre[u]]])
            return Subsequence(self.ext[u], self.ext[v], S, self.seg_load(u, v))
        return self._subs[u][v - u]

    def seg_load(self, u: int, v: int) -> int:
        return self._cum[v + 1] - self._cum[u]


def preprocess_route_all_pairs(engine: Engine, items: Sequence[int]) -> dict[tuple[int, int], Subsequence]:
    """S of every contiguous item run u..v (1-based positions within ``items``)."""
    table = RouteTable(engine, items)
    r = len(items)
    return {(u, v): table.sub(u, v) for u in range(1, r + 1) for v in range(u, r + 1)}


class Seg(NamedTuple):
    """Reference to positions u..v of a route table, optionally reversed."""

    route: int
    u: int
    v: int
    rev: bool = False


def evaluate_move_concat(engine: Engine, pieces: Sequence[Subsequence]) -> float:
    """Cost of the route depot + pieces + depot, pieces taken from route tables."""
    it = iter(pieces)
    acc = next(it, engine.depot())
    if acc.first != DEPOT:
        acc = engine.concat(engine.depot(), acc)
    for p in it:
        acc = engine.concat(acc, p)
    if acc.last != DEPOT:
        acc = engine.concat(acc, engine.depot())
    return float(acc.S[0, 0])


# -- module-level helpers mirroring the single-cluster / route API -----------


def init_single(engine: Engine, k: int) -> Subsequence:
    return engine.single(k)


def concat(engine: Engine, a: Subsequence, b: Subsequence) -> Subsequence:
    return engine.concat(a, b)


def route_cost(engine: Engine, items: Sequence[int]) -> tuple[float, tuple[int, int] | None]:
    """Route cost and the (first, last) customers of the optimal decoding."""
    cost, seq = engine.decode(items)
    return cost, ((seq[0], seq[-1]) if seq else None)


def decode_customers(engine: Engine, items: Sequence[int]) -> list[int]:
    return engine.decode(items)[1]

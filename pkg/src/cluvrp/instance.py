"""CluVRP instance model, TSPLIB-style I/O and clustered-instance generation.

Vertex 0 is the depot, vertices 1..n are customers.  In files, node ids are
1-based and the depot is node 1 unless a DEPOT_SECTION says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

ROUNDING_MODES = ("nint", "exact")
_WEIGHT_TYPES = {"EUC_2D": "nint", "EXACT_2D": "exact"}


class InstanceError(ValueError):
    """Malformed or infeasible instance data."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Instance:
    name: str
    coords: np.ndarray  # (n+1, 2), row 0 is the depot
    demand: np.ndarray  # (n+1,), demand[0] == 0
    capacity: int
    fleet: int
    clusters: tuple[tuple[int, ...], ...]
    rounding: str = "nint"
    comment: str = field(default="", compare=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        demand = np.asarray(self.demand, dtype=np.int64).copy()
        coords.setflags(write=False)
        demand.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "demand", demand)
        object.__setattr__(self, "clusters", tuple(tuple(int(v) for v in c) for c in self.clusters))
        self.validate()

    # -- derived data -------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.coords) - 1

    @property
    def num_clusters(self) -> int:
        """Number of customer clusters N (the depot is not counted)."""
        return len(self.clusters)

    @property
    def num_sets(self) -> int:
        """Set count as reported in benchmark tables: customer clusters plus the depot set."""
        return len(self.clusters) + 1

    @property
    def total_demand(self) -> int:
        return int(self.demand.sum())

    @cached_property
    def cluster_of(self) -> np.ndarray:
        owner = np.full(self.n + 1, -1, dtype=np.int64)
        for k, members in enumerate(self.clusters):
            owner[list(members)] = k
        owner.setflags(write=False)
        return owner

    @cached_property
    def cluster_demand(self) -> np.ndarray:
        out = np.array([self.demand[list(c)].sum() for c in self.clusters], dtype=np.int64)
        out.setflags(write=False)
        return out

    @cached_property
    def costs(self) -> np.ndarray:
        """Dense symmetric cost matrix with zero diagonal."""
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        if self.rounding == "nint":
            dist = np.floor(dist + 0.5)
        dist.setflags(write=False)
        return dist

    def validate(self) -> None:
        if self.rounding not in ROUNDING_MODES:
            raise InstanceError(f"unknown rounding mode {self.rounding!r}")
        n = self.n
        if n < 1:
            raise InstanceError("instance has no customers")
        if len(self.demand) != n + 1:
            raise InstanceError("demand vector length does not match coordinates")
        if self.capacity <= 0 or self.fleet <= 0:
            raise InstanceError("capacity and fleet must be positive")
        if self.demand[0] != 0:
            raise InstanceError("depot demand must be zero")
        if np.any(self.demand[1:] <= 0):
            bad = int(np.flatnonzero(self.demand[1:] <= 0)[0]) + 1
            raise InstanceError(f"customer {bad} has non-positive demand")
        if not self.clusters:
            raise InstanceError("no clusters")
        seen: set[int] = set()
        for k, members in enumerate(self.clusters):
            if not members:
                raise InstanceError(f"cluster {k} is empty")
            for v in members:
                if v == 0:
                    raise InstanceError("depot cannot belong to a customer cluster")
                if not 1 <= v <= n:
                    raise InstanceError(f"cluster {k} references unknown vertex {v}")
                if v in seen:
                    raise InstanceError(f"duplicate cluster membership for vertex {v}")
                seen.add(v)
            load = int(self.demand[list(members)].sum())
            if load > self.capacity:
                raise InstanceError(f"cluster {k} demand {load} exceeds capacity {self.capacity}")
        if len(seen) != n:
            missing = sorted(set(range(1, n + 1)) - seen)
            raise InstanceError(f"customers not covered by any cluster: {missing[:10]}")

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.name == other.name
            and self.capacity == other.capacity
            and self.fleet == other.fleet
            and self.rounding == other.rounding
            and self.clusters == other.clusters
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.demand, other.demand)
        )

    __hash__ = object.__hash__

    def with_clusters(self, clusters: Sequence[Iterable[int]], **changes) -> "Instance":
        params = dict(
            name=self.name, coords=self.coords, demand=self.demand, capacity=self.capacity,
            fleet=self.fleet, clusters=tuple(tuple(c) for c in clusters), rounding=self.rounding,
            comment=self.comment,
        )
        params.update(changes)
        return Instance(**params)


def edge_cost(inst: Instance, i: int, j: int) -> float:
    """Euclidean distance between vertices i and j under the instance rounding mode."""
    if i == j:
        return 0.0
    (x1, y1), (x2, y2) = inst.coords[i], inst.coords[j]
    d = math.hypot(x1 - x2, y1 - y2)
    if inst.rounding == "nint":
        return float(math.floor(d + 0.5))
    return d


def singleton_clusters(n: int) -> tuple[tuple[int, ...], ...]:
    return tuple((v,) for v in range(1, n + 1))


def min_fleet(inst: Instance) -> int:
    """First-fit-decreasing bin count of cluster demands (an upper bound on the minimum fleet)."""
    bins: list[int] = []
    for load in sorted(inst.cluster_demand.tolist(), reverse=True):
        for b, used in enumerate(bins):
            if used + load <= inst.capacity:
                bins[b] += load
                break
        else:
            bins.append(load)
    return len(bins)


# -- parsing ------------------------------------------------------------------


def _parse_number(tok: str, lineno: int, kind=float):
    try:
        return kind(tok)
    except ValueError:
        raise InstanceError(f"expected a number, got {tok!r}", lineno) from None


def parse_instance(text: str) -> Instance:
    """Parse a TSPLIB-style CVRP/CluVRP file.

    Files without GVRP_SET_SECTION are read as plain CVRP instances where every
    customer forms its own cluster.
    """
    header: dict[str, str] = {}
    coords: dict[int, tuple[float, float]] = {}
    demands: dict[int, int] = {}
    demand_lines: dict[int, int] = {}
    sets: list[tuple[int, list[int]]] = []
    depots: list[int] = []
    section = None
    section_line = 0
    pending_set: list[int] | None = None
    pending_set_line = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if upper == "EOF":
            break
        if upper.endswith("_SECTION"):
            if pending_set is not None:
                raise InstanceError("GVRP set not terminated by -1", pending_set_line)
            section = upper
            section_line = lineno
            if section not in ("NODE_COORD_SECTION", "DEMAND_SECTION", "GVRP_SET_SECTION", "DEPOT_SECTION"):
                raise InstanceError(f"unsupported section {section}", lineno)
            continue
        if section is None or (":" in line and not line[0].isdigit() and line[0] != "-"):
            if ":" not in line:
                raise InstanceError(f"malformed header line {line!r}", lineno)
            key, value = line.split(":", 1)
            header[key.strip().upper()] = value.strip()
            section = None
            continue

        toks = line.split()
        if section == "NODE_COORD_SECTION":
            if len(toks) != 3:
                raise InstanceError("coordinate line needs 'id x y'", lineno)
            nid = _parse_number(toks[0], lineno, int)
            if nid in coords:
                raise InstanceError(f"duplicate coordinates for node {nid}", lineno)
            coords[nid] = (_parse_number(toks[1], lineno), _parse_number(toks[2], lineno))
        elif section == "DEMAND_SECTION":
            if len(toks) != 2:
                raise InstanceError("demand line needs 'id demand'", lineno)
            nid = _parse_number(toks[0], lineno, int)
            demands[nid] = _parse_number(toks[1], lineno, int)
            demand_lines[nid] = lineno
        elif section == "GVRP_SET_SECTION":
            vals = [_parse_number(t, lineno, int) for t in toks]
            if pending_set is None:
                pending_set = vals
                pending_set_line = lineno
            else:
                pending_set.extend(vals)
            if pending_set and pending_set[-1] == -1:
                if len(pending_set) < 2:
                    raise InstanceError("GVRP set line without set id", pending_set_line)
                sets.append((pending_set_line, pending_set[:-1]))
                pending_set = None
        elif section == "DEPOT_SECTION":
            for t in toks:
                v = _parse_number(t, lineno, int)
                if v != -1:
                    depots.append(v)
    if pending_set is not None:
        raise InstanceError("GVRP set not terminated by -1", pending_set_line)

    try:
        dim = int(header["DIMENSION"])
        capacity = int(header["CAPACITY"])
    except KeyError as exc:
        raise InstanceError(f"missing header field {exc.args[0]}") from None
    except ValueError:
        raise InstanceError("DIMENSION and CAPACITY must be integers") from None
    weight_type = header.get("EDGE_WEIGHT_TYPE", "EUC_2D").upper()
    if weight_type not in _WEIGHT_TYPES:
        raise InstanceError(f"unsupported EDGE_WEIGHT_TYPE {weight_type}")
    if len(coords) != dim:
        raise InstanceError(f"DIMENSION is {dim} but {len(coords)} coordinates were given", section_line)
    ids = sorted(coords)
    if ids != list(range(ids[0], ids[0] + dim)):
        raise InstanceError("node ids must be consecutive")
    if len(depots) > 1:
        raise InstanceError("multiple depots are not supported")
    depot = depots[0] if depots else ids[0]
    if depot not in coords:
        raise InstanceError(f"depot {depot} has no coordinates")

    order = [depot] + [v for v in ids if v != depot]
    index = {nid: k for k, nid in enumerate(order)}

    demand = np.zeros(dim, dtype=np.int64)
    for nid, q in demands.items():
        if nid not in index:
            raise InstanceError(f"demand for unknown node {nid}", demand_lines.get(nid))
        if nid == depot:
            if q != 0:
                raise InstanceError("depot demand must be zero", demand_lines.get(nid))
            continue
        if q <= 0:
            raise InstanceError(f"customer {nid} has non-positive demand {q}", demand_lines.get(nid))
        demand[index[nid]] = q
    for nid in order[1:]:
        if nid not in demands:
            raise InstanceError(f"missing demand for node {nid}")

    if sets:
        clusters = []
        owner: dict[int, int] = {}
        for lineno, vals in sets:
            members = vals[1:]
            if members == [depot]:
                continue
            if not members:
                raise InstanceError(f"GVRP set {vals[0]} is empty", lineno)
            cluster = []
            for nid in members:
                if nid not in index:
                    raise InstanceError(f"GVRP set {vals[0]} references unknown node {nid}", lineno)
                if nid == depot:
                    raise InstanceError("depot cannot share a GVRP set with customers", lineno)
                if nid in owner:
                    raise InstanceError(
                        f"duplicate cluster membership: node {nid} in sets {owner[nid]} and {vals[0]}", lineno
                    )
                owner[nid] = vals[0]
                cluster.append(index[nid])
            load = int(demand[cluster].sum())
            if load > capacity:
                raise InstanceError(f"GVRP set {vals[0]} demand {load} exceeds capacity {capacity}", lineno)
            clusters.append(tuple(sorted(cluster)))
        missing = [nid for nid in order[1:] if nid not in owner]
        if missing:
            raise InstanceError(f"nodes without a GVRP set: {missing[:10]}")
    else:
        clusters = list(singleton_clusters(dim - 1))

    if "VEHICLES" in header:
        fleet = int(header["VEHICLES"])
    else:
        fleet = max(1, math.ceil(int(demand.sum()) / capacity))
    coord_arr = np.array([coords[nid] for nid in order], dtype=float)
    return Instance(
        name=header.get("NAME", "unnamed"),
        coords=coord_arr,
        demand=demand,
        capacity=capacity,
        fleet=fleet,
        clusters=tuple(clusters),
        rounding=_WEIGHT_TYPES[weight_type],
        comment=header.get("COMMENT", ""),
    )



def _fmt(x: float) -> str:
    return repr(int(x)) if float(x).is_integer() else repr(float(x))


def write_instance(inst: Instance) -> str:
    """Serialize to the canonical text format; the depot set is written first as set 1."""
    if not inst.clusters:
        raise InstanceError("refusing to serialize an instance without clusters")
    inst.validate()
    weight_type = {v: k for k, v in _WEIGHT_TYPES.items()}[inst.rounding]
    lines = [
        f"NAME : {inst.name}",
    ]
    if inst.comment:
        lines.append(f"COMMENT : {inst.comment}")
    lines += [
        "TYPE : CluVRP",
        f"DIMENSION : {inst.n + 1}",
        f"VEHICLES : {inst.fleet}",
        f"GVRP_SETS : {inst.num_sets}",
        f"CAPACITY : {inst.capacity}",
        f"EDGE_WEIGHT_TYPE : {weight_type}",
        "NODE_COORD_SECTION",
    ]
    for v, (x, y) in enumerate(inst.coords):
        lines.append(f"{v + 1} {_fmt(x)} {_fmt(y)}")
    lines.append("GVRP_SET_SECTION")
    lines.append("1 1 -1")
    for k, members in enumerate(inst.clusters):
        lines.append(" ".join(str(t) for t in [k + 2, *(v + 1 for v in members), -1]))
    lines.append("DEMAND_SECTION")
    for v, q in enumerate(inst.demand):
        lines.append(f"{v + 1} {int(q)}")
    lines += ["DEPOT_SECTION", "1", "-1", "EOF", ""]
    return "\n".join(lines)


def read_instance(path) -> Instance:
    with open(path) as fh:
        return parse_instance(fh.read())


def save_instance(inst: Instance, path) -> None:
    with open(path, "w") as fh:
        fh.write(write_instance(inst))


# -- generation ---------------------------------------------------------------


def num_clusters_for(n: int, theta: float) -> int:
    """Customer clusters for n customers at mean set size theta.

    Benchmark tables count the depot as a set of its own and use
    ceil((n + 1) / theta) sets, so one set is subtracted here.
    """
    return max(1, math.ceil((n + 1) / theta - 1e-9) - 1)


def random_cvrp(
    n: int,
    seed: int,
    *,
    capacity: int = 100,
    demand_range: tuple[int, int] = (1, 30),
    grid: float = 1000.0,
    fleet: int | None = None,
    rounding: str = "nint",
    name: str | None = None,
) -> Instance:
    """Uniform random CVRP instance (singleton clusters), depot at a random point."""
    rng = np.random.default_rng(seed)
    coords = rng.integers(0, int(grid) + 1, size=(n + 1, 2)).astype(float)
    demand = np.zeros(n + 1, dtype=np.int64)
    demand[1:] = rng.integers(demand_range[0], demand_range[1] + 1, size=n)
    if fleet is None:
        fleet = max(1, math.ceil(int(demand.sum()) / capacity))
    return Instance(
        name=name or f"rnd-n{n}-s{seed}",
        coords=coords,
        demand=demand,
        capacity=capacity,
        fleet=fleet,
        clusters=singleton_clusters(n),
        rounding=rounding,
    )


def generate_clustered(cvrp: Instance, theta: float, seed: int, *, fleet: int | None = None) -> Instance:
    """Partition the customers of ``cvrp`` into geographically coherent clusters.

    Seeds are picked by max-min dispersion (first seed drawn at random), every
    customer joins its nearest seed, then customers are moved out of
    over-capacity clusters to the nearest cluster that can take them.
    """
    if theta < 1:
        raise InstanceError("theta must be >= 1")
    n = cvrp.n
    k = min(n, num_clusters_for(n, theta))
    if k == n:
        clusters = singleton_clusters(n)
    else:
        clusters = _disperse_and_assign(cvrp, k, np.random.default_rng(seed))
    if fleet is None:
        probe = cvrp.with_clusters(clusters, fleet=max(cvrp.fleet, 1), name=cvrp.name)
        fleet = max(cvrp.fleet, min_fleet(probe))
    suffix = f"-t{theta:g}" if theta != 1 else ""
    return cvrp.with_clusters(clusters, fleet=fleet, name=f"{cvrp.name}{suffix}")


def _disperse_and_assign(cvrp: Instance, k: int, rng: np.random.Generator) -> tuple[tuple[int, ...], ...]:
    n = cvrp.n
    dist = cvrp.costs if cvrp.rounding == "exact" else _exact_dist(cvrp.coords)
    customers = np.arange(1, n + 1)
    seeds = [int(rng.integers(1, n + 1))]
    nearest = dist[seeds[0], customers].copy()
    while len(seeds) < k:
        nearest[np.array(seeds) - 1] = -1.0
        nxt = int(customers[np.argmax(nearest)])
        seeds.append(nxt)
        nearest = np.minimum(nearest, dist[nxt, customers])
    seed_arr = np.array(seeds)
    assign = np.argmin(dist[np.ix_(customers, seed_arr)], axis=1)
    assign[seed_arr - 1] = np.arange(k)

    demand = cvrp.demand
    Q = cvrp.capacity
    members = [set(np.flatnonzero(assign == c) + 1) for c in range(k)]
    load = np.array([demand[list(m)].sum() for m in members])
    is_seed = set(seeds)
    for _ in range(10 * n):
        over = np.flatnonzero(load > Q)
        if over.size == 0:
            break
        c = int(over[0])
        best = None
        for v in sorted(members[c] - is_seed):
            for d in range(k):
                if d == c or load[d] + demand[v] > Q:
                    continue
                gap = min(dist[v, u] for u in members[d])
                if best is None or gap < best[0]:
                    best = (gap, v, d)
        if best is None:
            raise InstanceError("cannot repair clustering: no customer can move to a cluster with spare capacity")
        _, v, d = best
        members[c].remove(v)
        members[d].add(v)
        load[c] -= demand[v]
        load[d] += demand[v]
    else:
        raise InstanceError("cluster capacity repair did not converge")
    return tuple(tuple(sorted(int(v) for v in m)) for m in members)


def _exact_dist(coords: np.ndarray) -> np.ndarray:
    diff = coords[:, None, :] - coords[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))

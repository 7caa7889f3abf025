import numpy as np
import pytest

from cluvrp.concat import Engine
from cluvrp.hampath import compute_path_table
from cluvrp.ils import _cluster_state, initial_solution
from cluvrp.instance import Instance, generate_clustered, random_cvrp
from cluvrp.neighborhoods import (
    EDUCATION,
    GENERATORS,
    INTRA_ROUTE,
    NL_C,
    RouteState,
    best_move,
    choose_M,
    endpoints_search,
    enumerate_cluster_moves,
    enumerate_moves,
    intra_cluster_search,
    m_penalty_costs,
    penalized_edge_count,
)
from cluvrp.solution import check_solution

from oracles import distance_matrix, seq_cost

ALL_KINDS = sorted(GENERATORS)


@pytest.fixture(scope="module")
def inst():
    return generate_clustered(random_cvrp(48, 21, capacity=120), 4, 3)


@pytest.fixture(scope="module")
def engine(inst):
    return Engine.from_table(inst, compute_path_table(inst))


def _state(inst, engine, seed, penalty=None):
    rng = np.random.default_rng(seed)
    perm = rng.permutation(inst.num_clusters).tolist()
    cuts = sorted(rng.choice(np.arange(1, len(perm)), size=inst.fleet - 1, replace=False).tolist())
    routes = [perm[a:b] for a, b in zip([0, *cuts], [*cuts, len(perm)])]
    return RouteState(engine, routes, inst.capacity, inst.fleet, penalty)


def test_swap11_count():
    coords = np.random.default_rng(0).integers(0, 50, size=(5, 2)).astype(float)
    inst = Instance("c", coords, np.array([0, 1, 1, 1, 1]), 10, 2, ((1,), (2,), (3,), (4,)))
    eng = Engine.from_table(inst, compute_path_table(inst))
    state = RouteState(eng, [[0, 1], [2, 3]], inst.capacity, inst.fleet)
    assert len(list(enumerate_cluster_moves(state, "swap11"))) == 4


def test_best_swap11_matches_exhaustive(inst, engine):
    for seed in range(5):
        state = _state(inst, engine, seed, penalty=1000.0)
        mv = best_move(state, "swap11")
        base = state.total()
        best = 0.0
        routes = state.routes
        for r1 in range(len(routes)):
            for r2 in range(r1 + 1, len(routes)):
                for i in range(len(routes[r1])):
                    for j in range(len(routes[r2])):
                        a, b = list(routes[r1]), list(routes[r2])
                        a[i], b[j] = b[j], a[i]
                        trial = [list(r) for r in routes]
                        trial[r1], trial[r2] = a, b
                        other = RouteState(engine, [r for r in trial if r], inst.capacity, inst.fleet, 1000.0)
                        best = min(best, other.total() - base)
        if best < -1e-6:
            assert mv is not None and mv.delta == pytest.approx(best, abs=1e-9)
        else:
            assert mv is None


def test_identity_moves_skipped(inst, engine):
    state = _state(inst, engine, 1)
    for kind in ALL_KINDS:
        for mv in enumerate_moves(state, kind):
            new = {r: state.realize(segs) for r, segs in mv.changes}
            assert any(new[r] != state.routes[r] for r in new), kind


@pytest.mark.parametrize("penalty", [None, 50.0])
def test_applied_change_equals_delta(inst, engine, penalty):
    rng = np.random.default_rng(7)
    for seed in range(6):
        state = _state(inst, engine, seed, penalty)
        for kind in ALL_KINDS:
            moves = list(enumerate_moves(state, kind))
            for idx in rng.choice(len(moves), size=min(8, len(moves)), replace=False) if moves else []:
                mv = moves[int(idx)]
                trial = state.copy()
                before = trial.total()
                trial.apply(mv)
                assert trial.total() - before == mv.delta, kind
                rebuilt = RouteState(engine, trial.nonempty(), inst.capacity, inst.fleet, penalty)
                assert rebuilt.total() == trial.total()


def test_moves_respect_hard_capacity(inst, engine):
    state = _state(inst, engine, 3)
    for kind in NL_C:
        for mv in enumerate_moves(state, kind):
            for r, segs in mv.changes:
                assert sum(state.seg_load(s) for s in segs) <= inst.capacity


def test_scalar_pricing_matches_concatenation(inst):
    eng = Engine.vertex_level(inst)
    rng = np.random.default_rng(4)
    perm = (rng.permutation(inst.n)).tolist()
    routes = [perm[i::inst.fleet] for i in range(inst.fleet)]
    state = RouteState(eng, routes, 10**6, inst.fleet)
    for kind in ALL_KINDS:
        for mv in list(enumerate_moves(state, kind))[:200]:
            for r, segs in mv.changes:
                fast, load = state.evaluate(segs)
                items = state.realize(segs)
                assert fast == eng.route_cost(items)
                assert load == sum(eng.loads[k] for k in items)


def test_cluster_moves_keep_contiguity(inst, engine):
    state = _state(inst, engine, 2, penalty=100.0)
    rng = np.random.default_rng(0)
    for kind in EDUCATION + INTRA_ROUTE:
        moves = list(enumerate_moves(state, kind))
        if not moves:
            continue
        state.apply(moves[int(rng.integers(len(moves)))])
        decoded = state.decode()
        owner = inst.cluster_of
        for route in decoded:
            seen = []
            for v in route:
                k = int(owner[v])
                if not seen or seen[-1] != k:
                    assert k not in seen
                    seen.append(k)


def _ils_clu_state(inst, seed):
    sol = initial_solution(inst, np.random.default_rng(seed))
    return _cluster_state(inst, sol.routes)


@pytest.mark.parametrize("search", [endpoints_search, intra_cluster_search])
def test_intra_cluster_descents(inst, engine, search):
    for seed in range(4):
        state = _ils_clu_state(inst, seed)
        before = state.total()
        search(state)
        after = state.total()
        assert after <= before
        # bounded below by exact decoding with optimal paths
        exact = sum(engine.route_cost(r) for r in state.routes)
        assert after >= exact
        # the decoded routes cost what the state claims
        assert check_solution(inst, state.decode()) == after
        # fixed point
        snapshot = [state.engine.path(k) for k in range(inst.num_clusters)]
        assert not search(state)
        assert [state.engine.path(k) for k in range(inst.num_clusters)] == snapshot


def test_endpoint_search_cannot_beat_optimal_pair():
    coords = np.array([[0, 0], [10, 0], [11, 4], [10, 8]], dtype=float)
    inst = Instance("e", coords, np.array([0, 1, 1, 1]), 5, 1, ((1, 2, 3),))
    state = _cluster_state(inst, [[2, 1, 3]])
    endpoints_search(state)
    eng = Engine.from_table(inst, compute_path_table(inst))
    assert state.total() >= eng.route_cost([0])
    assert state.total() <= seq_cost(distance_matrix(inst), [0, 2, 1, 3, 0])


def test_m_penalty_costs(inst):
    M = 1000.0
    Cp = m_penalty_costs(inst, M)
    C = inst.costs
    owner = inst.cluster_of
    k = inst.clusters[0]
    if len(k) > 1:
        assert Cp[k[0], k[1]] == C[k[0], k[1]]
    assert Cp[0, 5] == C[0, 5] + M
    a, b = inst.clusters[0][0], inst.clusters[1][0]
    assert owner[a] != owner[b] and Cp[a, b] == C[a, b] + M
    assert Cp[0, 0] == 0
    with pytest.raises(ValueError):
        m_penalty_costs(inst, 0)


def test_choose_M_unit_square():
    rng = np.random.default_rng(0)
    coords = np.vstack([[0, 0], [100, 100], [0, 100], [100, 0], rng.integers(0, 101, size=(17, 2))]).astype(float)
    inst = Instance("sq", coords, np.ones(21, dtype=int) * (np.arange(21) > 0), 100, 1, tuple((v,) for v in range(1, 21)))
    assert inst.costs.max() == 141
    assert choose_M(inst) == 2821
    # M exceeds any n edges and, on this instance, a full customer tour
    assert choose_M(inst) > inst.n * inst.costs.max()
    C = inst.costs
    tour = [0, *range(1, 21), 0]
    assert choose_M(inst) > seq_cost(C, tour)


def test_penalty_identity_on_feasible_solutions(inst):
    M = choose_M(inst)
    Cp = m_penalty_costs(inst, M)
    for seed in range(5):
        sol = initial_solution(inst, np.random.default_rng(seed))
        pen = sum(seq_cost(Cp, [0, *r, 0]) for r in sol.routes)
        used = len(sol.routes)
        assert penalized_edge_count(inst, sol.routes) == used + inst.num_clusters
        assert pen - M * (used + inst.num_clusters) == sol.cost

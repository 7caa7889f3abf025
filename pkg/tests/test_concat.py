import itertools

import numpy as np
import pytest

from cluvrp.concat import (
    DEPOT,
    Engine,
    concat,
    decode_customers,
    evaluate_move_concat,
    init_single,
    preprocess_route_all_pairs,
    route_cost,
)
from cluvrp.hampath import compute_path_table
from cluvrp.instance import Instance, generate_clustered, random_cvrp

from oracles import distance_matrix, fold_direct, layered_route_cost, seq_cost


@pytest.fixture(scope="module")
def setup():
    inst = generate_clustered(random_cvrp(40, 11), 4, 2)
    table = compute_path_table(inst)
    return inst, table, Engine.from_table(inst, table)


def test_init_single_singleton_and_pair():
    coords = np.array([[0, 0], [3, 4], [6, 8], [0, 5]], dtype=float)
    inst = Instance("s", coords, np.array([0, 3, 1, 2]), 10, 1, ((1,), (2, 3)))
    table = compute_path_table(inst)
    eng = Engine.from_table(inst, table)
    s = init_single(eng, 0)
    assert s.S.tolist() == [[0.0]] and s.load == 3
    pair = init_single(eng, 1)
    c = inst.costs[2, 3]
    assert pair.S.tolist() == [[np.inf, c], [c, np.inf]] and pair.load == 3


def test_init_single_matches_table(setup):
    inst, table, eng = setup
    for k, members in enumerate(inst.clusters):
        assert np.array_equal(eng.single(k).S, table.costs[k])
        assert eng.single(k).load == int(inst.demand[list(members)].sum())


def test_concat_two_singletons():
    inst = random_cvrp(5, 1)
    eng = Engine.from_table(inst, compute_path_table(inst))
    ab = concat(eng, eng.single(0), eng.single(3))
    assert ab.S.tolist() == [[inst.costs[1, 4]]]


def test_load_additivity_three_fragments(setup):
    inst, _, eng = setup
    a, b, c = eng.single(0), eng.single(5), eng.single(2)
    assert eng.fold([a, b, c]).load == a.load + b.load + c.load


def test_associativity_and_direct_fold(setup):
    inst, _, eng = setup
    rng = np.random.default_rng(0)
    N = inst.num_clusters
    for _ in range(30):
        a, b, c = (eng.single(int(k)) for k in rng.choice(N, 3, replace=False))
        left = eng.concat(eng.concat(a, b), c)
        right = eng.concat(a, eng.concat(b, c))
        assert np.array_equal(left.S, right.S)
        direct = fold_direct([a.S, b.S, c.S], [eng.cross(a.last, b.first), eng.cross(b.last, c.first)])
        assert np.array_equal(left.S, direct)


def test_route_cost_all_singletons():
    inst = random_cvrp(6, 2)
    eng = Engine.from_table(inst, compute_path_table(inst))
    C = inst.costs
    cost, ends = route_cost(eng, [0, 1, 2])
    assert cost == C[0, 1] + C[1, 2] + C[2, 3] + C[3, 0]
    assert ends == (1, 3)
    assert decode_customers(eng, [0, 1, 2]) == [1, 2, 3]
    assert route_cost(eng, [])[0] == 0.0


def test_route_cost_single_triple_cluster():
    coords = np.array([[0, 0], [10, 0], [12, 3], [9, 5]], dtype=float)
    inst = Instance("t", coords, np.array([0, 1, 1, 1]), 5, 1, ((1, 2, 3),))
    table = compute_path_table(inst)
    eng = Engine.from_table(inst, table)
    C = distance_matrix(inst)
    best = min(
        C[0, a] + C[a, m] + C[m, b] + C[b, 0] for a, b in itertools.permutations((1, 2, 3), 2) for m in {1, 2, 3} - {a, b}
    )
    assert eng.route_cost([0]) == best


def test_decode_pair_cluster():
    coords = np.array([[0, 0], [10, 0], [1, 8]], dtype=float)
    inst = Instance("p", coords, np.array([0, 1, 1]), 5, 1, ((1, 2),))
    eng = Engine.from_table(inst, compute_path_table(inst))
    cost, seq = eng.decode([0])
    C = distance_matrix(inst)
    assert seq in ([1, 2], [2, 1])
    assert cost == seq_cost(C, [0, *seq, 0]) == min(seq_cost(C, [0, 1, 2, 0]), seq_cost(C, [0, 2, 1, 0]))


def test_route_cost_vs_layered_graph(setup):
    inst, table, eng = setup
    rng = np.random.default_rng(1)
    for _ in range(25):
        items = rng.permutation(inst.num_clusters)[: int(rng.integers(1, 6))].tolist()
        assert eng.route_cost(items) == layered_route_cost(inst, items, table.costs)


def test_decode_resummation_and_contiguity(setup):
    inst, _, eng = setup
    C = distance_matrix(inst)
    owner = inst.cluster_of
    rng = np.random.default_rng(2)
    for _ in range(40):
        items = rng.permutation(inst.num_clusters)[:4].tolist()
        cost, seq = eng.decode(items)
        assert cost == seq_cost(C, [0, *seq, 0])
        runs = [k for k, _ in itertools.groupby(int(owner[v]) for v in seq)]
        assert runs == items


def test_all_pairs_table(setup):
    inst, _, eng = setup
    items = [3, 0, 7, 5, 1]
    table = preprocess_route_all_pairs(eng, items)
    assert len(table) == 15
    for (u, v), sub in table.items():
        direct = eng.fold([eng.single(k) for k in items[u - 1 : v]])
        assert np.array_equal(sub.S, direct.S) and sub.load == direct.load
        rev = eng.fold([eng.single(k) for k in reversed(items[u - 1 : v])])
        assert np.array_equal(sub.reversed().S, rev.S)
    single = preprocess_route_all_pairs(eng, [4])
    assert list(single) == [(1, 1)] and np.array_equal(single[1, 1].S, eng.single(4).S)


def test_evaluate_whole_route_and_swap(setup):
    inst, _, eng = setup
    items = [2, 6, 1, 8]
    rt = eng.route_table(items)
    assert evaluate_move_concat(eng, [rt.sub(0, len(items) + 1)]) == eng.route_cost(items)
    # swap positions 2 and 4 through pieces
    pieces = [rt.sub(0, 1), rt.sub(4, 4), rt.sub(3, 3), rt.sub(2, 2), rt.sub(5, 5)]
    assert evaluate_move_concat(eng, pieces) == eng.route_cost([2, 8, 1, 6])


def test_two_opt_star_recombination(setup):
    inst, _, eng = setup
    rng = np.random.default_rng(3)
    for _ in range(50):
        perm = rng.permutation(inst.num_clusters).tolist()
        r1, r2 = perm[:4], perm[4:8]
        t1, t2 = eng.route_table(r1), eng.route_table(r2)
        u, v = int(rng.integers(0, 5)), int(rng.integers(0, 5))
        new1 = evaluate_move_concat(eng, [t1.sub(0, u), t2.sub(v + 1, 5)])
        new2 = evaluate_move_concat(eng, [t2.sub(0, v), t1.sub(u + 1, 5)])
        assert new1 == eng.route_cost(r1[:u] + r2[v:])
        assert new2 == eng.route_cost(r2[:v] + r1[u:])


def test_scalar_engine_flag(setup):
    inst, _, eng = setup
    assert not eng.scalar
    vert = Engine.vertex_level(inst)
    assert vert.scalar
    items = [4, 9, 0, 17]
    rt = vert.route_table(items)
    assert rt.cost == vert.route_cost(items)
    assert rt.sub(1, 3).S[0, 0] == seq_cost(inst.costs, [5, 10, 1])


def test_asymmetric_costs_rejected():
    inst = random_cvrp(4, 3)
    C = inst.costs.copy()
    C[0, 1] += 1
    with pytest.raises(ValueError, match="symmetric"):
        Engine.vertex_level(inst, C)


def test_depot_pseudo_item(setup):
    _, _, eng = setup
    assert eng.depot().first == DEPOT and eng.depot().S.tolist() == [[0.0]]
